"""Fit OVSF coefficients to pretrained filters, truncate them, rebuild weights.

Every K x K slice (one input channel of one filter) is expressed on a code
set of length ``L``. Because the codes are orthogonal the least-squares fit
is a scaled projection, ``alpha = B @ slice / L``. Layers with 3x3 kernels
are fitted on 16-long codes through a 9x16 operator (crop or average pool).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import fixedpoint
from .exceptions import ConfigurationError, NumericalError, ValidationError
from .ovsf import OvsfBasis, basis_for_length, build_basis
from .validation import (
    basis_length,
    check_filter_bank,
    check_ratio,
    check_repr_mode,
    retained_count,
)

SELECTION_MODES = ("shared", "per_filter")
DEFAULT_RIDGE = 1e-8
# flat 4x4 positions kept by the crop, row-major over the 3x3 target
CROP_INDEX = np.array([r * 4 + c for r in range(3) for c in range(3)])


@dataclass(frozen=True, eq=False)
class ReprOperator:
    matrix: np.ndarray  # 9 x 16
    mode: str


def build_repr_operator(mode: str) -> ReprOperator:
    a = np.zeros((9, 16))
    if mode == "crop4":
        a[np.arange(9), CROP_INDEX] = 1.0
    elif mode == "pool4":
        for i in range(3):
            r0, r1 = (4 * i) // 3, -(-4 * (i + 1) // 3) - 1
            for j in range(3):
                c0, c1 = (4 * j) // 3, -(-4 * (j + 1) // 3) - 1
                rows = range(r0, r1 + 1)
                cols = range(c0, c1 + 1)
                w = 1.0 / (len(rows) * len(cols))
                for r in rows:
                    for c in cols:
                        a[i * 3 + j, r * 4 + c] = w
    else:
        raise ConfigurationError(f"unknown representation operator {mode!r}")
    a.setflags(write=False)
    return ReprOperator(matrix=a, mode=mode)


def slice_project(slice_, basis: OvsfBasis) -> np.ndarray:
    s = np.asarray(slice_, dtype=np.float64)
    if s.shape[-1] != basis.length:
        raise ValidationError(f"slice length {s.shape[-1]} does not match basis length {basis.length}")
    return s @ basis.codes.T.astype(np.float64) / basis.length


def _ridge_solve(g, targets, ridge):
    """Solve ``min ||g @ a - t||^2 + ridge ||a||^2`` for each row ``t`` of targets."""
    n = g.shape[1]
    normal = g.T @ g + ridge * np.eye(n)
    if np.linalg.cond(normal) * np.finfo(float).eps > 1e-2:
        raise NumericalError("normal equations are singular beyond the ridge tolerance")
    return np.linalg.solve(normal, g.T @ targets.T).T


def fit_slice_3x3(fhat, op: ReprOperator, basis: OvsfBasis, ridge=DEFAULT_RIDGE) -> np.ndarray:
    """Fit 16 coefficients so that ``op`` applied to the 4x4 reconstruction gives ``fhat``.

    Accepts a single 3x3 slice or any stack ``(..., 3, 3)``.
    """
    if basis.length != 16:
        raise ConfigurationError(f"3x3 fitting needs a length-16 basis, got {basis.length}")
    f = np.asarray(fhat, dtype=np.float64)
    if f.shape[-2:] != (3, 3):
        raise ValidationError(f"expected 3x3 slices, got shape {f.shape}")
    lead = f.shape[:-2]
    flat = f.reshape(-1, 9)
    if op.mode == "crop4":
        padded = np.zeros((flat.shape[0], 16))
        padded[:, CROP_INDEX] = flat
        alphas = slice_project(padded, basis)
    else:
        g = op.matrix @ basis.codes.T.astype(np.float64)
        alphas = _ridge_solve(g, flat, ridge)
    return alphas.reshape(*lead, 16)


def greedy_truncate(alphas, ratio, selection="shared"):
    """Discard codes with the smallest coefficient magnitude until ``ceil(ratio*L)`` remain.

    ``alphas`` has shape (n_in, n_out, L). Returns ``(retained_indices, kept)``;
    in shared mode the indices are one sorted vector for the whole layer, in
    per-filter mode they have shape (n_in, n_out, J).
    Ties drop the higher code index first.
    """
    a = np.asarray(alphas)
    if a.ndim != 3:
        raise ValidationError(f"alphas must be (n_in, n_out, L), got {a.shape}")
    if not ratio > 0:
        raise ConfigurationError(f"ratio must be > 0, got {ratio}")
    ratio = check_ratio(ratio)
    if selection not in SELECTION_MODES:
        raise ConfigurationError(f"unknown selection mode {selection!r}")
    n_codes = a.shape[-1]
    keep = retained_count(ratio, n_codes)

    if selection == "shared":
        score = np.abs(a).sum(axis=(0, 1))
        alive = list(range(n_codes))
        while len(alive) > keep:
            # min score, ties resolved towards the highest index
            victim = min(alive, key=lambda j: (score[j], -j))
            alive.remove(victim)
        idx = np.array(sorted(alive), dtype=np.int64)
        return idx, a[..., idx]

    mag = np.abs(a)
    # stable sort on (-|alpha|, index) keeps low indices on ties
    order = np.argsort(-mag, axis=-1, kind="stable")[..., :keep]
    idx = np.sort(order, axis=-1)
    return idx, np.take_along_axis(a, idx, axis=-1)


@dataclass(frozen=True, eq=False)
class CompressedLayer:
    """OVSF form of one layer; ``alphas`` is indexed [c_in][c_out][j]."""

    layer_id: str
    repr_mode: str
    kernel_size: int
    n_in: int
    n_out: int
    basis_len: int
    ratio: float
    retained_count: int
    retained_indices: np.ndarray
    alphas: np.ndarray
    selection: str = "shared"
    quant: Optional[fixedpoint.QuantSpec] = None
    raw_weights: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def slice_len(self) -> int:
        return self.kernel_size * self.kernel_size

    @property
    def is_bypass(self) -> bool:
        return self.repr_mode == "bypass"

    @property
    def hardware_mappable(self) -> bool:
        return self.selection == "shared"

    @property
    def n_params(self) -> int:
        if self.is_bypass:
            return int(self.raw_weights.size)
        return self.n_in * self.n_out * self.retained_count

    @property
    def basis(self) -> OvsfBasis:
        return basis_for_length(self.basis_len)


def effective_codes(layer: CompressedLayer) -> np.ndarray:
    """Code images as seen by the weight matrix: (J, Q), or (n_in, n_out, J, Q) per filter.

    Integer (int8) for direct and crop4 layers, real for pool4.
    """
    if layer.is_bypass:
        raise ValidationError(f"layer {layer.layer_id!r} is bypassed and has no codes")
    codes = layer.basis.codes[layer.retained_indices]
    if layer.repr_mode == "direct":
        return codes
    if layer.repr_mode == "crop4":
        return codes[..., CROP_INDEX]
    return codes.astype(np.float64) @ build_repr_operator("pool4").matrix.T


def _slices(layer: CompressedLayer, alphas) -> np.ndarray:
    eff = effective_codes(layer)
    if layer.selection == "shared":
        return np.einsum("ioj,jq->ioq", alphas, eff)
    return np.einsum("ioj,iojq->ioq", alphas, eff)


def reconstruct_layer(layer: CompressedLayer, basis: Optional[OvsfBasis] = None) -> np.ndarray:
    """Rebuild the (N_out, N_in, K, K) float32 filter bank."""
    if basis is not None and not layer.is_bypass and basis.length != layer.basis_len:
        raise ValidationError(f"basis length {basis.length} != layer basis length {layer.basis_len}")
    if layer.is_bypass:
        return layer.raw_weights
    alphas = layer.alphas
    if layer.quant is not None:
        alphas = fixedpoint.dequantize(alphas, layer.quant.frac_bits)
    s = _slices(layer, np.asarray(alphas, dtype=np.float64))
    k = layer.kernel_size
    return s.transpose(1, 0, 2).reshape(layer.n_out, layer.n_in, k, k).astype(np.float32)


def reconstruct_fixed(layer: CompressedLayer) -> np.ndarray:
    """Integer reconstruction (N_out, N_in, K, K) of a quantized, bit-packable layer."""
    if layer.quant is None:
        raise ValidationError("layer is not quantized")
    if layer.repr_mode not in ("direct", "crop4"):
        raise ValidationError(f"{layer.repr_mode} layers have real-valued codes")
    s = _slices(layer, layer.alphas.astype(np.int64))
    k = layer.kernel_size
    return s.transpose(1, 0, 2).reshape(layer.n_out, layer.n_in, k, k)


def dense_weight_matrix(layer: CompressedLayer) -> np.ndarray:
    """P x C weight matrix with row ``c_in * K^2 + k`` and column ``c_out``.

    Integer when the layer is quantized and bit-packable, float64 otherwise.
    """
    if layer.quant is not None and layer.repr_mode in ("direct", "crop4"):
        s = _slices(layer, layer.alphas.astype(np.int64))
    elif layer.is_bypass:
        w = np.asarray(layer.raw_weights, dtype=np.float64)
        return w.reshape(w.shape[0], -1).T
    else:
        alphas = layer.alphas
        if layer.quant is not None:
            alphas = fixedpoint.dequantize(alphas, layer.quant.frac_bits)
        s = _slices(layer, np.asarray(alphas, dtype=np.float64))
    # s is (n_in, n_out, Q) -> rows (c_in, k), columns c_out
    return s.transpose(0, 2, 1).reshape(layer.n_in * layer.slice_len, layer.n_out)


def _fit_full(w, repr_mode, ridge):
    """Full-basis coefficients, shape (n_in, n_out, L)."""
    slices = w.transpose(1, 0, 2, 3).astype(np.float64)  # (n_in, n_out, K, K)
    if repr_mode == "direct":
        k = w.shape[-1]
        basis = basis_for_length(k * k)
        return slice_project(slices.reshape(*slices.shape[:2], -1), basis)
    return fit_slice_3x3(slices, build_repr_operator(repr_mode), build_basis(4), ridge)


def _refit_pool(w, layer: CompressedLayer, ridge):
    """Re-solve pool4 coefficients on the retained codes only."""
    g_full = build_repr_operator("pool4").matrix @ build_basis(4).codes.T.astype(np.float64)
    targets = w.transpose(1, 0, 2, 3).reshape(layer.n_in, layer.n_out, 9).astype(np.float64)
    if layer.selection == "shared":
        g = g_full[:, layer.retained_indices]
        return _ridge_solve(g, targets.reshape(-1, 9), ridge).reshape(layer.n_in, layer.n_out, -1)
    out = np.empty(layer.alphas.shape)
    for i in range(layer.n_in):
        for o in range(layer.n_out):
            g = g_full[:, layer.retained_indices[i, o]]
            out[i, o] = _ridge_solve(g, targets[i, o][None, :], ridge)[0]
    return out


def compress_layer(weights, ratio, repr_mode, layer_id="", selection="shared", ridge=DEFAULT_RIDGE) -> CompressedLayer:
    w = check_filter_bank(weights)
    check_repr_mode(repr_mode)
    ratio = check_ratio(ratio)
    n_out, n_in, k, _ = w.shape
    if repr_mode == "bypass":
        return CompressedLayer(
            layer_id=layer_id, repr_mode="bypass", kernel_size=k, n_in=n_in, n_out=n_out,
            basis_len=0, ratio=1.0, retained_count=0,
            retained_indices=np.zeros(0, dtype=np.int64), alphas=np.zeros((0,)),
            selection=selection, raw_weights=w.copy(),
        )
    length = basis_length(k, repr_mode)
    full = _fit_full(w, repr_mode, ridge)
    idx, kept = greedy_truncate(full, ratio, selection)
    layer = CompressedLayer(
        layer_id=layer_id, repr_mode=repr_mode, kernel_size=k, n_in=n_in, n_out=n_out,
        basis_len=length, ratio=ratio, retained_count=int(idx.shape[-1]),
        retained_indices=idx, alphas=kept, selection=selection,
    )
    if repr_mode == "pool4" and layer.retained_count < length:
        layer = replace(layer, alphas=_refit_pool(w, layer, ridge))
    return layer


def quantize_alphas(layer: CompressedLayer, word_length=16, frac_bits=8) -> CompressedLayer:
    if layer.is_bypass:
        return layer
    src = layer.alphas
    if layer.quant is not None:
        src = fixedpoint.dequantize(src, layer.quant.frac_bits)
    ints, n_sat = fixedpoint.quantize(src, word_length, frac_bits)
    return replace(layer, alphas=ints, quant=fixedpoint.QuantSpec(word_length, frac_bits, n_sat))


def reconstruction_error(weights, layer: CompressedLayer) -> float:
    """Max absolute difference between ``weights`` and the rebuilt filters."""
    return float(np.max(np.abs(reconstruct_layer(layer).astype(np.float64) - np.asarray(weights, dtype=np.float64))))


def count_params(model, schedule=None):
    """Return ``(original, compressed)`` parameter counts for a model spec."""
    from .models import apply_schedule

    if schedule is not None:
        model = apply_schedule(model, schedule)
    original = compressed = 0
    for layer in model.layers:
        bias = layer.n_out if layer.bias else 0
        full = layer.n_in * layer.n_out * layer.k * layer.k
        original += full + bias
        if layer.repr_mode == "bypass":
            compressed += full + bias
        else:
            compressed += layer.n_in * layer.n_out * layer.retained_count + bias
    return original, compressed


class OvsfCompressor(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` learns which codes to keep for a filter bank.

    ``transform`` maps filter banks of the same shape to coefficients on the
    retained codes and ``inverse_transform`` rebuilds filters from them.

    Parameters
    ----------
    ratio : float in (0, 1]
    repr_mode : {'direct', 'crop4', 'pool4'}
    selection : {'shared', 'per_filter'}
    ridge : float
        Regularisation for the pool4 normal equations.
    word_length, frac_bits : int or None
        Quantize the fitted coefficients when both are set.
    """

    def __init__(self, ratio=1.0, repr_mode="direct", selection="shared", ridge=DEFAULT_RIDGE,
                 word_length=None, frac_bits=None):
        self.ratio = ratio
        self.repr_mode = repr_mode
        self.selection = selection
        self.ridge = ridge
        self.word_length = word_length
        self.frac_bits = frac_bits

    def fit(self, X, y=None):
        if self.repr_mode == "bypass":
            raise ConfigurationError("OvsfCompressor does not support bypass mode")
        layer = compress_layer(X, self.ratio, self.repr_mode, selection=self.selection, ridge=self.ridge)
        if self.word_length is not None and self.frac_bits is not None:
            layer = quantize_alphas(layer, self.word_length, self.frac_bits)
        self.layer_ = layer
        self.retained_indices_ = layer.retained_indices
        self.n_params_ = layer.n_params
        self.n_features_in_ = int(np.prod(np.shape(X)[1:]))
        return self

    def transform(self, X):
        check_is_fitted(self, "layer_")
        w = check_filter_bank(X)
        if w.shape != (self.layer_.n_out, self.layer_.n_in, self.layer_.kernel_size, self.layer_.kernel_size):
            raise ValidationError(f"expected filter bank shape of the fitted layer, got {w.shape}")
        if self.repr_mode == "pool4":
            return _refit_pool(w, self.layer_, self.ridge)
        full = _fit_full(w, self.repr_mode, self.ridge)
        if self.layer_.selection == "shared":
            return full[..., self.layer_.retained_indices]
        return np.take_along_axis(full, self.layer_.retained_indices, axis=-1)

    def fit_transform(self, X, y=None, **fit_params):
        self.fit(X)
        a = self.layer_.alphas
        if self.layer_.quant is not None:
            a = fixedpoint.dequantize(a, self.layer_.quant.frac_bits)
        return np.asarray(a, dtype=np.float64)

    def inverse_transform(self, X):
        check_is_fitted(self, "layer_")
        a = np.asarray(X, dtype=np.float64)
        if a.shape != self.layer_.alphas.shape:
            raise ValidationError(f"coefficient shape {a.shape} != fitted {self.layer_.alphas.shape}")
        return reconstruct_layer(replace(self.layer_, alphas=a, quant=None))
