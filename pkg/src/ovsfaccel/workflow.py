"""End-to-end helpers shared by the command line and the tests."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .compress import (CompressedLayer, compress_layer, dense_weight_matrix, quantize_alphas,
                       reconstruction_error)
from .engine import conv_reference, im2col, naive_gemm, tiled_gemm
from .exceptions import ValidationError
from .fixedpoint import quantize
from .models import LayerSpec, ModelSpec
from .perf import t_wgen
from .wgen import DesignPoint, per_tile_cycles, simulate_wgen

ACT_FRAC_BITS = 8
WEIGHT_FRAC_BITS = 8


def random_weights(model: ModelSpec, seed=0) -> dict:
    """He-normal filters for every layer, shaped (N_out, N_in, K, K)."""
    rng = np.random.default_rng(seed)
    out = {}
    for l in model.layers:
        std = math.sqrt(2.0 / (l.n_in * l.k * l.k))
        out[l.name] = (rng.standard_normal((l.n_out, l.n_in, l.k, l.k)) * std).astype(np.float32)
    return out


def weights_for(layer: LayerSpec, tensors: dict) -> np.ndarray:
    if layer.name not in tensors:
        raise ValidationError(f"weights file has no tensor for layer {layer.name!r}")
    w = np.asarray(tensors[layer.name])
    shape = (layer.n_out, layer.n_in, layer.k, layer.k)
    if w.shape != shape:
        if w.size == math.prod(shape) and layer.k == 1:
            return w.reshape(shape)
        raise ValidationError(f"layer {layer.name!r}: expected weights {shape}, got {w.shape}")
    return w


@dataclass(frozen=True)
class CompressRow:
    layer: str
    mode: str
    ratio: float
    retained: int
    params_original: int
    params_compressed: int
    max_abs_error: float


def compress_model(model: ModelSpec, tensors: dict, selection="shared", layers=None):
    """Compress every (or every named) layer; returns ``(compressed layers, summary rows)``."""
    chosen = [l for l in model.layers if layers is None or l.name in layers]
    out, rows = [], []
    for l in chosen:
        w = weights_for(l, tensors)
        cl = compress_layer(w, l.ratio if l.compressed else 1.0, l.repr_mode, l.name, selection)
        out.append(cl)
        rows.append(CompressRow(l.name, l.repr_mode, cl.ratio, cl.retained_count, l.n_weights,
                                cl.n_params, reconstruction_error(w, cl)))
    return out, rows


@dataclass(frozen=True)
class LayerCheck:
    layer: str
    mode: str
    wgen_cycles: int
    expected_cycles: int
    aligner: str
    wgen_equal: bool
    cycles_equal: bool
    engine_equal: bool
    conv_equal: bool

    @property
    def passed(self) -> bool:
        return self.wgen_equal and self.cycles_equal and self.engine_equal and self.conv_equal


def _to_filters(w_mat, layer: LayerSpec):
    return w_mat.T.reshape(layer.n_out, layer.n_in, layer.k, layer.k)


def simulate_layer(cl: CompressedLayer, layer: LayerSpec, sigma: DesignPoint, mode="fixed16",
                   rng=None, k_max=None, max_positions=None):
    """Run the generator and the engine for one layer and cross-check both against dense references.

    Returns ``(LayerCheck, WgenTrace)``. In ``fixed16`` mode coefficients and
    activations are 16-bit with 8 fractional bits and every comparison is
    exact; ``float`` mode uses a 1e-4 relative tolerance.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    if mode == "fixed16" and cl.quant is None:
        cl = quantize_alphas(cl, 16, WEIGHT_FRAC_BITS)
    w_sim, trace = simulate_wgen(cl, sigma, k_max=k_max)
    w_dense = dense_weight_matrix(cl)

    n_c = math.ceil(cl.n_out / sigma.T_C)
    expected = t_wgen(layer, sigma) * n_c
    cycles_ok = (trace.total_cycles == expected and
                 all(c == per_tile_cycles(sigma, cl.retained_count) for c in trace.per_tile_cycles))

    x = rng.uniform(-1.0, 1.0, size=(layer.n_in, layer.h, layer.w))
    if mode == "fixed16":
        wgen_ok = bool(np.array_equal(w_sim, w_dense))
        if w_dense.dtype.kind == "f":
            # real-valued generator output is requantized before the engine
            w_sim = quantize(w_sim, 16, WEIGHT_FRAC_BITS)[0]
            w_dense = quantize(w_dense, 16, WEIGHT_FRAC_BITS)[0]
        x = quantize(x, 16, ACT_FRAC_BITS)[0]
        a = im2col(x, layer)
        if max_positions:
            a = a[:max_positions]
        out_eng = tiled_gemm(a, w_sim, sigma, "fixed16")
        out_ref = naive_gemm(a, w_dense)
        engine_ok = bool(np.array_equal(out_eng, out_ref))
        conv = conv_reference(x, layer, _to_filters(w_dense, layer))
        conv_ok = bool(np.array_equal(out_ref, conv.reshape(layer.n_out, -1).T[:len(out_ref)]))
    elif mode == "float":
        scale = max(1.0, float(np.abs(w_dense).max()))
        wgen_ok = bool(np.allclose(w_sim, w_dense, rtol=0, atol=1e-4 * scale))
        a = im2col(x, layer)
        if max_positions:
            a = a[:max_positions]
        out_eng = tiled_gemm(a, w_sim, sigma, "float")
        out_ref = naive_gemm(a, w_dense)
        tol = 1e-4 * max(1.0, float(np.abs(out_ref).max()))
        engine_ok = bool(np.allclose(out_eng, out_ref, rtol=0, atol=tol))
        conv = conv_reference(x, layer, _to_filters(np.asarray(w_dense, dtype=np.float64), layer))
        conv_ok = bool(np.allclose(out_ref, conv.reshape(layer.n_out, -1).T[:len(out_ref)], rtol=0, atol=tol))
    else:
        raise ValidationError(f"mode must be 'float' or 'fixed16', got {mode!r}")
    check = LayerCheck(layer.name, cl.repr_mode, trace.total_cycles, expected, trace.aligner_mode,
                       wgen_ok, cycles_ok, engine_ok, conv_ok)
    return check, trace
