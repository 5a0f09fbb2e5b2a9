"""Tiled GEMM engine with output-stationary dataflow and input-selective PEs."""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ConfigurationError, ValidationError
from .fixedpoint import check_accumulator
from .models import LayerSpec, WorkloadTuple, output_size


def _pad(x, layer):
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[0] != layer.n_in:
        raise ValidationError(f"input must be (N_in={layer.n_in}, H, W), got {x.shape}")
    p = layer.padding
    return np.pad(x, ((0, 0), (p, p), (p, p)))


def im2col(x, layer: LayerSpec) -> np.ndarray:
    """Unroll sliding windows into an R x P matrix.

    Rows run over output positions row-major; columns are ordered
    ``c_in * K^2 + kh * K + kw``.
    """
    xp = _pad(x, layer)
    k, s = layer.k, layer.stride
    ho = output_size(x.shape[1], k, layer.padding, s)
    wo = output_size(x.shape[2], k, layer.padding, s)
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s][:, :ho, :wo]
    # win: (n_in, ho, wo, k, k) -> (ho, wo, n_in, k, k)
    return win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, layer.n_in * k * k)


def conv_reference(x, layer: LayerSpec, weights) -> np.ndarray:
    """Direct convolution, output shape (N_out, H_out, W_out)."""
    w = np.asarray(weights)
    if w.shape != (layer.n_out, layer.n_in, layer.k, layer.k):
        raise ValidationError(f"weights must be {(layer.n_out, layer.n_in, layer.k, layer.k)}, got {w.shape}")
    xp = _pad(x, layer)
    k, s = layer.k, layer.stride
    ho = output_size(x.shape[1], k, layer.padding, s)
    wo = output_size(x.shape[2], k, layer.padding, s)
    dtype = np.result_type(xp.dtype, w.dtype, np.float64 if xp.dtype.kind == "f" else np.int64)
    out = np.zeros((layer.n_out, ho, wo), dtype=dtype)
    for kh in range(k):
        for kw in range(k):
            patch = xp[:, kh:kh + s * (ho - 1) + 1:s, kw:kw + s * (wo - 1) + 1:s]
            out += np.einsum("oi,ihw->ohw", w[:, :, kh, kw].astype(dtype), patch.astype(dtype))
    return out


def weights_to_matrix(weights) -> np.ndarray:
    """(N_out, N_in, K, K) filters -> P x C matrix matching :func:`im2col` columns."""
    w = np.asarray(weights)
    return w.reshape(w.shape[0], -1).T


def naive_gemm(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype.kind in "iu" and b.dtype.kind in "iu":
        return a.astype(np.int64) @ b.astype(np.int64)
    return a.astype(np.float64) @ b.astype(np.float64)


INT16_MIN, INT16_MAX = -(1 << 15), (1 << 15) - 1


def tiled_gemm(a, b, sigma, mode="float") -> np.ndarray:
    """Output-stationary blocked GEMM.

    Each T_R x T_C output tile keeps its partial sums resident while the
    ceil(P / T_P) input and weight tiles stream past. ``mode='fixed16'``
    takes integer operands in int16 range and accumulates in 32 bits,
    raising :class:`AccumulatorOverflowError` instead of wrapping.
    """
    a, b = np.asarray(a), np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValidationError(f"shape mismatch: {a.shape} x {b.shape}")
    if mode == "float":
        a, b, dtype = a.astype(np.float64), b.astype(np.float64), np.float64
    elif mode == "fixed16":
        for name, m in (("activations", a), ("weights", b)):
            if m.dtype.kind not in "iu":
                raise ValidationError(f"fixed16 {name} must be integer, got {m.dtype}")
            if m.size and (m.min() < INT16_MIN or m.max() > INT16_MAX):
                raise ValidationError(f"fixed16 {name} exceed the int16 range")
        a, b, dtype = a.astype(np.int64), b.astype(np.int64), np.int64
    else:
        raise ConfigurationError(f"unknown GEMM mode {mode!r}")
    R, P = a.shape
    C = b.shape[1]
    TR, TP, TC = sigma.T_R, sigma.T_P, sigma.T_C
    out = np.zeros((R, C), dtype=dtype)
    for r0 in range(0, R, TR):
        for c0 in range(0, C, TC):
            acc = np.zeros((min(TR, R - r0), min(TC, C - c0)), dtype=dtype)
            for p0 in range(0, P, TP):
                acc += a[r0:r0 + TR, p0:p0 + TP] @ b[p0:p0 + TP, c0:c0 + TC]
                if mode == "fixed16":
                    check_accumulator(acc, 32, "output-tile accumulator")
            out[r0:r0 + TR, c0:c0 + TC] = acc
    return out


# --- cycle models ----------------------------------------------------------

def _n_p(w, sigma):
    return math.ceil(w.P / sigma.T_P)


def cycles_baseline(w: WorkloadTuple, sigma) -> int:
    """Cycles per output tile: every row of T_R passes each of the P tiles once."""
    return sigma.T_R * _n_p(w, sigma)


def active_columns(w: WorkloadTuple, sigma, c_tile=None) -> int:
    """Busy PE count for a column tile: C itself, or the tail width when C > T_C."""
    if c_tile is not None:
        return c_tile
    if w.C <= sigma.T_C:
        return w.C
    return w.C % sigma.T_C or sigma.T_C


def selective_formula(w: WorkloadTuple, sigma, c_tile=None) -> int:
    """Unclamped closed form for the input-selective engine."""
    ci = active_columns(w, sigma, c_tile)
    tc, tr = sigma.T_C, sigma.T_R
    idle = tc - ci
    return (idle + math.ceil((tr * ci - idle * (ci + 1)) / tc)) * _n_p(w, sigma)


def cycles_selective(w: WorkloadTuple, sigma, c_tile=None) -> int:
    """Per-output-tile cycles with work stealing, clamped to [work bound, baseline]."""
    ci = active_columns(w, sigma, c_tile)
    base = cycles_baseline(w, sigma)
    if ci >= sigma.T_C:
        return base
    lower = math.ceil(sigma.T_R * ci / sigma.T_C) * _n_p(w, sigma)
    return max(lower, min(base, selective_formula(w, sigma, c_tile)))


def schedule_sim_pass(rows: int, busy: int, n_pe: int) -> int:
    """Completion cycle of one weight-tile pass with neighbour work stealing.

    PEs ``0..busy-1`` own one output column each and walk their rows top-down.
    The ``n_pe - busy`` augmented PEs get weights shifted one hop per cycle
    from the array edge, a different column each cycle, and steal rows
    bottom-up. Their input switches engage together once the shift chain is
    full, ``n_pe - busy`` cycles after the pass starts. Helpers claim rows in
    PE index order.
    """
    idle = n_pe - busy
    if idle <= 0:
        return rows
    top = np.zeros(busy, dtype=np.int64)
    bottom = np.full(busy, rows - 1, dtype=np.int64)
    d = np.arange(idle)
    t = 0
    while np.any(top <= bottom):
        t += 1
        top += top <= bottom
        if t >= idle:
            cols = (t - 1 - d) % busy
            remaining = np.maximum(bottom - top + 1, 0)
            take = np.minimum(np.bincount(cols, minlength=busy), remaining)
            bottom -= take
    return t


def schedule_sim(w: WorkloadTuple, sigma, selective=True, c_tile=None) -> int:
    """Discrete simulation of one output tile; each P tile is a fresh pass."""
    ci = active_columns(w, sigma, c_tile)
    if not selective or ci >= sigma.T_C:
        return cycles_baseline(w, sigma)
    return schedule_sim_pass(sigma.T_R, ci, sigma.T_C) * _n_p(w, sigma)


def augmented_pes(workloads, sigma) -> int:
    """Number of PEs that idle in at least one column tile of some layer."""
    narrowest = sigma.T_C
    for w in workloads:
        widths = [min(w.C, sigma.T_C)]
        if w.C > sigma.T_C and w.C % sigma.T_C:
            widths.append(w.C % sigma.T_C)
        narrowest = min(narrowest, *widths)
    return sigma.T_C - narrowest
