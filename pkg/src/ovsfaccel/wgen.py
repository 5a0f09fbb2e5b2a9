"""Tiled weights generation: Alpha-buffer geometry, OVSF FIFO + aligner, and
two executable models of the generator.

``tiwgen_reference`` walks tiles and M-wide subtiles and sums the retained
code images weighted by their coefficients. ``simulate_wgen`` steps the same
schedule one cycle at a time through a FIFO of packed codes, the circular
aligner, port-limited coefficient fetches and the M-wide multiply and add
arrays. Subtiles are laid out column-major inside each T_P x T_C tile, and
tiles are visited column-block by column-block.
"""
from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .compress import CompressedLayer, effective_codes
from .exceptions import ConfigurationError, InvariantError, NotMappableError, ValidationError
from .fixedpoint import check_accumulator, dequantize
from .ovsf import bits_to_signs, pack_code


@dataclass(frozen=True, order=True)
class DesignPoint:
    M: int
    T_R: int
    T_P: int
    T_C: int

    def __post_init__(self):
        for name in ("M", "T_R", "T_P", "T_C"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigurationError(f"design point {name} must be an integer >= 1, got {v!r}")

    @classmethod
    def parse(cls, text: str) -> "DesignPoint":
        try:
            parts = [int(x) for x in str(text).replace(" ", "").split(",")]
        except ValueError:
            raise ConfigurationError(f"sigma must be 'M,TR,TP,TC', got {text!r}") from None
        if len(parts) != 4:
            raise ConfigurationError(f"sigma must have four fields M,TR,TP,TC, got {text!r}")
        return cls(*parts)

    def __str__(self):
        return f"{self.M},{self.T_R},{self.T_P},{self.T_C}"


# --- Alpha buffer ----------------------------------------------------------

@dataclass(frozen=True)
class AlphaBufferGeom:
    n_f: int        # filters touched per subtile == read ports
    depth: int      # words per port
    capacity: int   # alpha values stored


def filters_per_subtile(M: int, T_P: int, k_max: int) -> int:
    k2 = k_max * k_max
    return math.ceil(min(T_P, M) / k2) * (M // T_P) + (M % T_P) * math.ceil(M / k2)


def alpha_geometry(layers, sigma: DesignPoint, k_max: int) -> AlphaBufferGeom:
    """Port count and depth for holding the coefficients of ``layers``.

    ``layers`` may hold LayerSpec or CompressedLayer items; bypassed ones
    contribute nothing.
    """
    if k_max < 1:
        raise ConfigurationError(f"k_max must be >= 1, got {k_max}")
    n_f = filters_per_subtile(sigma.M, sigma.T_P, k_max)
    capacity = 0
    for l in layers:
        mode = l.repr_mode
        if mode != "bypass":
            capacity += l.n_in * l.n_out * l.retained_count
    return AlphaBufferGeom(n_f=n_f, depth=math.ceil(capacity / n_f), capacity=capacity)


# --- OVSF generator --------------------------------------------------------

def rotate_bits(v: int, r: int, q: int) -> int:
    """Rotate so that bit ``i`` of the result is bit ``(i + r) mod q`` of ``v``."""
    r %= q
    if r == 0:
        return v
    mask = (1 << q) - 1
    return ((v >> r) | (v << (q - r))) & mask


def aligner_step(v: int, M: int, Q: int):
    """Emit the next ``M`` bits of the periodic stream of the ``Q``-bit code ``v``.

    Returns ``(out, writeback)``: ``out`` holds M bits (stream element ``t`` in
    bit ``t``); ``writeback`` is ``v`` rotated by ``M mod Q`` so that a later
    read starting from bit 0 resumes the stream.
    """
    if M < 1 or Q < 1:
        raise ConfigurationError(f"aligner needs M, Q >= 1, got M={M}, Q={Q}")
    if isinstance(v, np.integer):
        v = int(v)
    if M <= Q:
        out = v & ((1 << M) - 1)
    else:
        reps, rem = divmod(M, Q)
        out = 0
        for t in range(reps):
            out |= v << (t * Q)
        out |= (v & ((1 << rem) - 1)) << (reps * Q)
    return out, rotate_bits(v, M % Q, Q)


class OvsfFifo:
    """Circular FIFO of packed basis vectors; capacity is checked in bits."""

    def __init__(self, words, q: int, capacity_bits: int):
        self.q = q
        self._base = list(words)
        if len(self._base) * q > capacity_bits:
            raise InvariantError(f"OVSF FIFO needs {len(self._base) * q} bits, capacity {capacity_bits}")
        self._queue = deque(self._base)

    def rewind(self):
        self._queue = deque(self._base)

    def base(self, j):
        return self._base[j]

    def pop(self):
        return self._queue.popleft()

    def push(self, word):
        self._queue.append(word)

    def __len__(self):
        return len(self._queue)


# --- traversal helpers -----------------------------------------------------

def tile_grid(P, C, sigma):
    """Yield ``(t, p_tile, c_tile)`` in generation order (column blocks outer)."""
    n_p, n_c = math.ceil(P / sigma.T_P), math.ceil(C / sigma.T_C)
    t = 0
    for ct in range(n_c):
        for pt in range(n_p):
            yield t, pt, ct
            t += 1


def subtiles_per_tile(sigma):
    return math.ceil(sigma.T_P * sigma.T_C / sigma.M)


def per_tile_cycles(sigma, retained):
    return subtiles_per_tile(sigma) * retained


def _lanes(sigma, pt, ct, i, P, C, Q):
    """Lane coordinates of subtile ``i``: flat tile offset, row, col, validity."""
    f = i * sigma.M + np.arange(sigma.M)
    in_tile = f < sigma.T_P * sigma.T_C
    row = pt * sigma.T_P + f % sigma.T_P
    col = ct * sigma.T_C + f // sigma.T_P
    real = in_tile & (row < P) & (col < C)
    return f, row, col, in_tile, real


def _check_layer(cl: CompressedLayer):
    if cl.is_bypass:
        raise ValidationError(f"layer {cl.layer_id!r} is bypassed; nothing to generate")
    if not cl.hardware_mappable:
        raise NotMappableError(
            f"layer {cl.layer_id!r} uses per-filter code selection; the generator walks one "
            "code sequence for every subtile, so coefficients must share retained codes layer-wide"
        )


def _alpha_table(cl):
    """Integer coefficients for bit-packed fixed-point layers, reals otherwise."""
    if cl.quant is None:
        return np.asarray(cl.alphas, dtype=np.float64)
    if _bit_packed(cl):
        return np.asarray(cl.alphas, dtype=np.int64)
    return dequantize(cl.alphas, cl.quant.frac_bits)


def _bit_packed(cl):
    return cl.repr_mode in ("direct", "crop4")


def tiwgen_reference(cl: CompressedLayer, sigma: DesignPoint) -> np.ndarray:
    """Generate the P x C weight matrix tile by tile, subtile by subtile."""
    _check_layer(cl)
    Q = cl.slice_len
    P, C = cl.n_in * Q, cl.n_out
    eff = effective_codes(cl)
    fixed = cl.quant is not None and _bit_packed(cl)
    alphas = _alpha_table(cl)
    dtype = np.int64 if fixed else np.float64
    eff = eff.astype(dtype)
    W = np.zeros((math.ceil(P / sigma.T_P) * sigma.T_P, math.ceil(C / sigma.T_C) * sigma.T_C), dtype=dtype)
    n_sub = subtiles_per_tile(sigma)
    for _, pt, ct in tile_grid(P, C, sigma):
        tile = np.zeros(sigma.T_P * sigma.T_C, dtype=dtype)
        for i in range(n_sub):
            f, row, col, in_tile, real = _lanes(sigma, pt, ct, i, P, C, Q)
            subtile = np.zeros(sigma.M, dtype=dtype)
            r, c = row[real], col[real]
            # basis-vector loop reduced as a dot product over retained codes
            subtile[real] = np.einsum("mj,jm->m", alphas[r // Q, c, :], eff[:, r % Q])
            tile[f[in_tile]] = subtile[in_tile]
        block = tile.reshape(sigma.T_C, sigma.T_P).T
        W[pt * sigma.T_P:(pt + 1) * sigma.T_P, ct * sigma.T_C:(ct + 1) * sigma.T_C] = block
    if fixed:
        check_accumulator(W, 32, "generated weight")
    return W[:P, :C]


def alpha_demand(sigma, P, C, Q):
    """Largest number of distinct (c_in, c_out) coefficients any subtile needs per cycle."""
    peak = 0
    n_sub = subtiles_per_tile(sigma)
    for _, pt, ct in tile_grid(P, C, sigma):
        for i in range(n_sub):
            _, row, col, _, real = _lanes(sigma, pt, ct, i, P, C, Q)
            if real.any():
                keys = (row[real] // Q) * C + col[real]
                peak = max(peak, int(np.unique(keys).size))
    return peak


@dataclass
class TileTrace:
    tile: int
    p_tile: int
    c_tile: int
    cycles: int
    subtiles: int


@dataclass
class WgenTrace:
    tiles: list = field(default_factory=list)
    total_cycles: int = 0
    alpha_ports: int = 0
    eq1_ports: int = 0
    peak_alpha_demand: int = 0
    aligner_mode: str = "stream"
    datapath: str = "bit-packed"

    @property
    def per_tile_cycles(self):
        return sorted({t.cycles for t in self.tiles})

    def to_csv(self, fh=None):
        buf = fh if fh is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tile", "p_tile", "c_tile", "cycles", "subtiles"])
        for t in self.tiles:
            w.writerow([t.tile, t.p_tile, t.c_tile, t.cycles, t.subtiles])
        return buf.getvalue() if fh is None else None


def _segments(row_in_tile, in_tile, T_P, pt, Q):
    """Split a subtile into column runs: ``[(lane_start, length, code_phase)]``."""
    segs = []
    n = int(in_tile.sum())
    k = 0
    while k < n:
        r0 = int(row_in_tile[k])
        length = min(T_P - r0, n - k)
        segs.append((k, length, (pt * T_P + r0) % Q))
        k += length
    return segs


def simulate_wgen(cl: CompressedLayer, sigma: DesignPoint, k_max: Optional[int] = None,
                  alpha_ports: Optional[int] = None):
    """Cycle-stepped generator model. Returns ``(weights P x C, WgenTrace)``.

    One cycle consumes one basis vector for the current subtile: the FIFO head
    passes through the aligner (and is written back rotated), the Alpha buffer
    serves one coefficient per touched filter, and the M-wide multiply and
    add arrays update the lane accumulators, which reset at each new subtile.
    """
    _check_layer(cl)
    Q = cl.slice_len
    J = cl.retained_count
    P, C = cl.n_in * Q, cl.n_out
    k_max = k_max or (4 if cl.repr_mode in ("crop4", "pool4") else cl.kernel_size)
    packed = _bit_packed(cl)
    fixed = cl.quant is not None and packed
    dtype = np.int64 if fixed else np.float64
    alphas = _alpha_table(cl)
    eff = effective_codes(cl)

    trace = WgenTrace(
        eq1_ports=filters_per_subtile(sigma.M, sigma.T_P, k_max),
        peak_alpha_demand=0,
        aligner_mode="stream" if sigma.T_P % Q == 0 else "segmented",
        datapath="bit-packed" if packed else "functional",
    )
    trace.alpha_ports = alpha_ports if alpha_ports is not None else max(
        trace.eq1_ports, alpha_demand(sigma, P, C, Q))

    if packed:
        words = [pack_code(eff[j]).bits for j in range(J)]
    else:
        words = [np.asarray(eff[j], dtype=np.float64) for j in range(J)]
    fifo = OvsfFifo(words, Q, k_max ** 4)

    def emit(word, start_phase, length):
        # the aligner reads from bit 0, so the word is pre-rotated to the phase
        if packed:
            out, wb = aligner_step(rotate_bits(word, start_phase, Q), length, Q)
            return out, wb
        idx = (start_phase + np.arange(length)) % Q
        return word[idx], np.roll(word, -((start_phase + length) % Q))

    W = np.zeros((math.ceil(P / sigma.T_P) * sigma.T_P, math.ceil(C / sigma.T_C) * sigma.T_C), dtype=dtype)
    n_sub = subtiles_per_tile(sigma)
    stream = trace.aligner_mode == "stream"

    for t, pt, ct in tile_grid(P, C, sigma):
        fifo.rewind()
        tile = np.zeros(sigma.T_P * sigma.T_C, dtype=dtype)
        cycles = 0
        for i in range(n_sub):
            f, row, col, in_tile, real = _lanes(sigma, pt, ct, i, P, C, Q)
            # Alpha buffer: one port per distinct filter slice touched by the subtile
            if real.any():
                demand = int(np.unique((row[real] // Q) * C + col[real]).size)
                if demand > trace.alpha_ports:
                    raise InvariantError(
                        f"subtile needs {demand} coefficient ports, buffer has {trace.alpha_ports}")
                trace.peak_alpha_demand = max(trace.peak_alpha_demand, demand)
            lane_alpha = np.zeros((sigma.M, J), dtype=dtype)
            lane_alpha[real] = alphas[row[real] // Q, col[real], :]
            segs = None if stream else _segments(f[in_tile] % sigma.T_P, in_tile, sigma.T_P, pt, Q)
            acc = np.zeros(sigma.M, dtype=dtype)  # CU resets accumulators per subtile
            for j in range(J):
                word = fifo.pop()
                if stream:
                    if packed:
                        bits, wb = aligner_step(word, sigma.M, Q)
                        vec = bits_to_signs(bits, sigma.M)
                    else:
                        vec, wb = emit(word, 0, sigma.M)
                    fifo.push(wb)
                else:
                    fifo.push(word)
                    if packed:
                        bits = 0
                        for start, length, phase in segs:
                            out, _ = emit(fifo.base(j), phase, length)
                            bits |= out << start
                        vec = bits_to_signs(bits, sigma.M)
                    else:
                        vec = np.zeros(sigma.M)
                        for start, length, phase in segs:
                            vec[start:start + length], _ = emit(fifo.base(j), phase, length)
                incr = vec * lane_alpha[:, j]       # multiplier array
                acc = acc + incr                     # adder array
                if fixed:
                    check_accumulator(acc, 32, f"{cl.layer_id or 'layer'} lane accumulator")
                cycles += 1
            tile[f[in_tile]] = acc[in_tile]
        block = tile.reshape(sigma.T_C, sigma.T_P).T
        W[pt * sigma.T_P:(pt + 1) * sigma.T_P, ct * sigma.T_C:(ct + 1) * sigma.T_C] = block
        trace.tiles.append(TileTrace(t, pt, ct, cycles, n_sub))
    trace.total_cycles = sum(tt.cycles for tt in trace.tiles)
    return W[:P, :C], trace
