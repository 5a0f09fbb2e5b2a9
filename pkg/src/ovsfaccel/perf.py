"""Analytical throughput model for the generator-based engine and the weight-streaming baseline."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from typing import Optional

from .engine import cycles_baseline, cycles_selective
from .exceptions import ConfigurationError
from .models import LayerSpec, ModelSpec, PlatformSpec, apply_schedule, to_workload
from .resources import check_variant, usage
from .wgen import DesignPoint

WEIGHT_POLICIES = ("auto", "stream", "cache")
STAGES = ("mem_in", "wgen", "engine", "mem_out")


def bytes_per_cycle(gbps: float, freq_mhz: float) -> Fraction:
    """Link bytes delivered per clock cycle (1 GB/s = 1e9 bytes/s)."""
    return Fraction(gbps).limit_denominator(10 ** 6) * 1000 / Fraction(freq_mhz).limit_denominator(10 ** 6)


def transfer_cycles(n_bytes: int, gbps: float, freq_mhz: float) -> int:
    if n_bytes <= 0 or gbps == math.inf:
        return 0
    return math.ceil(n_bytes / bytes_per_cycle(gbps, freq_mhz))


def t_wgen(layer: LayerSpec, sigma: DesignPoint) -> int:
    """Generator cycles per output tile; zero for layers whose weights bypass the generator."""
    if not layer.compressed:
        return 0
    w = to_workload(layer)
    return layer.retained_count * math.ceil(sigma.T_P * sigma.T_C / sigma.M) * math.ceil(w.P / sigma.T_P)


def t_mem(layer: LayerSpec, sigma: DesignPoint, platform: PlatformSpec):
    """Activation transfer cycles per output tile as ``(t_in, t_out)``."""
    wlb = platform.word_length // 8
    w = to_workload(layer)
    t_in = transfer_cycles(sigma.T_R * w.P * wlb, platform.bw_in, platform.freq_mhz)
    t_out = transfer_cycles(sigma.T_R * sigma.T_C * wlb, platform.bw_out, platform.freq_mhz)
    return t_in, t_out


def column_tiles(C: int, T_C: int):
    """``[(width, count)]`` for the column tiles of a C-wide output."""
    full, tail = divmod(C, T_C)
    out = [(T_C, full)] if full else []
    if tail:
        out.append((tail, 1))
    return out


def bottleneck(t_in, t_gen, t_eng, t_out) -> str:
    vals = (t_in, t_gen, t_eng, t_out)
    return STAGES[vals.index(max(vals))]


@dataclass(frozen=True)
class LayerEstimate:
    name: str
    R: int
    P: int
    C: int
    row_tiles: int
    col_tiles: int
    t_mem_in: int
    t_wgen: int
    t_eng: int
    t_mem_out: int
    ii: int
    t_total: int
    bottleneck: str
    weights: str
    preload: int


@dataclass(frozen=True)
class PerformanceEstimate:
    variant: str
    sigma: DesignPoint
    platform: str
    freq_mhz: float
    bw_gbps: float
    layers: tuple

    @property
    def total_cycles(self) -> int:
        return sum(l.t_total for l in self.layers)

    @property
    def throughput(self) -> float:
        """Inferences per second."""
        return self.freq_mhz * 1e6 / self.total_cycles

    @property
    def latency_ms(self) -> float:
        return 1e3 * self.total_cycles / (self.freq_mhz * 1e6)

    def rows(self):
        return [asdict(l) for l in self.layers]

    def to_csv(self, fh=None):
        buf = fh or io.StringIO()
        names = [f.name for f in fields(LayerEstimate)]
        wr = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        wr.writeheader()
        for r in self.rows():
            wr.writerow(r)
        return None if fh else buf.getvalue()


def _layer(layer, sigma, platform, variant, selective, ram_free, weights_policy):
    w = to_workload(layer)
    wlb = platform.word_length // 8
    n_r = math.ceil(w.R / sigma.T_R)
    n_p = math.ceil(w.P / sigma.T_P)
    t_in, t_out = t_mem(layer, sigma, platform)
    gen = t_wgen(layer, sigma) if variant == "unzip" else 0
    preload = 0
    mode = "generated"
    if variant == "baseline" or not layer.compressed:
        cache = w.P * w.C * platform.word_length <= ram_free
        if weights_policy == "cache" or (weights_policy == "auto" and cache):
            mode = "cached"
            preload = transfer_cycles(w.P * w.C * wlb, platform.bw_in, platform.freq_mhz)
        else:
            mode = "streamed"
            t_in = transfer_cycles(sigma.T_R * w.P * wlb + sigma.T_P * sigma.T_C * n_p * wlb,
                                   platform.bw_in, platform.freq_mhz)
    total = 0
    first = True
    steady = None
    for width, count in column_tiles(w.C, sigma.T_C):
        eng = cycles_selective(w, sigma, c_tile=width) if selective else cycles_baseline(w, sigma)
        ii = max(max(t_in, gen), eng, t_out)
        if steady is None:
            steady = (ii, eng)
        total += ii * count * n_r
        if first and preload:
            total += max(max(t_in + preload, gen), eng, t_out) - ii
            first = False
    ii, eng = steady
    return LayerEstimate(
        name=layer.name, R=w.R, P=w.P, C=w.C, row_tiles=n_r, col_tiles=math.ceil(w.C / sigma.T_C),
        t_mem_in=t_in, t_wgen=gen, t_eng=eng, t_mem_out=t_out, ii=ii, t_total=total,
        bottleneck=bottleneck(t_in, gen, eng, t_out), weights=mode, preload=preload,
    )


def estimate(model: ModelSpec, sigma: DesignPoint, platform: PlatformSpec, variant="unzip",
             selective: Optional[bool] = None, schedule=None, alpha_policy="block",
             weights_policy="auto") -> PerformanceEstimate:
    """Per-layer stage times, initiation intervals and network throughput.

    ``selective`` defaults to on for the unzip variant and off for the
    baseline engine. Raw weights (every layer of the baseline, bypass layers
    of unzip) are cached once per layer when they fit in the RAM left over by
    the design, otherwise streamed with every output tile; ``weights_policy``
    forces either regime.
    """
    check_variant(variant)
    if weights_policy not in WEIGHT_POLICIES:
        raise ConfigurationError(f"weights policy must be one of {WEIGHT_POLICIES}, got {weights_policy!r}")
    if schedule is not None:
        model = apply_schedule(model, schedule)
    if selective is None:
        selective = variant == "unzip"
    used = usage(sigma, model, platform, variant, selective, alpha_policy)
    ram_free = max(0, platform.bram_bits - used.bram_bits)
    layers = tuple(_layer(l, sigma, platform, variant, selective, ram_free, weights_policy)
                   for l in model.layers)
    return PerformanceEstimate(variant=variant, sigma=sigma, platform=platform.name,
                               freq_mhz=platform.freq_mhz, bw_gbps=platform.bw_in, layers=layers)


def pipeline_event_sim(stage_times):
    """Completion cycle of every tile in a three-stage double-buffered pipeline.

    ``stage_times`` holds ``(load_or_generate, compute, store)`` per tile. A
    stage starts a tile once it finished the previous one, the upstream
    stage delivered this one, and the downstream stage has released the
    buffer it used two tiles earlier.
    """
    n = len(stage_times)
    end = [[0] * n for _ in range(3)]
    for k, times in enumerate(stage_times):
        for s in range(3):
            start = 0
            if k:
                start = end[s][k - 1]
            if s:
                start = max(start, end[s - 1][k])
            if s < 2 and k >= 2:
                start = max(start, end[s + 1][k - 2])
            end[s][k] = start + times[s]
    return end[2]


def steady_state_cycles(stage_times) -> int:
    """Cycles one pass over ``stage_times`` costs when passes run back to back."""
    ends = pipeline_event_sim(list(stage_times) * 2)
    n = len(stage_times)
    return ends[2 * n - 1] - ends[n - 1]
