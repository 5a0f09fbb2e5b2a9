"""DSP, on-chip RAM and LUT consumption of a design point, plus feasibility."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .exceptions import ConfigurationError
from .engine import augmented_pes
from .models import ModelSpec, PlatformSpec, to_workload
from .wgen import DesignPoint, filters_per_subtile

VARIANTS = ("unzip", "baseline")
ALPHA_POLICIES = ("block", "network")
RESOURCE_NAMES = ("dsp", "bram_bits", "luts")

_warned_synthetic = False


@dataclass(frozen=True)
class ResourceVector:
    dsp: int
    bram_bits: int
    luts: int

    def __post_init__(self):
        for name in RESOURCE_NAMES:
            if getattr(self, name) < 0:
                raise ConfigurationError(f"resource {name} cannot be negative")

    def as_dict(self):
        return {n: getattr(self, n) for n in RESOURCE_NAMES}


@dataclass(frozen=True)
class Feasibility:
    ok: bool
    usage: ResourceVector
    available: ResourceVector
    violations: tuple

    def __bool__(self):
        return self.ok

    def utilization(self):
        """Fraction of each budget used; LUTs are included even when not enforced."""
        return {n: getattr(self.usage, n) / getattr(self.available, n) for n in RESOURCE_NAMES}


def check_variant(variant):
    if variant not in VARIANTS:
        raise ConfigurationError(f"variant must be one of {VARIANTS}, got {variant!r}")


def alpha_words(model: ModelSpec, sigma: DesignPoint, policy: str = "block") -> int:
    """Coefficient storage in words, rounded up to whole rows of the port array.

    ``network`` keeps every coefficient of the model on chip. ``block`` keeps
    those of one column block of the current layer, double-buffered so the
    next block streams in behind the generator.
    """
    if policy not in ALPHA_POLICIES:
        raise ConfigurationError(f"alpha policy must be one of {ALPHA_POLICIES}, got {policy!r}")
    compressed = [l for l in model.layers if l.compressed]
    if not compressed:
        return 0
    ports = filters_per_subtile(sigma.M, sigma.T_P, model.k_max)
    if policy == "network":
        need = sum(l.n_alphas for l in compressed)
    else:
        need = 2 * max(l.n_in * min(sigma.T_C, l.n_out) * l.retained_count for l in compressed)
    return math.ceil(need / ports) * ports


def ram_bits(sigma: DesignPoint, alpha_storage: int, word_length: int, k_max: int) -> int:
    """Double-buffered activation tiles plus coefficient words, plus the code FIFO."""
    act = 2 * (sigma.T_R * sigma.T_P + sigma.T_R * sigma.T_C)
    return (act + alpha_storage) * word_length + k_max ** 4


def baseline_ram_bits(sigma: DesignPoint, word_length: int) -> int:
    act = 2 * (sigma.T_R * sigma.T_P + sigma.T_R * sigma.T_C)
    return (act + 2 * sigma.T_P * sigma.T_C) * word_length


def lut_estimate(platform: PlatformSpec, sigma: DesignPoint, augmented: int, variant: str) -> int:
    global _warned_synthetic
    lm = platform.lut_model
    if lm.synthetic and not _warned_synthetic:
        warnings.warn("LUT estimates use synthetic placeholder coefficients", UserWarning, stacklevel=3)
        _warned_synthetic = True
    gen = sigma.M if variant == "unzip" else 0
    return math.ceil(lm.c0 + lm.c1 * gen + lm.c2 * sigma.T_P * sigma.T_C + lm.c3 * augmented)


def usage(sigma: DesignPoint, model: ModelSpec, platform: PlatformSpec, variant="unzip",
          selective=True, alpha_policy="block") -> ResourceVector:
    """Resources consumed by ``sigma`` running ``model`` (schedule already applied).

    The unzip variant maps M generator multipliers plus the T_P x T_C PE
    array to DSPs and adds the coefficient buffer and the code FIFO to the
    double-buffered activation tiles. The baseline swaps those for a
    double-buffered T_P x T_C weights tile.
    """
    check_variant(variant)
    wl = platform.word_length
    pes = sigma.T_P * sigma.T_C
    if variant == "unzip":
        dsp = platform.dsp_per_mac * (sigma.M + pes)
        bram = ram_bits(sigma, alpha_words(model, sigma, alpha_policy), wl, model.k_max)
    else:
        dsp = platform.dsp_per_mac * pes
        bram = baseline_ram_bits(sigma, wl)
    aug = augmented_pes([to_workload(l) for l in model.layers], sigma) if selective else 0
    return ResourceVector(dsp=dsp, bram_bits=bram, luts=lut_estimate(platform, sigma, aug, variant))


def available(platform: PlatformSpec) -> ResourceVector:
    return ResourceVector(dsp=platform.dsp, bram_bits=platform.bram_bits, luts=platform.lut_capacity)


def check(used: ResourceVector, platform: PlatformSpec) -> Feasibility:
    avail = available(platform)
    names = RESOURCE_NAMES if platform.check_luts else RESOURCE_NAMES[:2]
    bad = tuple(n for n in names if getattr(used, n) > getattr(avail, n))
    return Feasibility(ok=not bad, usage=used, available=avail, violations=bad)


def feasible(sigma: DesignPoint, model: ModelSpec, platform: PlatformSpec, variant="unzip",
             selective=True, alpha_policy="block") -> Feasibility:
    """Componentwise ``usage <= available``; ``violations`` names each exceeded budget."""
    return check(usage(sigma, model, platform, variant, selective, alpha_policy), platform)


def selective_lut_overhead(platform: PlatformSpec, sigma: DesignPoint, augmented: int) -> float:
    """Share of the design's LUTs spent on input-selective augmentation."""
    lm = platform.lut_model
    extra = lm.c3 * augmented
    total = lm.c0 + lm.c1 * sigma.M + lm.c2 * sigma.T_P * sigma.T_C + extra
    return extra / total
