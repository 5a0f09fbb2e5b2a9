"""Signed fixed-point helpers: round-half-even, saturation, overflow checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import AccumulatorOverflowError, ConfigurationError


@dataclass(frozen=True)
class QuantSpec:
    word_length: int
    frac_bits: int
    saturated: int = 0

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def limits(self):
        return -(1 << (self.word_length - 1)), (1 << (self.word_length - 1)) - 1


def check_format(word_length, frac_bits):
    if not (1 <= frac_bits < word_length <= 32):
        raise ConfigurationError(
            f"need 1 <= frac_bits < word_length <= 32, got WL={word_length}, frac={frac_bits}"
        )


def quantize(values, word_length, frac_bits):
    """Return ``(ints, n_saturated)``; ints are int64 holding WL-bit values."""
    check_format(word_length, frac_bits)
    lo, hi = -(1 << (word_length - 1)), (1 << (word_length - 1)) - 1
    # np.rint rounds half to even
    scaled = np.rint(np.asarray(values, dtype=np.float64) * (1 << frac_bits))
    n_sat = int(np.count_nonzero((scaled < lo) | (scaled > hi)))
    return np.clip(scaled, lo, hi).astype(np.int64), n_sat


def dequantize(ints, frac_bits):
    return np.asarray(ints, dtype=np.float64) / (1 << frac_bits)


def check_accumulator(acc, bits=32, where="accumulator"):
    """Raise if any entry of ``acc`` falls outside the signed ``bits`` range."""
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    a = np.asarray(acc)
    if a.size and (a.min() < lo or a.max() > hi):
        raise AccumulatorOverflowError(
            f"{where} overflow: range [{a.min()}, {a.max()}] exceeds {bits}-bit signed"
        )
    return acc
