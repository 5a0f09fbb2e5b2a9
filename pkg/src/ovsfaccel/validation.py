"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""
from __future__ import annotations

from fractions import Fraction
import math

import numpy as np

from .exceptions import ConfigurationError, ValidationError

REPR_MODES = ("direct", "crop4", "pool4", "bypass")


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigurationError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigurationError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_ratio(ratio, name="ratio", allow_zero=False):
    try:
        r = float(ratio)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name} must be a number, got {ratio!r}") from None
    if not math.isfinite(r) or r > 1.0 or r < 0.0 or (r == 0.0 and not allow_zero):
        bound = "[0, 1]" if allow_zero else "(0, 1]"
        raise ConfigurationError(f"{name} must lie in {bound}, got {ratio!r}")
    return r


def check_repr_mode(mode):
    if mode not in REPR_MODES:
        raise ConfigurationError(f"unknown repr_mode {mode!r}; expected one of {REPR_MODES}")
    return mode


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


def retained_count(ratio, basis_len):
    """Number of kept codes, ``ceil(ratio * basis_len)``, computed without float drift."""
    r = Fraction(ratio).limit_denominator(10**9)
    return max(1, math.ceil(r * basis_len))


def check_filter_bank(weights, name="weights"):
    """Return ``weights`` as a finite float32 array of shape (N_out, N_in, K, K)."""
    w = np.asarray(weights)
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ValidationError(f"{name} must have shape (N_out, N_in, K, K), got {w.shape}")
    if min(w.shape) < 1:
        raise ValidationError(f"{name} has an empty dimension: {w.shape}")
    if not np.issubdtype(w.dtype, np.number):
        raise ValidationError(f"{name} must be numeric, got dtype {w.dtype}")
    w = w.astype(np.float32, copy=False)
    if not np.all(np.isfinite(w)):
        raise ValidationError(f"{name} contains non-finite values")
    return w


def check_matrix(a, name, ndim=2):
    a = np.asarray(a)
    if a.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-D, got shape {a.shape}")
    return a


def basis_length(kernel_size, repr_mode):
    """Length of the code set a layer draws from (16 for the 3x3 work-arounds)."""
    if repr_mode in ("crop4", "pool4"):
        if kernel_size != 3:
            raise ConfigurationError(f"{repr_mode} requires K=3, got K={kernel_size}")
        return 16
    if repr_mode == "direct":
        q = kernel_size * kernel_size
        if not is_power_of_two(q):
            raise ConfigurationError(f"direct mode requires K^2 to be a power of two, got K={kernel_size}")
        return q
    if repr_mode == "bypass":
        return 0
    raise ConfigurationError(f"unknown repr_mode {repr_mode!r}")
