"""OVSF code sets built as Sylvester-Hadamard matrices, plus bit packing."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import ConfigurationError, ValidationError

MAX_ORDER = 16


@dataclass(frozen=True, eq=False)
class OvsfBasis:
    """``length`` mutually orthogonal +/-1 codes, one per row of ``codes``.

    Row ``j`` is code ``B_j`` in Sylvester order; row 0 is all ones.
    ``codes`` is a read-only int8 array so a basis can be shared freely.
    """

    order: int
    codes: np.ndarray

    @property
    def length(self) -> int:
        return 1 << self.order

    def __len__(self):
        return self.length

    def __getitem__(self, j):
        return self.codes[j]


@lru_cache(maxsize=None)
def build_basis(n: int) -> OvsfBasis:
    """Return the order-``n`` basis, ``H_0 = [1]`` and ``H_k = [[H, H], [H, -H]]``."""
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        raise ConfigurationError(f"basis order must be an integer, got {n!r}")
    if not 0 <= n <= MAX_ORDER:
        raise ConfigurationError(f"basis order must lie in [0, {MAX_ORDER}], got {n}")
    h = np.ones((1, 1), dtype=np.int8)
    for _ in range(int(n)):
        h = np.block([[h, h], [h, -h]])
    h.setflags(write=False)
    return OvsfBasis(order=int(n), codes=h)


def basis_for_length(length: int) -> OvsfBasis:
    order = int(length).bit_length() - 1
    if length < 1 or (1 << order) != length:
        raise ConfigurationError(f"basis length must be a power of two, got {length}")
    return build_basis(order)


@dataclass(frozen=True)
class PackedCode:
    """A +/-1 code stored as an integer: bit ``i`` set means entry ``i`` is -1.

    Python integers are unbounded, so codes longer than one machine word need
    no special casing; ``words()`` exposes the 64-bit split when required.
    """

    bits: int
    length: int

    def words(self, width=64):
        n = max(1, -(-self.length // width))
        mask = (1 << width) - 1
        return [(self.bits >> (width * i)) & mask for i in range(n)]

    def bit(self, i):
        return (self.bits >> i) & 1


def pack_code(code) -> PackedCode:
    c = np.asarray(code)
    if c.ndim != 1:
        raise ValidationError(f"code must be 1-D, got shape {c.shape}")
    if not np.all((c == 1) | (c == -1)):
        raise ValidationError("code entries must be +1 or -1")
    bits = 0
    for i in np.flatnonzero(c == -1):
        bits |= 1 << int(i)
    return PackedCode(bits=bits, length=int(c.size))


def unpack_code(packed: PackedCode) -> np.ndarray:
    out = np.ones(packed.length, dtype=np.int8)
    bits = packed.bits
    for i in range(packed.length):
        if (bits >> i) & 1:
            out[i] = -1
    return out


def bits_to_signs(bits: int, length: int) -> np.ndarray:
    """Vectorised unpack of a raw integer into an int8 +/-1 array."""
    nbytes = max(1, -(-length // 8))
    raw = np.frombuffer(bits.to_bytes(nbytes, "little"), dtype=np.uint8)
    b = np.unpackbits(raw, bitorder="little")[:length]
    return (1 - 2 * b.astype(np.int8)).astype(np.int8)
