"""Binary tensor container used for raw and compressed weights.

Layout (all integers little-endian)::

    magic    4 bytes  b"OVSW"
    version  u16      1
    reserved u16      0
    count    u32      number of tensors
    count x { name_len u16, name utf-8, ndim u8, shape u32[ndim], data f32[prod(shape)] }
    crc32    u32      zlib.crc32 of every preceding byte
"""
from __future__ import annotations

import os
import struct
import zlib

import numpy as np

from .compress import CompressedLayer
from .exceptions import ChecksumError, ContainerError
from .fixedpoint import QuantSpec

MAGIC = b"OVSW"
VERSION = 1
_HEADER = struct.Struct("<4sHHI")


def encode_tensors(tensors) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, 0, len(tensors))]
    for name, array in tensors.items():
        a = np.asarray(array, dtype="<f4")  # tobytes() emits C order; keeps 0-d shapes
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF or a.ndim > 0xFF:
            raise ContainerError(f"tensor {name!r} cannot be encoded")
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack(f"<B{a.ndim}I", a.ndim, *a.shape))
        parts.append(a.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_tensors(blob: bytes) -> dict:
    if len(blob) >= 4 and blob[:4] != MAGIC:
        raise ContainerError(f"bad magic {blob[:4]!r}")
    if len(blob) >= 6:
        (version,) = struct.unpack_from("<H", blob, 4)
        if version != VERSION:
            raise ContainerError(f"unsupported container version {version}")
    if len(blob) < _HEADER.size + 4:
        raise ChecksumError("container truncated before checksum")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumError("checksum mismatch")
    _, _, _, count = _HEADER.unpack_from(body, 0)
    pos, out = _HEADER.size, {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", body, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", body, pos)
            pos += 4 * ndim
            n = int(np.prod(shape, dtype=np.int64))
            if pos + 4 * n > len(body):
                raise ContainerError(f"tensor {name!r} runs past end of payload")
            out[name] = np.frombuffer(body, dtype="<f4", count=n, offset=pos).reshape(shape).astype(np.float32)
            pos += 4 * n
    except struct.error as exc:
        raise ContainerError(f"malformed container: {exc}") from None
    if pos != len(body):
        raise ContainerError("trailing bytes after last tensor")
    return out


def write_weights(path, tensors) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_tensors(tensors))


def read_weights(path) -> dict:
    with open(os.fspath(path), "rb") as fh:
        return decode_tensors(fh.read())


# --- compressed layers -----------------------------------------------------

_MODES = ("direct", "crop4", "pool4", "bypass")
_SELECTIONS = ("shared", "per_filter")
_MAX_EXACT_BITS = 24  # float32 integers are exact up to 2^24


def compressed_to_tensors(layers) -> dict:
    tensors = {}
    for cl in layers:
        q = cl.quant
        if q is not None and q.word_length > _MAX_EXACT_BITS:
            raise ContainerError(f"{cl.layer_id}: word length {q.word_length} not representable in f32")
        info = [
            _MODES.index(cl.repr_mode), cl.kernel_size, cl.n_in, cl.n_out, cl.basis_len,
            cl.ratio, cl.retained_count, _SELECTIONS.index(cl.selection),
            q.word_length if q else 0, q.frac_bits if q else 0, q.saturated if q else 0,
        ]
        tensors[f"{cl.layer_id}/info"] = np.array(info, dtype=np.float64)
        if cl.is_bypass:
            tensors[f"{cl.layer_id}/weights"] = cl.raw_weights
        else:
            tensors[f"{cl.layer_id}/indices"] = cl.retained_indices
            tensors[f"{cl.layer_id}/alphas"] = cl.alphas
    return tensors


def tensors_to_compressed(tensors) -> list:
    layers = []
    for key in tensors:
        if not key.endswith("/info"):
            continue
        lid = key[: -len("/info")]
        info = tensors[key].astype(np.float64)
        mode = _MODES[int(info[0])]
        wl, frac, sat = int(info[8]), int(info[9]), int(info[10])
        quant = QuantSpec(wl, frac, sat) if wl else None
        common = dict(
            layer_id=lid, repr_mode=mode, kernel_size=int(info[1]), n_in=int(info[2]),
            n_out=int(info[3]), basis_len=int(info[4]), ratio=float(f"{float(np.float32(info[5])):.7g}"),
            retained_count=int(info[6]), selection=_SELECTIONS[int(info[7])], quant=quant,
        )
        try:
            if mode == "bypass":
                layers.append(CompressedLayer(retained_indices=np.zeros(0, dtype=np.int64),
                                              alphas=np.zeros((0,)), raw_weights=tensors[f"{lid}/weights"],
                                              **common))
            else:
                alphas = tensors[f"{lid}/alphas"]
                alphas = np.rint(alphas).astype(np.int64) if quant else alphas.astype(np.float64)
                layers.append(CompressedLayer(retained_indices=tensors[f"{lid}/indices"].astype(np.int64),
                                              alphas=alphas, **common))
        except KeyError as exc:
            raise ContainerError(f"layer {lid!r} is missing tensor {exc}") from None
    return layers


def write_compressed(path, layers) -> None:
    write_weights(path, compressed_to_tensors(layers))


def read_compressed(path) -> list:
    return tensors_to_compressed(read_weights(path))
