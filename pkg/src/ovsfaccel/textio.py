"""Line-oriented text formats for model, platform and schedule specs.

Each non-blank, non-comment line is a record: a record type followed by
``key=value`` tokens (shell-style quoting allowed). See docs/formats.md.
"""
from __future__ import annotations

import os
import shlex
from dataclasses import fields
from pathlib import Path

from .exceptions import OvsfAccelError, ParseError, ValidationError
from .models import (
    LayerSpec,
    LutModel,
    ModelSpec,
    PlatformSpec,
    RatioSchedule,
    builtin_model,
    builtin_platform,
    builtin_schedule,
)

_LAYER_KEYS = {
    "name": str, "kind": str, "n_in": int, "n_out": int, "k": int, "h": int, "w": int,
    "stride": int, "padding": int, "ratio": float, "mode": str, "group": int, "role": str,
    "bias": lambda s: _bool(s),
}
_PLATFORM_KEYS = {
    "name": str, "freq_mhz": float, "dsp": int, "bram_bits": int, "lut_capacity": int,
    "bw_in": float, "bw_out": float, "word_length": int, "dsp_per_mac": int,
    "check_luts": lambda s: _bool(s),
}
_LUT_KEYS = {"c0": float, "c1": float, "c2": float, "c3": float, "synthetic": lambda s: _bool(s)}


def _bool(s):
    v = s.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _records(text, path=None):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            tokens = shlex.split(line)
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, path=path) from None
        kind, kv = tokens[0], {}
        for tok in tokens[1:]:
            if "=" not in tok:
                raise ParseError(f"expected key=value, got {tok!r}", line=lineno, path=path)
            key, value = tok.split("=", 1)
            if key in kv:
                raise ParseError("duplicate key", line=lineno, field=key, path=path)
            kv[key] = value
        yield lineno, kind, kv


def _convert(kv, schema, lineno, path, required=()):
    out = {}
    for key, value in kv.items():
        if key not in schema:
            raise ParseError("unknown key", line=lineno, field=key, path=path)
        try:
            out[key] = schema[key](value)
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, field=key, path=path) from None
    for key in required:
        if key not in out:
            raise ParseError("missing required key", line=lineno, field=key, path=path)
    return out


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    s = str(v)
    return shlex.quote(s) if s == "" or any(c.isspace() or c in "#'\"=" for c in s) else s


def _build(ctor, lineno, path, **kwargs):
    try:
        return ctor(**kwargs)
    except (ValidationError, OvsfAccelError, TypeError) as exc:
        raise ParseError(str(exc), line=lineno, path=path) from None


# --- model -----------------------------------------------------------------

def parse_model(text, path=None) -> ModelSpec:
    name, layers = None, []
    for lineno, kind, kv in _records(text, path):
        if kind == "model":
            vals = _convert(kv, {"name": str}, lineno, path, required=("name",))
            name = vals["name"]
        elif kind == "layer":
            vals = _convert(kv, _LAYER_KEYS, lineno, path, required=("name", "kind", "n_in", "n_out"))
            if "mode" in vals:
                vals["repr_mode"] = vals.pop("mode")
            layers.append(_build(LayerSpec, lineno, path, **vals))
        else:
            raise ParseError(f"unknown record type {kind!r}", line=lineno, path=path)
    if name is None:
        raise ParseError("missing 'model' record", path=path)
    try:
        return ModelSpec(name, tuple(layers))
    except ValidationError as exc:
        raise ParseError(str(exc), path=path) from None


def serialize_model(model: ModelSpec) -> str:
    lines = [f"model name={_fmt(model.name)}"]
    for l in model.layers:
        parts = [
            f"name={_fmt(l.name)}", f"kind={l.kind}", f"n_in={l.n_in}", f"n_out={l.n_out}",
            f"k={l.k}", f"h={l.h}", f"w={l.w}", f"stride={l.stride}", f"padding={l.padding}",
            f"ratio={_fmt(float(l.ratio))}", f"mode={l.repr_mode}", f"group={l.group}",
            f"role={_fmt(l.role)}", f"bias={_fmt(l.bias)}",
        ]
        lines.append("layer " + " ".join(parts))
    return "\n".join(lines) + "\n"


# --- platform --------------------------------------------------------------

def parse_platform(text, path=None) -> PlatformSpec:
    plat, lut = None, None
    for lineno, kind, kv in _records(text, path):
        if kind == "platform":
            plat = (lineno, _convert(kv, _PLATFORM_KEYS, lineno, path,
                                     required=("name", "freq_mhz", "dsp", "bram_bits", "lut_capacity",
                                               "bw_in", "bw_out")))
        elif kind == "luts":
            lut = _build(LutModel, lineno, path, **_convert(kv, _LUT_KEYS, lineno, path))
        else:
            raise ParseError(f"unknown record type {kind!r}", line=lineno, path=path)
    if plat is None:
        raise ParseError("missing 'platform' record", path=path)
    lineno, vals = plat
    if lut is not None:
        vals["lut_model"] = lut
    return _build(PlatformSpec, lineno, path, **vals)


def serialize_platform(p: PlatformSpec) -> str:
    skip = {"lut_model"}
    head = " ".join(f"{f.name}={_fmt(getattr(p, f.name))}" for f in fields(p) if f.name not in skip)
    lut = " ".join(f"{f.name}={_fmt(getattr(p.lut_model, f.name))}" for f in fields(p.lut_model))
    return f"platform {head}\nluts {lut}\n"


# --- schedule --------------------------------------------------------------

def _ratios(s):
    return tuple(float(x) for x in s.split(","))


def parse_schedule(text, path=None) -> RatioSchedule:
    head, overrides = None, []
    for lineno, kind, kv in _records(text, path):
        if kind == "schedule":
            head = (lineno, _convert(kv, {"name": str, "ratios": _ratios, "mode": str, "scope": str},
                                     lineno, path, required=("name", "ratios")))
        elif kind == "override":
            vals = _convert(kv, {"layer": str, "ratio": float, "mode": str}, lineno, path,
                            required=("layer", "ratio", "mode"))
            overrides.append((vals["layer"], vals["ratio"], vals["mode"]))
        else:
            raise ParseError(f"unknown record type {kind!r}", line=lineno, path=path)
    if head is None:
        raise ParseError("missing 'schedule' record", path=path)
    lineno, vals = head
    return _build(RatioSchedule, lineno, path, overrides=tuple(overrides), **vals)


def serialize_schedule(s: RatioSchedule) -> str:
    ratios = ",".join(repr(float(r)) for r in s.ratios)
    lines = [f"schedule name={_fmt(s.name)} ratios={ratios} mode={s.mode} scope={s.scope}"]
    for name, ratio, mode in s.overrides:
        lines.append(f"override layer={_fmt(name)} ratio={_fmt(float(ratio))} mode={mode}")
    return "\n".join(lines) + "\n"


# --- name-or-path loaders --------------------------------------------------

def _load(ref, parser, builtin):
    ref = os.fspath(ref)
    p = Path(ref)
    if p.is_file():
        return parser(p.read_text(), path=p)
    return builtin(ref)


def load_model(ref) -> ModelSpec:
    return _load(ref, parse_model, builtin_model)


def load_platform(ref) -> PlatformSpec:
    return _load(ref, parse_platform, builtin_platform)


def load_schedule(ref) -> RatioSchedule:
    return _load(ref, parse_schedule, builtin_schedule)
