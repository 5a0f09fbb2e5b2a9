"""CNN, platform and ratio-schedule descriptions, and GEMM workload shapes."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .exceptions import ConfigurationError, ValidationError
from .validation import basis_length, check_ratio, check_repr_mode, is_power_of_two, retained_count

LAYER_KINDS = ("conv", "fc")


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    n_in: int
    n_out: int
    k: int = 1
    h: int = 1
    w: int = 1
    stride: int = 1
    padding: int = 0
    ratio: float = 1.0
    repr_mode: str = "bypass"
    group: int = 0
    role: str = ""
    bias: bool = False

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValidationError(f"layer {self.name!r}: kind must be one of {LAYER_KINDS}")
        for f in ("n_in", "n_out", "k", "h", "w", "stride"):
            if getattr(self, f) < 1:
                raise ValidationError(f"layer {self.name!r}: {f} must be >= 1")
        if self.padding < 0:
            raise ValidationError(f"layer {self.name!r}: padding must be >= 0")
        if self.kind == "conv" and (self.h + 2 * self.padding < self.k or self.w + 2 * self.padding < self.k):
            raise ValidationError(f"layer {self.name!r}: kernel larger than padded input")
        check_ratio(self.ratio, f"layer {self.name!r} ratio")
        check_repr_mode(self.repr_mode)
        if self.repr_mode != "bypass":
            basis_length(self.k, self.repr_mode)

    @property
    def compressed(self) -> bool:
        return self.repr_mode != "bypass"

    @property
    def basis_len(self) -> int:
        return basis_length(self.k, self.repr_mode)

    @property
    def retained_count(self) -> int:
        """J_l = ceil(ratio * L_l); 0 for bypass layers."""
        if not self.compressed:
            return 0
        return retained_count(self.ratio, self.basis_len)

    @property
    def slice_len(self) -> int:
        return self.k * self.k

    @property
    def repr_kernel(self) -> int:
        """Kernel side of the code set (4 for the 3x3 work-arounds)."""
        return 4 if self.repr_mode in ("crop4", "pool4") else self.k

    @property
    def n_alphas(self) -> int:
        return self.n_in * self.n_out * self.retained_count

    @property
    def n_weights(self) -> int:
        return self.n_in * self.n_out * self.k * self.k


@dataclass(frozen=True)
class ModelSpec:
    name: str
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise ValidationError(f"model {self.name!r} has duplicate layer names")

    @property
    def k_max(self) -> int:
        ks = [l.repr_kernel for l in self.layers if l.compressed]
        return max(ks) if ks else 0

    def __len__(self):
        return len(self.layers)

    def layer(self, name):
        for l in self.layers:
            if l.name == name:
                return l
        raise KeyError(name)


@dataclass(frozen=True)
class WorkloadTuple:
    R: int
    P: int
    C: int

    def __post_init__(self):
        if min(self.R, self.P, self.C) < 1:
            raise ValidationError(f"workload dimensions must be >= 1, got {self}")


def output_size(n, k, padding, stride):
    """Number of sliding-window positions along one axis."""
    span = n + 2 * padding - k
    if span < 0:
        raise ValidationError(f"kernel {k} exceeds padded extent {n + 2 * padding}")
    return span // stride + 1


def to_workload(layer: LayerSpec, batch: int = 1) -> WorkloadTuple:
    if layer.kind == "fc":
        return WorkloadTuple(batch, layer.n_in, layer.n_out)
    ho = output_size(layer.h, layer.k, layer.padding, layer.stride)
    wo = output_size(layer.w, layer.k, layer.padding, layer.stride)
    return WorkloadTuple(batch * ho * wo, layer.n_in * layer.k * layer.k, layer.n_out)


@dataclass(frozen=True)
class LutModel:
    """Linear LUT estimate ``c0 + c1*M + c2*T_P*T_C + c3*augmented_PEs``.

    The default coefficients are synthetic placeholders, not fitted values.
    """

    c0: float = 20000.0
    c1: float = 60.0
    c2: float = 150.0
    c3: float = 40.0
    synthetic: bool = True


@dataclass(frozen=True)
class PlatformSpec:
    name: str
    freq_mhz: float
    dsp: int
    bram_bits: int
    lut_capacity: int
    bw_in: float
    bw_out: float
    word_length: int = 16
    dsp_per_mac: int = 1
    lut_model: LutModel = field(default_factory=LutModel)
    check_luts: bool = True

    def __post_init__(self):
        for f in ("freq_mhz", "dsp", "bram_bits", "lut_capacity", "bw_in", "bw_out", "dsp_per_mac"):
            if not getattr(self, f) > 0:
                raise ValidationError(f"platform {self.name!r}: {f} must be positive")
        if self.word_length not in (8, 16, 32):
            raise ValidationError(f"platform {self.name!r}: word_length must be 8, 16 or 32")

    @property
    def freq_hz(self) -> float:
        return self.freq_mhz * 1e6

    def with_bandwidth(self, gbps_in, gbps_out=None) -> "PlatformSpec":
        return replace(self, bw_in=float(gbps_in), bw_out=float(gbps_in if gbps_out is None else gbps_out))


MIB_BITS = 8 * 1024 * 1024

# GB/s; 2x is interpolated, the others are the measured tiers
BANDWIDTH_TIERS = {"1x": 1.1, "2x": 2.2, "4x": 4.5, "12x": 13.4}

PLATFORMS = {
    "z7045": PlatformSpec("z7045", freq_mhz=150.0, dsp=900, bram_bits=round(2.40 * MIB_BITS),
                          lut_capacity=218_600, bw_in=4.5, bw_out=4.5),
    "zu7ev": PlatformSpec("zu7ev", freq_mhz=200.0, dsp=1728, bram_bits=round(4.75 * MIB_BITS),
                          lut_capacity=230_000, bw_in=13.4, bw_out=13.4),
}


def builtin_platform(name: str) -> PlatformSpec:
    try:
        return PLATFORMS[name.lower()]
    except KeyError:
        raise ConfigurationError(f"unknown platform preset {name!r}; known: {sorted(PLATFORMS)}") from None


def parse_bandwidth(value) -> float:
    """Accept ``4.5``, ``'4.5'`` or a tier label such as ``'4x'``."""
    if isinstance(value, str) and value.lower() in BANDWIDTH_TIERS:
        return BANDWIDTH_TIERS[value.lower()]
    try:
        bw = float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"bad bandwidth {value!r}") from None
    if not bw > 0:
        raise ConfigurationError(f"bandwidth must be positive, got {value!r}")
    return bw


# --- ratio schedules -------------------------------------------------------

SCOPES = ("3x3", "all")


@dataclass(frozen=True)
class RatioSchedule:
    """Per-group ratios for the four residual stages (or Fire-module pairs).

    ``scope='3x3'`` compresses only 3x3 convolutions inside groups 1-4, using
    ``mode`` (crop4 or pool4). ``scope='all'`` also turns group 1x1/2x2/4x4
    convolutions into direct OVSF layers. ``overrides`` maps a layer name to
    ``(ratio, repr_mode)`` and wins over the group rule.
    """

    name: str
    ratios: tuple = (1.0, 1.0, 1.0, 1.0)
    mode: str = "crop4"
    scope: str = "3x3"
    overrides: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        object.__setattr__(self, "overrides", tuple(tuple(o) for o in self.overrides))
        if not self.ratios:
            raise ValidationError("schedule needs at least one group ratio")
        for r in self.ratios:
            check_ratio(r, "schedule ratio")
        if self.mode not in ("crop4", "pool4"):
            raise ValidationError(f"schedule mode must be crop4 or pool4, got {self.mode!r}")
        if self.scope not in SCOPES:
            raise ValidationError(f"schedule scope must be one of {SCOPES}, got {self.scope!r}")
        for name, ratio, mode in self.overrides:
            check_ratio(ratio, f"override {name!r} ratio")
            check_repr_mode(mode)

    def assign(self, layer: LayerSpec):
        """Return ``(ratio, repr_mode)`` for ``layer`` under this schedule."""
        for name, ratio, mode in self.overrides:
            if name == layer.name:
                return float(ratio), mode
        if layer.kind != "conv" or not 1 <= layer.group <= len(self.ratios):
            return 1.0, "bypass"
        ratio = self.ratios[layer.group - 1]
        if layer.k == 3:
            return ratio, self.mode
        if self.scope == "all" and is_power_of_two(layer.k * layer.k):
            return ratio, "direct"
        return 1.0, "bypass"


SCHEDULES = {
    "baseline": RatioSchedule("baseline", ratios=(1.0,), scope="3x3", overrides=()),
    "ovsf50": RatioSchedule("ovsf50", ratios=(1.0, 0.5, 0.5, 0.5)),
    "ovsf25": RatioSchedule("ovsf25", ratios=(1.0, 0.4, 0.25, 0.125)),
    "ovsf50-pool": RatioSchedule("ovsf50-pool", ratios=(1.0, 0.5, 0.5, 0.5), mode="pool4"),
    "ovsf25-pool": RatioSchedule("ovsf25-pool", ratios=(1.0, 0.4, 0.25, 0.125), mode="pool4"),
    "ovsf50-all": RatioSchedule("ovsf50-all", ratios=(1.0, 0.5, 0.5, 0.5), scope="all"),
    "ovsf25-all": RatioSchedule("ovsf25-all", ratios=(1.0, 0.4, 0.25, 0.125), scope="all"),
}


def builtin_schedule(name: str) -> RatioSchedule:
    try:
        return SCHEDULES[name.lower()]
    except KeyError:
        raise ConfigurationError(f"unknown schedule {name!r}; known: {sorted(SCHEDULES)}") from None


def apply_schedule(model: ModelSpec, schedule: Optional[RatioSchedule]) -> ModelSpec:
    if schedule is None:
        return model
    if schedule.name == "baseline" and not schedule.overrides:
        layers = [replace(l, ratio=1.0, repr_mode="bypass") for l in model.layers]
    else:
        layers = []
        for l in model.layers:
            ratio, mode = schedule.assign(l)
            layers.append(replace(l, ratio=ratio, repr_mode=mode))
    return ModelSpec(f"{model.name}", tuple(layers))


# --- builtin networks ------------------------------------------------------

def _conv(name, n_in, n_out, k, h, stride=1, padding=None, group=0, role="", bias=False):
    if padding is None:
        padding = k // 2
    return LayerSpec(name, "conv", n_in, n_out, k, h, h, stride, padding, group=group, role=role, bias=bias)


def _resnet_basic(name, blocks):
    layers = [_conv("conv1", 3, 64, 7, 224, stride=2, padding=3, role="stem")]
    n_in, h = 64, 56
    for g, (width, n_blocks) in enumerate(zip((64, 128, 256, 512), blocks), start=1):
        for b in range(n_blocks):
            stride = 2 if (b == 0 and g > 1) else 1
            pre = f"layer{g}.{b}"
            layers.append(_conv(f"{pre}.conv1", n_in, width, 3, h, stride, group=g, role="block"))
            h_out = (h + 2 - 3) // stride + 1
            layers.append(_conv(f"{pre}.conv2", width, width, 3, h_out, group=g, role="block"))
            if stride != 1 or n_in != width:
                layers.append(_conv(f"{pre}.downsample", n_in, width, 1, h, stride, 0, group=g, role="downsample"))
            n_in, h = width, h_out
    layers.append(LayerSpec("fc", "fc", 512, 1000, role="head", bias=True))
    return ModelSpec(name, tuple(layers))


def _resnet_bottleneck(name, blocks):
    layers = [_conv("conv1", 3, 64, 7, 224, stride=2, padding=3, role="stem")]
    n_in, h = 64, 56
    for g, (width, n_blocks) in enumerate(zip((64, 128, 256, 512), blocks), start=1):
        out = width * 4
        for b in range(n_blocks):
            stride = 2 if (b == 0 and g > 1) else 1
            pre = f"layer{g}.{b}"
            layers.append(_conv(f"{pre}.conv1", n_in, width, 1, h, 1, 0, group=g, role="block"))
            layers.append(_conv(f"{pre}.conv2", width, width, 3, h, stride, group=g, role="block"))
            h_out = (h + 2 - 3) // stride + 1
            layers.append(_conv(f"{pre}.conv3", width, out, 1, h_out, 1, 0, group=g, role="block"))
            if stride != 1 or n_in != out:
                layers.append(_conv(f"{pre}.downsample", n_in, out, 1, h, stride, 0, group=g, role="downsample"))
            n_in, h = out, h_out
    layers.append(LayerSpec("fc", "fc", 2048, 1000, role="head", bias=True))
    return ModelSpec(name, tuple(layers))


def _squeezenet11():
    layers = [_conv("conv1", 3, 64, 3, 224, stride=2, padding=0, role="stem", bias=True)]
    fires = [  # (input spatial, n_in, squeeze, expand)
        (55, 64, 16, 64), (55, 128, 16, 64),
        (27, 128, 32, 128), (27, 256, 32, 128),
        (13, 256, 48, 192), (13, 384, 48, 192),
        (13, 384, 64, 256), (13, 512, 64, 256),
    ]
    for i, (h, n_in, sq, ex) in enumerate(fires):
        g = i // 2 + 1
        pre = f"fire{i + 2}"
        layers.append(_conv(f"{pre}.squeeze", n_in, sq, 1, h, group=g, role="squeeze", bias=True))
        layers.append(_conv(f"{pre}.expand1x1", sq, ex, 1, h, group=g, role="expand", bias=True))
        layers.append(_conv(f"{pre}.expand3x3", sq, ex, 3, h, group=g, role="expand", bias=True))
    layers.append(_conv("classifier", 512, 1000, 1, 13, role="head", bias=True))
    return ModelSpec("squeezenet1.1", tuple(layers))


def builtin_model(name: str) -> ModelSpec:
    key = name.lower()
    if key == "resnet18":
        return _resnet_basic("resnet18", (2, 2, 2, 2))
    if key == "resnet34":
        return _resnet_basic("resnet34", (3, 4, 6, 3))
    if key == "resnet50":
        return _resnet_bottleneck("resnet50", (3, 4, 6, 3))
    if key in ("squeezenet1.1", "squeezenet1_1", "squeezenet"):
        return _squeezenet11()
    raise ConfigurationError(f"unknown model {name!r}; known: resnet18, resnet34, resnet50, squeezenet1.1")


BUILTIN_MODELS = ("resnet18", "resnet34", "resnet50", "squeezenet1.1")
