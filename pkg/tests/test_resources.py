import dataclasses
import warnings

import pytest
from hypothesis import given, settings, strategies as st

from ovsfaccel.exceptions import ConfigurationError
from ovsfaccel.models import LayerSpec, ModelSpec, apply_schedule, builtin_model, builtin_platform, builtin_schedule
from ovsfaccel.resources import (ResourceVector, alpha_words, check, feasible, ram_bits, selective_lut_overhead,
                                 usage)
from ovsfaccel.wgen import DesignPoint

Z7045 = builtin_platform("z7045")
R34 = apply_schedule(builtin_model("resnet34"), builtin_schedule("ovsf50"))
TOY = ModelSpec("toy", [LayerSpec("a", "conv", 16, 32, 3, 8, 8, padding=1, ratio=0.5, repr_mode="crop4"),
                        LayerSpec("b", "fc", 32, 10)])


def test_dsp_example_fits():
    u = usage(DesignPoint(128, 16, 8, 96), R34, Z7045)
    assert u.dsp == 896
    assert "dsp" not in feasible(DesignPoint(128, 16, 8, 96), R34, Z7045).violations


def test_dsp_example_too_large():
    f = feasible(DesignPoint(256, 64, 64, 16), R34, Z7045)
    assert f.usage.dsp == 1280 and "dsp" in f.violations and not f


def test_minimal_generator():
    assert usage(DesignPoint(1, 4, 4, 4), TOY, Z7045).dsp == 1 + 16


def test_ram_toy_arithmetic():
    assert ram_bits(DesignPoint(1, 4, 4, 4), 100, 16, 4) == 2880


def test_variant_ram_difference():
    s = DesignPoint(64, 32, 8, 64)
    un = usage(s, R34, Z7045, "unzip")
    base = usage(s, R34, Z7045, "baseline")
    words = alpha_words(R34, s)
    assert base.bram_bits - un.bram_bits == 2 * 8 * 64 * 16 - (words * 16 + 4 ** 4)
    assert base.dsp == 8 * 64


def test_alpha_policies():
    s = DesignPoint(64, 32, 8, 64)
    assert alpha_words(R34, s, "network") > alpha_words(R34, s, "block")
    assert not feasible(s, R34, Z7045, alpha_policy="network")
    with pytest.raises(ConfigurationError):
        alpha_words(R34, s, "layer")


def test_alpha_words_rounded_to_ports():
    s = DesignPoint(64, 16, 64, 64)
    assert alpha_words(TOY, s, "network") == 16 * 32 * 8  # divisible by the 4 ports


def test_exact_capacity_is_feasible():
    s = DesignPoint(8, 8, 8, 8)
    u = usage(s, TOY, Z7045)
    plat = dataclasses.replace(Z7045, dsp=u.dsp, bram_bits=u.bram_bits, lut_capacity=u.luts)
    assert check(u, plat).ok
    tight = dataclasses.replace(plat, dsp=u.dsp - 1)
    assert check(u, tight).violations == ("dsp",)


def test_lut_check_can_be_disabled():
    s = DesignPoint(8, 8, 8, 8)
    u = usage(s, TOY, Z7045)
    plat = dataclasses.replace(Z7045, lut_capacity=1, check_luts=False)
    assert check(u, plat).ok
    assert not check(u, dataclasses.replace(plat, check_luts=True)).ok


def test_synthetic_lut_warning(fresh_lut_warning):
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        usage(DesignPoint(8, 8, 8, 8), TOY, Z7045)
        usage(DesignPoint(8, 8, 8, 8), TOY, Z7045)
    assert sum("synthetic" in str(w.message) for w in rec) == 1


def test_selective_adds_luts():
    s = DesignPoint(8, 8, 8, 64)
    assert usage(s, TOY, Z7045, selective=True).luts > usage(s, TOY, Z7045, selective=False).luts


@pytest.mark.parametrize("tp", [4, 8, 64])
def test_selective_overhead_budget(tp):
    s = DesignPoint(1, 8, tp, 512)
    assert selective_lut_overhead(Z7045, s, 512) < 0.07


def test_negative_resources_rejected():
    with pytest.raises(ConfigurationError):
        ResourceVector(-1, 0, 0)


AX = st.sampled_from([1, 2, 4, 8, 16, 32, 64, 128])


@settings(max_examples=100, deadline=None)
@given(AX, AX, AX, AX, st.sampled_from(["M", "T_R", "T_P", "T_C"]), st.sampled_from(["unzip", "baseline"]))
def test_usage_monotone(m, tr, tp, tc, axis, variant):
    s = DesignPoint(m, tr, tp, tc)
    bigger = dataclasses.replace(s, **{axis: getattr(s, axis) * 2})
    a, b = usage(s, R34, Z7045, variant), usage(bigger, R34, Z7045, variant)
    assert b.dsp >= a.dsp and b.bram_bits >= a.bram_bits and b.luts >= a.luts
