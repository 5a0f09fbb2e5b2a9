import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ovsfaccel.compress import compress_layer, dense_weight_matrix, quantize_alphas
from ovsfaccel.exceptions import ConfigurationError, InvariantError, NotMappableError, ValidationError
from ovsfaccel.models import LayerSpec
from ovsfaccel.wgen import (DesignPoint, OvsfFifo, aligner_step, alpha_demand, alpha_geometry,
                            filters_per_subtile, per_tile_cycles, rotate_bits, simulate_wgen, tiwgen_reference)


def layer(rng, n_in, n_out, k, mode, ratio=0.5, quant=True):
    cl = compress_layer(rng.standard_normal((n_out, n_in, k, k)), ratio, mode)
    return quantize_alphas(cl, 16, 8) if quant else cl


def stream(v, q, n):
    return [(v >> (t % q)) & 1 for t in range(n)]


class TestDesignPoint:
    def test_parse_and_str(self):
        s = DesignPoint.parse("256, 64,8,96")
        assert s == DesignPoint(256, 64, 8, 96) and str(s) == "256,64,8,96"

    @pytest.mark.parametrize("text", ["1,2,3", "a,b,c,d", "0,1,1,1", "1,2,3,4,5"])
    def test_bad(self, text):
        with pytest.raises(ConfigurationError):
            DesignPoint.parse(text)

    def test_ordering_is_lexicographic(self):
        assert DesignPoint(1, 9, 9, 9) < DesignPoint(2, 1, 1, 1) < DesignPoint(2, 1, 1, 2)


class TestAlphaBuffer:
    def test_ports_example(self):
        assert filters_per_subtile(64, 64, 4) == 4

    def test_second_term_vanishes_when_m_equals_tp(self):
        assert filters_per_subtile(128, 128, 4) == math.ceil(128 / 16)

    def test_mixed_terms(self):
        # M=100, T_P=64, K=3: ceil(64/9)*1 + 36*ceil(100/9)
        assert filters_per_subtile(100, 64, 3) == 8 + 36 * 12

    def test_depth_example(self):
        l = LayerSpec("c", "conv", 64, 64, 3, 8, 8, padding=1, ratio=0.5, repr_mode="crop4")
        g = alpha_geometry([l], DesignPoint(64, 16, 64, 64), 4)
        assert (g.n_f, g.depth, g.capacity) == (4, 8192, 64 * 64 * 8)

    def test_bypass_layers_ignored(self):
        l = LayerSpec("c", "conv", 3, 64, 7, 32, 32)
        assert alpha_geometry([l], DesignPoint(64, 16, 64, 64), 4).capacity == 0


class TestAligner:
    def test_full_period(self):
        assert aligner_step(0b1011, 4, 4) == (0b1011, 0b1011)

    def test_short_read_continues(self):
        v = 0b0110  # b0=0 b1=1 b2=1 b3=0
        out, wb = aligner_step(v, 2, 4)
        assert out == 0b10
        assert aligner_step(wb, 2, 4)[0] == 0b01

    def test_long_read_wraps(self):
        v = 0b0110
        out, wb = aligner_step(v, 6, 4)
        assert [(out >> i) & 1 for i in range(6)] == [0, 1, 1, 0, 0, 1]
        nxt, _ = aligner_step(wb, 4, 4)
        assert [(nxt >> i) & 1 for i in range(4)] == [1, 0, 0, 1]

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 40), st.integers(1, 40), st.data())
    def test_stream_continuity(self, m, q, data):
        v = data.draw(st.integers(0, (1 << q) - 1))
        reads = data.draw(st.integers(1, 6))
        got, cur = [], v
        for _ in range(reads):
            out, cur = aligner_step(cur, m, q)
            got += [(out >> i) & 1 for i in range(m)]
        assert got == stream(v, q, m * reads)

    def test_rotate(self):
        assert rotate_bits(0b0001, 1, 4) == 0b1000
        assert rotate_bits(0b0001, 5, 4) == 0b1000

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            aligner_step(1, 0, 4)


def test_fifo_capacity():
    OvsfFifo([0] * 16, 16, 4 ** 4)
    with pytest.raises(InvariantError):
        OvsfFifo([0] * 17, 16, 4 ** 4)


def test_cycle_law_example():
    assert per_tile_cycles(DesignPoint(256, 8, 64, 64), 8) == 128
    assert per_tile_cycles(DesignPoint(64 * 64, 8, 64, 64), 5) == 5


def test_all_ones_code():
    cl = layer(np.random.default_rng(0), 3, 5, 2, "direct", 1.0, quant=False)
    import dataclasses
    cl = dataclasses.replace(cl, retained_indices=np.array([0]), retained_count=1, alphas=np.ones((3, 5, 1)))
    w = tiwgen_reference(cl, DesignPoint(4, 1, 4, 4))
    assert np.array_equal(w, np.ones((12, 5)))


@pytest.mark.parametrize("k,mode", [(2, "direct"), (4, "direct"), (3, "crop4")])
@pytest.mark.parametrize("sigma", ["4,1,16,16", "16,1,16,8", "37,1,20,12", "256,1,64,64", "64,1,9,9"])
def test_equivalence_fixed(rng, k, mode, sigma):
    s = DesignPoint.parse(sigma)
    cl = layer(rng, 5, 7, k, mode)
    ref = tiwgen_reference(cl, s)
    sim, trace = simulate_wgen(cl, s)
    dense = dense_weight_matrix(cl)
    assert ref.dtype.kind == "i"
    assert np.array_equal(ref, dense) and np.array_equal(sim, dense)
    assert all(c == per_tile_cycles(s, cl.retained_count) for c in trace.per_tile_cycles)
    n_tiles = math.ceil(cl.n_in * k * k / s.T_P) * math.ceil(7 / s.T_C)
    assert trace.total_cycles == n_tiles * per_tile_cycles(s, cl.retained_count)
    assert trace.datapath == "bit-packed"


def test_ragged_edge(rng):
    cl = layer(rng, 5, 3, 2, "direct")  # P = 20
    s = DesignPoint(8, 1, 16, 4)
    assert np.array_equal(simulate_wgen(cl, s)[0], dense_weight_matrix(cl))


def test_pool4_functional(rng):
    cl = layer(rng, 3, 4, 3, "pool4")
    w, trace = simulate_wgen(cl, DesignPoint(16, 1, 18, 8))
    assert trace.datapath == "functional"
    assert np.allclose(w, dense_weight_matrix(cl), atol=1e-12)


def test_float_layers(rng):
    cl = layer(rng, 4, 4, 4, "direct", quant=False)
    s = DesignPoint(32, 1, 32, 8)
    assert np.allclose(simulate_wgen(cl, s)[0], dense_weight_matrix(cl), atol=1e-9)
    assert np.allclose(tiwgen_reference(cl, s), dense_weight_matrix(cl), atol=1e-9)


def test_aligner_modes(rng):
    cl = layer(rng, 4, 4, 3, "crop4")
    assert simulate_wgen(cl, DesignPoint(16, 1, 18, 4))[1].aligner_mode == "stream"
    assert simulate_wgen(cl, DesignPoint(16, 1, 16, 4))[1].aligner_mode == "segmented"


def test_ports_cover_demand(rng):
    cl = layer(rng, 6, 10, 2, "direct")
    s = DesignPoint(32, 1, 16, 8)
    trace = simulate_wgen(cl, s)[1]
    assert trace.peak_alpha_demand <= trace.alpha_ports
    assert trace.peak_alpha_demand == alpha_demand(s, 24, 10, 4)


def test_aligned_direct_demand_within_eq1():
    for m, tp in [(16, 16), (64, 16), (32, 32), (8, 16)]:
        s = DesignPoint(m, 1, tp, 16)
        assert alpha_demand(s, 64, 32, 16) <= filters_per_subtile(m, tp, 4)


def test_too_few_ports_is_an_invariant_failure(rng):
    cl = layer(rng, 6, 10, 2, "direct")
    with pytest.raises(InvariantError):
        simulate_wgen(cl, DesignPoint(32, 1, 16, 8), alpha_ports=1)


def test_rejections(rng):
    with pytest.raises(ValidationError):
        simulate_wgen(compress_layer(rng.standard_normal((2, 2, 3, 3)), 1.0, "bypass"), DesignPoint(4, 1, 4, 4))
    pf = compress_layer(rng.standard_normal((2, 2, 2, 2)), 0.5, "direct", selection="per_filter")
    with pytest.raises(NotMappableError):
        tiwgen_reference(pf, DesignPoint(4, 1, 4, 4))


def test_trace_csv(rng):
    cl = layer(rng, 2, 3, 2, "direct")
    trace = simulate_wgen(cl, DesignPoint(4, 1, 4, 2))[1]
    lines = trace.to_csv().strip().splitlines()
    assert lines[0].startswith("tile")
    assert len(lines) == 1 + len(trace.tiles)
