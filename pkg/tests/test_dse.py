import dataclasses
import itertools

import pytest
from sklearn.base import clone

from ovsfaccel.dse import DesignSpaceExplorer, SearchSpace, powers_of_two, search, top_k_csv
from ovsfaccel.exceptions import ConfigurationError, InfeasibleDesignError
from ovsfaccel.models import apply_schedule, builtin_model, builtin_platform, builtin_schedule
from ovsfaccel.perf import estimate
from ovsfaccel.resources import feasible
from ovsfaccel.wgen import DesignPoint

Z7045 = builtin_platform("z7045")
R18 = apply_schedule(builtin_model("resnet18"), builtin_schedule("ovsf50"))
TOY = SearchSpace(M=(32, 64, 128, 256), T_R=(8, 16, 32, 64), T_P=(4, 8, 16, 32), T_C=(16, 32, 64, 128))


def brute_force(model, platform, space, variant):
    best = None
    for m, r, p, c in itertools.product(space.M, space.T_R, space.T_P, space.T_C):
        s = DesignPoint(m, r, p, c)
        cycles = estimate(model, s, platform, variant).total_cycles
        if not feasible(s, model, platform, variant):
            continue
        if best is None or (cycles, (m, r, p, c)) < best[0]:
            best = ((cycles, (m, r, p, c)), s)
    return best[1]


def test_default_space():
    s = SearchSpace()
    assert s.M == powers_of_two(1, 1024) and s.M[-1] == 1024 and s.T_R[0] == 4 and s.T_C[-1] == 512
    assert s.size == 11 * 8 ** 3


def test_empty_axis_rejected():
    with pytest.raises(ConfigurationError):
        SearchSpace(M=())


def test_points_are_lexicographic():
    pts = list(SearchSpace(M=(2, 1), T_R=(4,), T_P=(4,), T_C=(8, 4)).points())
    assert pts == sorted(pts)


@pytest.mark.parametrize("variant", ["unzip", "baseline"])
def test_pruned_equals_brute_force(variant):
    res = search(R18, Z7045.with_bandwidth(1.1), TOY, variant)
    assert res.sigma == brute_force(R18, Z7045.with_bandwidth(1.1), TOY.for_variant(variant), variant)
    unpruned = search(R18, Z7045.with_bandwidth(1.1), TOY, variant, prune=False)
    assert unpruned.sigma == res.sigma
    assert res.stats["pruned"] + res.stats["evaluated"] == res.stats["total"]
    assert unpruned.stats["pruned"] == 0


def test_pruned_points_are_exactly_infeasible():
    res = search(R18, Z7045, TOY)
    n_bad = sum(not feasible(s, R18, Z7045) for s in TOY.points())
    assert res.stats["pruned"] == n_bad


def test_parallel_is_deterministic():
    a = search(R18, Z7045, TOY, n_jobs=1, top_k=5)
    b = search(R18, Z7045, TOY, n_jobs=4, top_k=5)
    c = search(R18, Z7045, TOY, n_jobs=2, backend="process", top_k=5)
    assert a.sigma == b.sigma == c.sigma
    assert a.top == b.top == c.top


def test_tie_break_lexicographic():
    # T_R values beyond every layer's R give identical cycles; the smallest wins
    space = SearchSpace(M=(64,), T_R=(4096, 8192), T_P=(8,), T_C=(64,))
    m = apply_schedule(builtin_model("resnet18"), builtin_schedule("baseline"))
    big = dataclasses.replace(Z7045, bram_bits=10 ** 9, lut_capacity=10 ** 7, dsp=10 ** 5)
    assert search(m, big, space, "baseline").sigma.T_R == 4096


def test_single_point_space():
    space = SearchSpace(M=(64,), T_R=(16,), T_P=(8,), T_C=(64,))
    res = search(R18, Z7045, space)
    assert res.sigma == DesignPoint(64, 16, 8, 64) and res.stats == {
        "total": 1, "pruned": 0, "evaluated": 1, "feasible": 1}


def test_bigger_platform_never_worse():
    small = search(R18, Z7045, TOY)
    big = search(R18, dataclasses.replace(Z7045, dsp=1800, bram_bits=Z7045.bram_bits * 2), TOY)
    assert big.throughput >= small.throughput


def test_infeasible_names_constraint():
    space = SearchSpace(M=(512,), T_R=(64,), T_P=(64,), T_C=(64,))
    with pytest.raises(InfeasibleDesignError) as e:
        search(R18, Z7045, space)
    assert e.value.constraint == "dsp"


def test_baseline_ignores_m():
    assert SearchSpace().for_variant("baseline").M == (1,)


def test_top_k_csv():
    res = search(R18, Z7045, TOY, top_k=3)
    lines = top_k_csv(res).splitlines()
    assert lines[0] == "rank,M,T_R,T_P,T_C,inf_per_s" and len(lines) == 4
    assert res.top[0][0] == res.sigma


class TestExplorer:
    def test_fit_predict(self):
        ex = DesignSpaceExplorer(platform=Z7045, space=TOY).fit(R18)
        assert ex.best_sigma_ == search(R18, Z7045, TOY).sigma
        assert ex.score(R18) == pytest.approx(ex.best_throughput_)

    def test_params_roundtrip(self):
        ex = DesignSpaceExplorer(platform=Z7045, variant="baseline", n_jobs=2)
        c = clone(ex)
        assert c.get_params()["variant"] == "baseline" and c.get_params()["n_jobs"] == 2

    def test_unfitted(self):
        with pytest.raises(ConfigurationError):
            DesignSpaceExplorer(platform=Z7045).predict(R18)
        with pytest.raises(ConfigurationError):
            DesignSpaceExplorer().fit(R18)
