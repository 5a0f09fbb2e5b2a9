"""Exhaustive design-space exploration over generator width and tile sizes."""
from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from sklearn.base import BaseEstimator

from .exceptions import ConfigurationError, InfeasibleDesignError
from .models import ModelSpec, PlatformSpec, apply_schedule
from .perf import PerformanceEstimate, estimate
from .resources import RESOURCE_NAMES, ResourceVector, check, check_variant, usage
from .wgen import DesignPoint


def powers_of_two(lo, hi):
    out, v = [], 1
    while v <= hi:
        if v >= lo:
            out.append(v)
        v *= 2
    return tuple(out)


@dataclass(frozen=True)
class SearchSpace:
    M: tuple = powers_of_two(1, 1024)
    T_R: tuple = powers_of_two(4, 512)
    T_P: tuple = powers_of_two(4, 512)
    T_C: tuple = powers_of_two(4, 512)

    def __post_init__(self):
        for name in ("M", "T_R", "T_P", "T_C"):
            vals = tuple(sorted(set(int(v) for v in getattr(self, name))))
            if not vals:
                raise ConfigurationError(f"search space axis {name} is empty")
            if vals[0] < 1:
                raise ConfigurationError(f"search space axis {name} must hold positive values")
            object.__setattr__(self, name, vals)

    @property
    def size(self) -> int:
        return len(self.M) * len(self.T_R) * len(self.T_P) * len(self.T_C)

    def points(self):
        """Design points in lexicographic order."""
        for m, r, p, c in itertools.product(self.M, self.T_R, self.T_P, self.T_C):
            yield DesignPoint(m, r, p, c)

    def for_variant(self, variant):
        # the baseline engine has no generator, so M is irrelevant
        return SearchSpace(M=(1,), T_R=self.T_R, T_P=self.T_P, T_C=self.T_C) if variant == "baseline" else self


@dataclass
class SearchResult:
    sigma: DesignPoint
    estimate: PerformanceEstimate
    usage: ResourceVector
    stats: dict
    top: list = field(default_factory=list)

    @property
    def throughput(self) -> float:
        return self.estimate.throughput


def _rank_key(cycles, sigma):
    # fewest cycles first, then the lexicographically smallest point
    return (cycles, (sigma.M, sigma.T_R, sigma.T_P, sigma.T_C))


def _evaluate(args):
    sigma, model, platform, variant, selective, alpha_policy, prune = args
    used = usage(sigma, model, platform, variant, selective, alpha_policy)
    ok = check(used, platform)
    if prune and not ok:
        return sigma, used, None
    est = estimate(model, sigma, platform, variant, selective, alpha_policy=alpha_policy)
    return sigma, used, (est.total_cycles if ok else None, est.total_cycles)


def search(model: ModelSpec, platform: PlatformSpec, space: Optional[SearchSpace] = None, variant="unzip",
           schedule=None, selective: Optional[bool] = None, alpha_policy="block", prune=True,
           n_jobs=1, backend="thread", top_k=0) -> SearchResult:
    """Best feasible design point by modelled throughput.

    With ``prune`` (the default) infeasible points are discarded before any
    performance evaluation; ``prune=False`` evaluates every point and filters
    afterwards, which serves as a brute-force cross-check. Ties go to the
    lexicographically smallest ``(M, T_R, T_P, T_C)``, so the answer does not
    depend on ``n_jobs`` or completion order.
    """
    check_variant(variant)
    if schedule is not None:
        model = apply_schedule(model, schedule)
    if selective is None:
        selective = variant == "unzip"
    space = (space or SearchSpace()).for_variant(variant)
    jobs = [(s, model, platform, variant, selective, alpha_policy, prune) for s in space.points()]
    if n_jobs == 1:
        results = list(map(_evaluate, jobs))
    else:
        pool = {"thread": ThreadPoolExecutor, "process": ProcessPoolExecutor}.get(backend)
        if pool is None:
            raise ConfigurationError(f"backend must be 'thread' or 'process', got {backend!r}")
        with pool(max_workers=None if n_jobs < 1 else n_jobs) as ex:
            results = list(ex.map(_evaluate, jobs, chunksize=max(1, len(jobs) // 64)))

    ranked, pruned, evaluated = [], 0, 0
    for sigma, used, res in results:
        if res is None:
            pruned += 1
            continue
        evaluated += 1
        if res[0] is not None:
            ranked.append((_rank_key(res[0], sigma), sigma, used))
    if not ranked:
        raise _no_feasible(results, platform)
    ranked.sort(key=lambda t: t[0])
    _, best, best_used = ranked[0]
    est = estimate(model, best, platform, variant, selective, alpha_policy=alpha_policy)
    stats = {"total": space.size, "pruned": pruned, "evaluated": evaluated, "feasible": len(ranked)}
    top = [(s, platform.freq_mhz * 1e6 / k[0]) for k, s, _ in ranked[:top_k]]
    return SearchResult(sigma=best, estimate=est, usage=best_used, stats=stats, top=top)


def _no_feasible(results, platform):
    avail = {"dsp": platform.dsp, "bram_bits": platform.bram_bits, "luts": platform.lut_capacity}
    names = RESOURCE_NAMES if platform.check_luts else RESOURCE_NAMES[:2]
    # the constraint that stays violated even at its most favourable point
    best = {n: min(getattr(u, n) / avail[n] for _, u, _ in results) for n in names}
    tight = max(best, key=best.get)
    return InfeasibleDesignError(
        f"no feasible design point: {tight} needs at least {best[tight]:.2f}x the available budget",
        constraint=tight)


def top_k_csv(result: SearchResult) -> str:
    lines = ["rank,M,T_R,T_P,T_C,inf_per_s"]
    for i, (s, thr) in enumerate(result.top, 1):
        lines.append(f"{i},{s.M},{s.T_R},{s.T_P},{s.T_C},{thr:.6g}")
    return "\n".join(lines) + "\n"


class DesignSpaceExplorer(BaseEstimator):
    """Estimator wrapper around :func:`search`.

    ``fit(model)`` runs the exploration; ``predict(model)`` returns the
    modelled inferences per second of the chosen point on ``model``.
    """

    def __init__(self, platform=None, variant="unzip", schedule=None, space=None, selective=None,
                 alpha_policy="block", n_jobs=1, top_k=0):
        self.platform = platform
        self.variant = variant
        self.schedule = schedule
        self.space = space
        self.selective = selective
        self.alpha_policy = alpha_policy
        self.n_jobs = n_jobs
        self.top_k = top_k

    def fit(self, X, y=None):
        if self.platform is None:
            raise ConfigurationError("DesignSpaceExplorer needs a platform")
        res = search(X, self.platform, self.space, self.variant, self.schedule, self.selective,
                     self.alpha_policy, n_jobs=self.n_jobs, top_k=self.top_k)
        self.result_ = res
        self.best_sigma_ = res.sigma
        self.best_throughput_ = res.throughput
        self.stats_ = res.stats
        return self

    def predict(self, X):
        if not hasattr(self, "best_sigma_"):
            raise ConfigurationError("DesignSpaceExplorer is not fitted")
        sel = self.selective if self.selective is not None else self.variant == "unzip"
        return estimate(X, self.best_sigma_, self.platform, self.variant, sel, self.schedule,
                        self.alpha_policy).throughput

    def score(self, X, y=None):
        return self.predict(X)
