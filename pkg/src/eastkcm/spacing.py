"""Spacing predicates: bounds on the longest all-ones run in an interval."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np

from . import stats
from .engine import (BehindFrontProbe, EventStream, LatticeState, Params, UsageError,
                     WindowProbe, run)


class Condition(str, enum.Enum):
    SSC = "SSC"
    WSC = "WSC"


@dataclass(frozen=True)
class SpacingParams:
    delta: float
    eps: float

    def __post_init__(self):
        for name in ("delta", "eps"):
            v = getattr(self, name)
            if not 0.0 < v < 0.25:
                raise UsageError(f"{name} must lie in (0, 1/4), got {v}")

    def threshold(self, n: int) -> float:
        return self.delta * n ** self.eps


def _interval(bits, interval):
    b = np.asarray(bits).ravel()
    if interval is None:
        lo, hi = 0, b.size - 1
    else:
        lo, hi = interval
    if hi < lo:
        raise UsageError("empty interval")
    if lo < 0 or hi >= b.size:
        raise UsageError("interval outside the index range")
    return b[lo:hi + 1]


def longest_one_run(bits, interval: tuple[int, int] | None = None) -> int:
    """Length of the longest run of ones in ``bits[lo..hi]`` (inclusive)."""
    b = _interval(bits, interval).astype(bool)
    if not b.any():
        return 0
    # run boundaries from the padded difference
    d = np.diff(np.r_[0, b.astype(np.int8), 0])
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return int((ends - starts).max())


def ssc_threshold(n: int, p: float) -> float:
    """10 ln n / min(|ln p|, 1)."""
    return 10.0 * math.log(n) / min(abs(math.log(p)), 1.0)


def ssc(bits, p: float, interval: tuple[int, int] | None = None) -> bool:
    b = _interval(bits, interval)
    if b.size < 2:
        raise UsageError("SSC needs |I| >= 2")
    return longest_one_run(b) <= ssc_threshold(b.size, p)


def wsc(bits, sp: SpacingParams, interval: tuple[int, int] | None = None) -> bool:
    b = _interval(bits, interval)
    return longest_one_run(b) <= sp.threshold(b.size)


def _run_limit(which: Condition, n: int, p: float, sp: SpacingParams | None) -> float:
    if which is Condition.SSC:
        return ssc_threshold(n, p)
    if sp is None:
        raise UsageError("WSC needs SpacingParams")
    return sp.threshold(n)


# -- Monte Carlo -----------------------------------------------------------------

@dataclass(frozen=True)
class FailureEstimate:
    which: str
    ell: int
    t: float
    failures: int
    replicas: int
    ci: tuple[float, float]
    threshold: float
    anchor: str

    @property
    def probability(self) -> float:
        return self.failures / self.replicas

    def row(self):
        return (self.t, self.ell, self.which, self.failures, self.replicas, *self.ci)


def spacing_failure_probability(params: Params, ell: int, t: float, replicas: int,
                                which: Condition | str = Condition.SSC,
                                sp: SpacingParams | None = None, seed: int = 0,
                                anchor: str = "start", level: float = 0.95) -> FailureEstimate:
    """Fraction of replicas of omega(t), started from omega*, failing the condition.

    ``anchor="start"`` tests the fixed interval ``[X0, X0 + ell - 1]`` where
    ``X0 = 0`` is the initial front; ``anchor="front"`` tests the ``ell``
    sites ending at the current front.
    """
    which = Condition(which)
    if ell < 2:
        raise UsageError("ell must be >= 2")
    if anchor not in ("start", "front"):
        raise UsageError("anchor must be 'start' or 'front'")
    limit = _run_limit(which, ell, params.p, sp)
    base = EventStream(seed)
    fails = 0
    for r in range(replicas):
        if anchor == "start":
            rec = run(LatticeState.omega_star(), params, base.spawn(r), t, [WindowProbe([t], 0, ell - 1)])
            bits = rec.window[0]
        else:
            rec = run(LatticeState.omega_star(), params, base.spawn(r), t, [BehindFrontProbe([t], ell - 1)])
            bits = rec.behind[0]  # the front site itself is 0
        fails += longest_one_run(bits) > limit
    return FailureEstimate(which.value, ell, float(t), int(fails), replicas,
                           stats.proportion_ci(int(fails), replicas, level), limit, anchor)


def write_failure_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "ell", "which", "failures", "replicas", "ci_lo", "ci_hi"])
        for est in rows:
            w.writerow(est.row())


# -- equilibrium checks --------------------------------------------------------

def prob_run_at_least(n: int, m: int, p: float) -> float:
    """P(longest run of ones >= m) for ``n`` i.i.d. Bernoulli(p) bits (exact DP)."""
    if m <= 0:
        return 1.0
    if m > n:
        return 0.0
    # state = length of the current trailing run, capped below m
    v = np.zeros(m)
    v[0] = 1.0
    for _ in range(n):
        nxt = np.zeros(m)
        nxt[0] = (1 - p) * v.sum()
        nxt[1:] = p * v[:-1]
        v = nxt
    return float(1.0 - v.sum())


def union_bound(n: int, m: int, p: float) -> float:
    """n p^m: some length-m block of ones starts at one of n sites."""
    return min(1.0, n * p ** m)


@dataclass(frozen=True)
class EquilibriumCheck:
    ell: int
    p: float
    failures: int
    samples: int
    ci: tuple[float, float]
    exact: float
    bound: float

    @property
    def consistent(self) -> bool:
        return self.ci[0] <= self.exact <= self.ci[1] or self.failures == 0 and self.exact < 1.0 / self.samples

    @property
    def under_bound(self) -> bool:
        return self.exact <= self.bound and self.ci[0] <= self.bound


def equilibrium_failure(ell: int, p: float, samples: int, which: Condition | str = Condition.SSC,
                        sp: SpacingParams | None = None, seed: int = 0,
                        level: float = 0.95) -> EquilibriumCheck:
    """Direct sampling from the product measure versus the exact DP and union bound."""
    which = Condition(which)
    limit = _run_limit(which, ell, p, sp)
    m = math.floor(limit) + 1  # smallest failing run length
    rng = np.random.default_rng(seed)
    fails = 0
    chunk = 4096
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        B = rng.random((n, ell)) < p
        fails += sum(longest_one_run(row) >= m for row in B)
        done += n
    return EquilibriumCheck(ell, p, int(fails), samples, stats.proportion_ci(int(fails), samples, level),
                            prob_run_at_least(ell, m, p), union_bound(ell, m, p))
