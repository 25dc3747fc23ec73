"""OFA-jf constrained models on k-ary trees.

Nodes are stored level by level (heap order): the root is 0 and the
children of ``i`` are ``k*i + 1 .. k*i + k``.  A node may be refreshed
when at least ``j`` of its children are 0; leaves (depth ``L``) are
unconstrained.  Only the extreme cases ``j = 1`` and ``j = k`` are
supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit
from scipy import stats as sps

from . import stats
from .engine import EventStream, ResourceCapError, UsageError

DEFAULT_NODE_CAP = 2_000_000


@dataclass(frozen=True)
class TreeModel:
    k: int
    j: int
    L: int
    p: float

    def __post_init__(self):
        if self.k < 2:
            raise UsageError("arity k must be >= 2")
        if self.j not in (1, self.k):
            raise UsageError(f"only j in {{1, k}} is supported, got j={self.j}, k={self.k}")
        if self.L < 0:
            raise UsageError("depth L must be >= 0")
        if not 0.0 < self.p < 1.0:
            raise UsageError("p must lie in (0, 1)")

    @property
    def n_nodes(self) -> int:
        return (self.k ** (self.L + 1) - 1) // (self.k - 1)

    @property
    def first_leaf(self) -> int:
        return (self.k ** self.L - 1) // (self.k - 1)

    @property
    def maximal(self) -> bool:
        return self.j == self.k

    def with_depth(self, L: int) -> "TreeModel":
        return TreeModel(self.k, self.j, L, self.p)


def children(model: TreeModel, node: int) -> range:
    if node >= model.first_leaf:
        return range(0)
    return range(model.k * node + 1, model.k * node + model.k + 1)


def tree_constraint(model: TreeModel, state, node: int) -> bool:
    """Leaves are always free; internal nodes need ``j`` zero children."""
    if not 0 <= node < model.n_nodes:
        raise UsageError(f"node {node} outside tree")
    ch = children(model, node)
    if not ch:
        return True
    zeros = sum(1 for c in ch if state[c] == 0)
    return zeros >= model.j


@njit(cache=True)
def _tau_gillespie(rng, p, k, j, n_nodes, first_leaf):
    """First legal root ring from all ones, legal rings only."""
    spin = np.ones(n_nodes, np.uint8)
    nz = np.zeros(first_leaf, np.int64)
    uset = np.empty(n_nodes, np.int64)
    pos = -np.ones(n_nodes, np.int64)
    nu = 0
    for i in range(first_leaf, n_nodes):
        uset[nu] = i
        pos[i] = nu
        nu += 1
    t = 0.0
    while True:
        t += rng.standard_exponential() / nu
        x = uset[int(rng.random() * nu)]
        if x == 0:
            return t
        c = 1 if rng.random() < p else 0
        if spin[x] == c:
            continue
        spin[x] = c
        par = (x - 1) // k
        was = nz[par] >= j
        nz[par] += -1 if c == 1 else 1
        now = nz[par] >= j
        if now and not was:
            pos[par] = nu
            uset[nu] = par
            nu += 1
        elif was and not now:
            kk = pos[par]
            nu -= 1
            last = uset[nu]
            uset[kk] = last
            pos[last] = kk
            pos[par] = -1


@njit(cache=True)
def _tau_graphical(rng, p, k, j, n_nodes, first_leaf):
    """Same law, every clock of every node simulated (one coin per ring)."""
    spin = np.ones(n_nodes, np.uint8)
    nz = np.zeros(first_leaf, np.int64)
    t = 0.0
    while True:
        t += rng.standard_exponential() / n_nodes
        x = int(rng.random() * n_nodes)
        c = 1 if rng.random() < p else 0
        legal = x >= first_leaf or nz[x] >= j
        if not legal:
            continue
        if x == 0:
            return t
        if spin[x] == c:
            continue
        spin[x] = c
        par = (x - 1) // k
        nz[par] += -1 if c == 1 else 1


@dataclass
class HittingSample:
    model: TreeModel
    tau: np.ndarray
    seed: int

    @property
    def t_hit(self) -> stats.SampleSummary:
        return stats.summarize(self.tau)

    def mean_abs_dev(self) -> float:
        return float(np.mean(np.abs(self.tau - self.tau.mean())))


def simulate_tau(model: TreeModel, replicas: int, seed: int = 0, graphical: bool = False,
                 node_cap: int = DEFAULT_NODE_CAP) -> HittingSample:
    """Samples of tau(L) from the all-ones configuration.

    ``graphical=True`` drives every node clock (global rate = node count), so
    two models with the same seed see the same rings and coins.
    """
    if model.n_nodes > node_cap:
        raise ResourceCapError(f"{model.n_nodes} nodes exceeds cap {node_cap}")
    kern = _tau_graphical if graphical else _tau_gillespie
    base = EventStream(seed)
    out = np.empty(replicas)
    for r in range(replicas):
        out[r] = kern(base.spawn(r).rng, float(model.p), model.k, model.j,
                      model.n_nodes, model.first_leaf)
    return HittingSample(model, out, seed)


def exact_mean_tau(model: TreeModel) -> float:
    """E[tau] by an absorption-time linear solve on the full tree chain.

    Any legal root ring absorbs, so the root spin never moves before tau and
    the chain lives on the non-root nodes.
    """
    from .exact import kcm_generator

    n = model.n_nodes
    if n > 15:
        raise ResourceCapError("exact tree solve limited to 15 nodes")
    m = n - 1  # bit b <-> node b + 1

    def mask(states, b):
        node = b + 1
        ch = children(model, node)
        if not ch:
            return np.ones(states.shape, bool)
        zeros = sum(((states >> (c - 1)) & 1) == 0 for c in ch)
        return zeros >= model.j

    Q = kcm_generator(model.p, m, mask) if m > 0 else sp.csr_matrix((1, 1))
    states = np.arange(1 << m)
    root_ch = children(model, 0)
    if root_ch:
        zeros = sum(((states >> (c - 1)) & 1) == 0 for c in root_ch)
        kill = (zeros >= model.j).astype(np.float64)
    else:
        kill = np.ones(states.size)
    A = (-Q + sp.diags(kill)).tocsc()
    mt = spla.spsolve(A, np.ones(states.size))
    return float(mt[(1 << m) - 1])


# -- Dekking-Host -------------------------------------------------------------

@dataclass(frozen=True)
class DekkingHostReport:
    k: int
    L: int
    t_hit_L: float
    t_hit_L1: float
    t_hit_L1_hw: float
    max_mean: float
    max_hw: float
    mad_L: float
    mad_hw: float
    diff_hw: float
    dominance: stats.DominanceResult

    @property
    def max_check(self) -> bool:
        """E[max of k copies of tau(L)] <= T_hit(L+1) + CI."""
        return self.max_mean <= self.t_hit_L1 + stats.combined_half_width(self.max_hw, self.t_hit_L1_hw)

    @property
    def mad_check(self) -> bool:
        """E|tau(L) - T_hit(L)| <= 2 (T_hit(L+1) - T_hit(L)) + CI."""
        rhs = 2 * (self.t_hit_L1 - self.t_hit_L)
        return self.mad_L <= rhs + stats.combined_half_width(self.mad_hw, 2 * self.diff_hw)

    @property
    def passed(self) -> bool:
        return self.max_check and self.mad_check and self.dominance.passed

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "dominance"}
        d.update(max_check=self.max_check, mad_check=self.mad_check,
                 dominance_passed=self.dominance.passed,
                 dominance_gap=self.dominance.worst_gap, dominance_band=self.dominance.band,
                 passed=self.passed)
        return d


def dekking_host_check(sample_L: HittingSample, sample_L1: HittingSample, k: int | None = None,
                       level: float = 0.01, n_max: int | None = None, seed: int = 0,
                       ci_level: float = 0.95) -> DekkingHostReport:
    """Check the max-of-k domination and its mean-absolute-deviation corollary."""
    for s in (sample_L, sample_L1):
        if not s.model.maximal:
            raise UsageError("Dekking-Host domination needs the maximal model (j = k)")
    k = sample_L.model.k if k is None else k
    a = np.asarray(sample_L.tau)
    b = np.asarray(sample_L1.tau)
    rng = np.random.default_rng(seed)
    n_max = b.size if n_max is None else n_max
    mx = a[rng.integers(0, a.size, (n_max, k))].max(axis=1)
    z = stats.z_value(ci_level)
    sa, sb, sm = stats.summarize(a, ci_level), stats.summarize(b, ci_level), stats.summarize(mx, ci_level)
    dev = np.abs(a - a.mean())
    sd_dev = stats.summarize(dev, ci_level)
    return DekkingHostReport(
        k=k, L=sample_L.model.L,
        t_hit_L=sa.mean, t_hit_L1=sb.mean, t_hit_L1_hw=sb.half_width,
        max_mean=sm.mean, max_hw=sm.half_width,
        mad_L=sd_dev.mean, mad_hw=sd_dev.half_width,
        diff_hw=stats.combined_half_width(sa.half_width, sb.half_width),
        dominance=stats.dominance_band(b, mx, level),
    )


# -- scans ------------------------------------------------------------------

@dataclass(frozen=True)
class ScanRow:
    L: int
    t_hit: float
    t_hit_ci: tuple[float, float]
    mad: float
    mad_ci: tuple[float, float]
    replicas: int


@dataclass
class ConcentrationScan:
    k: int
    j: int
    p: float
    rows: list[ScanRow]
    delta: float = 0.25

    def windowed_min(self) -> list[tuple[int, int, float, float, float]]:
        """(n, argmin L, min MAD, ci_lo, ci_hi) over L in [n, (1+delta) n]."""
        out = []
        for r in self.rows:
            n = r.L
            if n == 0:
                continue
            sel = [row for row in self.rows if n <= row.L <= (1 + self.delta) * n]
            best = min(sel, key=lambda row: row.mad)
            out.append((n, best.L, best.mad, best.mad_ci[0], best.mad_ci[1]))
        return out

    def no_increasing_trend(self) -> bool:
        """Least-squares slope of windowed-min MAD vs n is not positive beyond 2 SE."""
        wm = self.windowed_min()
        n = np.array([w[0] for w in wm], dtype=np.float64)
        y = np.array([w[2] for w in wm])
        hw = np.array([0.5 * (w[4] - w[3]) for w in wm])
        if n.size < 2:
            return True
        wts = 1.0 / np.maximum(hw / stats.z_value(0.95), 1e-12) ** 2
        X = np.vstack([n, np.ones_like(n)]).T
        cov = np.linalg.inv(X.T @ (wts[:, None] * X))
        beta = cov @ X.T @ (wts * y)
        resid = y - X @ beta
        # inflate when the scatter exceeds what the CIs explain
        scale = max(1.0, float(np.sum(wts * resid ** 2)) / max(n.size - 2, 1))
        se = math.sqrt(cov[0, 0] * scale)
        return bool(beta[0] <= 2 * se)

    def loglog_slope(self) -> tuple[float, float]:
        """Slope (and SE) of log T_hit against log L over rows with L >= 1."""
        rows = [r for r in self.rows if r.L >= 1]
        x = np.log([r.L for r in rows])
        y = np.log([r.t_hit for r in rows])
        res = sps.linregress(x, y)
        return float(res.slope), float(res.stderr)


def concentration_scan(k: int, j: int, p: float, Ls, replicas: int, seed: int = 0,
                       delta: float = 0.25, n_boot: int = 500) -> ConcentrationScan:
    rows = []
    for L in Ls:
        model = TreeModel(k, j, int(L), p)
        hs = simulate_tau(model, replicas, seed + 1000 * int(L))
        s = hs.t_hit
        mad_ci = stats.bootstrap_ci(hs.tau, lambda x: np.mean(np.abs(x - x.mean())),
                                    n_resamples=n_boot, seed=seed + int(L))
        rows.append(ScanRow(int(L), s.mean, (s.ci_lo, s.ci_hi), hs.mean_abs_dev(), mad_ci, replicas))
    return ConcentrationScan(k, j, p, rows, delta)


# -- bootstrap percolation map --------------------------------------------

@dataclass(frozen=True)
class BootstrapMap:
    k: int
    j: int
    p: float

    def __post_init__(self):
        if self.k < 1 or not 1 <= self.j <= self.k:
            raise UsageError("need 1 <= j <= k")
        if not 0.0 <= self.p <= 1.0:
            raise UsageError("p must lie in [0, 1]")

    def __call__(self, lam):
        return bootstrap_g(self, lam)

    def derivative_at_zero(self) -> float:
        # only the i = 1 term is linear in lambda
        return self.p * self.k if self.k - self.j + 1 <= 1 else 0.0


def bootstrap_g(bmap: BootstrapMap, lam):
    """p * sum_{i=k-j+1}^{k} C(k,i) lam^i (1-lam)^(k-i)."""
    lam = np.asarray(lam, dtype=np.float64)
    if np.any((lam < 0) | (lam > 1)):
        raise UsageError("lambda must lie in [0, 1]")
    k = bmap.k
    tot = np.zeros_like(lam)
    for i in range(k - bmap.j + 1, k + 1):
        tot = tot + comb(k, i) * lam ** i * (1 - lam) ** (k - i)
    out = bmap.p * tot
    return float(out) if out.ndim == 0 else out


_GRID = np.linspace(0.0, 1.0, (1 << 14) + 1)[1:]


def has_nonzero_fixed_point(bmap: BootstrapMap) -> bool:
    """Whether g_p(lam) >= lam somewhere in (0, 1].

    Grid scan plus one Newton step near the maximum of g - lam; a slope
    above 1 at 0 also counts, since g - lam is then positive just right of 0
    while g(1) - 1 = p - 1 <= 0.
    """
    if bmap.derivative_at_zero() > 1.0:
        return True
    h = bootstrap_g(bmap, _GRID) - _GRID
    i = int(np.argmax(h))
    if h[i] >= 0.0:
        return True
    lam = _GRID[i]
    eps = 1e-7
    g1 = (bootstrap_g(bmap, min(lam + eps, 1.0)) - bootstrap_g(bmap, max(lam - eps, 0.0))) / (2 * eps)
    g2 = (bootstrap_g(bmap, min(lam + eps, 1.0)) - 2 * bootstrap_g(bmap, lam)
          + bootstrap_g(bmap, max(lam - eps, 0.0))) / eps ** 2
    if g2 < 0:
        lam2 = float(np.clip(lam - (g1 - 1.0) / g2, 1e-12, 1.0))
        if bootstrap_g(bmap, lam2) - lam2 >= 0.0:
            return True
    return False


def critical_density(k: int, j: int, tol: float = 1e-12) -> float:
    """sup{p : 0 is the only fixed point of g_p}, by bisection in p."""
    if not tol > 0:
        raise UsageError("tol must be > 0")
    if not has_nonzero_fixed_point(BootstrapMap(k, j, 1.0)):
        return 1.0
    lo, hi = 0.0, 1.0
    if has_nonzero_fixed_point(BootstrapMap(k, j, lo)):
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if has_nonzero_fixed_point(BootstrapMap(k, j, mid)):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi) if hi < 1.0 else 1.0
