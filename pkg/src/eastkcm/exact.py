"""Exact analysis of small constrained chains.

States of an ``n``-site system are ``n``-bit integers, bit ``i`` holding
the spin of site ``i + 1`` (for the East interval, site 1 sits next to the
frozen zero).  A site with a satisfied constraint flips 0 -> 1 at rate ``p``
and 1 -> 0 at rate ``q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy import stats as sps

from .engine import Params, ResourceCapError, UsageError, hitting_times

L_MAX_DENSE = 10  # dense eigvalsh up to 1024 states
L_MAX_SPARSE = 20
UNIF_TOL = 1e-12
ALL_STARTS_MAX_L = 10


def kcm_generator(p: float, n_sites: int, mask: Callable[[np.ndarray, int], np.ndarray]) -> sp.csr_matrix:
    """Sparse generator for single-spin refreshes allowed by ``mask``.

    ``mask(states, i)`` returns a boolean array: site ``i`` may update.
    """
    q = 1.0 - p
    N = 1 << n_sites
    states = np.arange(N, dtype=np.int64)
    rows, cols, vals = [], [], []
    for i in range(n_sites):
        ok = np.asarray(mask(states, i), dtype=bool)
        bit = (states >> i) & 1
        src = states[ok]
        dst = src ^ (1 << i)
        rate = np.where(bit[ok] == 0, p, q)
        rows.append(src)
        cols.append(dst)
        vals.append(rate)
    rows = np.concatenate(rows) if rows else np.empty(0, np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, np.int64)
    vals = np.concatenate(vals) if vals else np.empty(0)
    off = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(diag)).tocsr()


def product_measure(p: float, n_sites: int) -> np.ndarray:
    states = np.arange(1 << n_sites)
    ones = np.array([bin(s).count("1") for s in states]) if n_sites <= 4 else _popcount(states)
    return p ** ones * (1.0 - p) ** (n_sites - ones)


def _popcount(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.int64)
    c = np.zeros_like(a)
    while np.any(a):
        c += a & 1
        a >>= 1
    return c


@dataclass
class GeneratorMatrix:
    L: int
    p: float
    Q: sp.csr_matrix
    pi: np.ndarray
    offset: int = 0

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    @property
    def pi_min(self) -> float:
        return float(self.pi.min())

    def detailed_balance_error(self) -> float:
        """max |pi(x) r(x,y) - pi(y) r(y,x)| / max(pi(x) r(x,y), pi(y) r(y,x))."""
        off = self.Q - sp.diags(self.Q.diagonal())
        F = sp.diags(self.pi) @ off
        D = (F - F.T).tocoo()
        if D.nnz == 0:
            return 0.0
        M = abs(F).maximum(abs(F.T)).tocsr()
        scale = np.asarray(M[D.row, D.col]).ravel()
        return float(np.max(np.abs(D.data) / scale))

    def stationarity_error(self) -> float:
        return float(np.max(np.abs(self.Q.T @ self.pi)))

    def row_sum_error(self) -> float:
        return float(np.max(np.abs(np.asarray(self.Q.sum(axis=1)).ravel())))

    def coo_text(self) -> str:
        """Off-diagonal rates as ``row col rate`` lines."""
        C = (self.Q - sp.diags(self.Q.diagonal())).tocoo()
        order = np.lexsort((C.col, C.row))
        lines = [f"# L={self.L} p={self.p!r} dim={self.dim} bit i = spin of site offset+i+1"]
        lines += [f"{int(C.row[i])} {int(C.col[i])} {float(C.data[i])!r}" for i in order]
        return "\n".join(lines) + "\n"


def build_generator(params: Params, L: int, offset: int = 0, l_max: int = L_MAX_SPARSE) -> GeneratorMatrix:
    """East chain on ``[offset + 1, offset + L]`` with a frozen zero at ``offset``."""
    if L < 1:
        raise UsageError("L must be >= 1")
    if L > l_max:
        raise ResourceCapError(f"L={L} exceeds the exact-analysis cap {l_max}")

    def east_mask(states, i):
        site = offset + 1 + i
        if site - 1 == offset:
            return np.ones(states.shape, bool)
        return ((states >> (i - 1)) & 1) == 0

    Q = kcm_generator(params.p, L, east_mask)
    return GeneratorMatrix(L, params.p, Q, product_measure(params.p, L), offset)


def _symmetrized(G: GeneratorMatrix):
    s = np.sqrt(G.pi)
    return sp.diags(s) @ G.Q @ sp.diags(1.0 / s)


def spectral_gap(G: GeneratorMatrix) -> float:
    """Smallest nonzero eigenvalue of -Q, via the pi^(1/2)-conjugated symmetric form."""
    S = _symmetrized(G)
    S = 0.5 * (S + S.T)
    if G.L <= L_MAX_DENSE:
        ev = la.eigvalsh(-S.toarray())
        return float(ev[1])
    A = (-S).tocsc()
    try:
        ev = sla.eigsh(A, k=3, sigma=-1e-3, which="LM", return_eigenvectors=False, tol=1e-12)
    except sla.ArpackNoConvergence as exc:
        raise RuntimeError(f"eigsh did not converge: {exc}") from exc
    ev = np.sort(ev)
    return float(ev[1])


# -- uniformization -----------------------------------------------------------

@dataclass
class _Uniformized:
    P: sp.csr_matrix
    rate: float

    @classmethod
    def of(cls, G: GeneratorMatrix):
        lam = float(np.max(-G.Q.diagonal()))
        if lam <= 0:
            lam = 1.0
        P = (sp.identity(G.dim, format="csr") + G.Q / lam).tocsr()
        return cls(P, lam)

    def propagate(self, mu: np.ndarray, h: float, tol: float = UNIF_TOL, max_terms: int = 10 ** 6) -> np.ndarray:
        """mu @ exp(h Q) for row vector(s) ``mu``."""
        if h == 0.0:
            return mu.copy()
        m = self.rate * h
        K = int(sps.poisson.isf(tol, m)) + 1
        if K > max_terms:
            raise RuntimeError(f"uniformization needs {K} terms (> {max_terms})")
        w = sps.poisson.pmf(np.arange(K + 1), m)
        PT = self.P.T.tocsr()
        cur = np.ascontiguousarray(mu.T)
        acc = w[0] * cur
        for k in range(1, K + 1):
            cur = PT @ cur
            if w[k] > 0:
                acc += w[k] * cur
        return acc.T


def _tv_rows(mu: np.ndarray, pi: np.ndarray) -> np.ndarray:
    mu = np.atleast_2d(mu)
    return 0.5 * np.abs(mu - pi).sum(axis=1)


@dataclass
class TvCurve:
    times: np.ndarray
    d: np.ndarray
    start: str
    method: dict = field(default_factory=dict)

    def rows(self):
        return [(float(t), float(x)) for t, x in zip(self.times, self.d)]


def _start_matrix(G: GeneratorMatrix, start):
    N = G.dim
    if start == "all":
        return np.eye(N), "all"
    if start == "ones":
        idx = N - 1
    elif isinstance(start, (int, np.integer)):
        idx = int(start)
        if not 0 <= idx < N:
            raise UsageError("start state out of range")
    else:
        raise UsageError(f"unknown start {start!r}")
    mu = np.zeros((1, N))
    mu[0, idx] = 1.0
    return mu, ("ones" if idx == N - 1 else str(idx))


def tv_curve(G: GeneratorMatrix, times, start="all") -> TvCurve:
    """d(t) = max over the chosen starts of ||P^t(x, .) - pi||_TV.

    ``start`` is ``"all"``, ``"ones"`` (all-ones state) or a state index.
    """
    t = np.asarray(times, dtype=np.float64)
    if t.size and (np.any(np.diff(t) < 0) or t[0] < 0):
        raise UsageError("times must be sorted and non-negative")
    U = _Uniformized.of(G)
    mu, label = _start_matrix(G, start)
    out = np.empty(t.size)
    prev = 0.0
    max_row_err = 0.0
    for i, ti in enumerate(t):
        mu = U.propagate(mu, ti - prev)
        prev = ti
        max_row_err = max(max_row_err, float(np.max(np.abs(mu.sum(axis=1) - 1.0))))
        out[i] = _tv_rows(mu, G.pi).max()
    return TvCurve(t, out, label, {"method": "uniformization", "rate": U.rate,
                                    "tail_tol": UNIF_TOL, "max_row_sum_error": max_row_err})


@dataclass(frozen=True)
class MixingTime:
    L: int
    p: float
    eps: float
    t_mix: float
    gap: float
    bound: float
    start: str

    @property
    def holds(self) -> bool:
        return self.t_mix <= self.bound

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["holds"] = self.holds
        return d


def gap_bound(G: GeneratorMatrix, gap: float, eps: float) -> float:
    """0.5 / gap * (2 + log(1 / pi_min)) * log(1 / eps)."""
    return 0.5 / gap * (2.0 + math.log(1.0 / G.pi_min)) * math.log(1.0 / eps)


def t_mix(G: GeneratorMatrix, eps: float, start=None, tol: float = 1e-6,
          gap: float | None = None) -> MixingTime:
    """Bisection on the worst-start TV distance.

    All starts are used for ``L <= 10``; above that the all-ones start, which
    only gives a lower bound on the true worst case.
    """
    if not 0.0 < eps < 1.0:
        raise UsageError("eps must lie in (0, 1)")
    if start is None:
        start = "all" if G.L <= ALL_STARTS_MAX_L else "ones"
    U = _Uniformized.of(G)
    mu0, label = _start_matrix(G, start)
    if gap is None:
        gap = spectral_gap(G)

    def d(mu):
        return _tv_rows(mu, G.pi).max()

    if d(mu0) <= eps:
        return MixingTime(G.L, G.p, eps, 0.0, gap, gap_bound(G, gap, eps), label)
    lo, mu_lo = 0.0, mu0
    h = 1.0
    while True:
        mu_hi = U.propagate(mu_lo, h)
        if d(mu_hi) <= eps:
            hi = lo + h
            break
        lo, mu_lo = lo + h, mu_hi
        h *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        mu_mid = U.propagate(mu_lo, mid - lo)
        if d(mu_mid) <= eps:
            hi = mid
        else:
            lo, mu_lo = mid, mu_mid
    return MixingTime(G.L, G.p, eps, hi, gap, gap_bound(G, gap, eps), label)


def gap_table(params: Params, Ls) -> list[tuple[int, float]]:
    return [(int(L), spectral_gap(build_generator(params, int(L)))) for L in Ls]


# -- Monte Carlo cutoff profile -------------------------------------------

@dataclass
class CutoffPoint:
    s: float
    t_star: float
    d_upper: float
    d_upper_ci: tuple[float, float]
    d_lower: float
    d_lower_ci: tuple[float, float]
    d_lower_At: float
    phi: float

    @property
    def deviation(self) -> float:
        return abs(self.d_upper - self.phi)


@dataclass
class CutoffProfile:
    L: int
    p: float
    v: float
    sigma: float
    a_L: float
    replicas: int
    points: list[CutoffPoint]

    def rows(self):
        return [(pt.s, pt.t_star, pt.d_upper, *pt.d_upper_ci, pt.d_lower, *pt.d_lower_ci,
                 pt.d_lower_At, pt.phi) for pt in self.points]

    def bounds_ordered(self) -> bool:
        """d_lower <= d_upper up to the two CIs."""
        for pt in self.points:
            hw = 0.5 * (pt.d_upper_ci[1] - pt.d_upper_ci[0]) + 0.5 * (pt.d_lower_ci[1] - pt.d_lower_ci[0])
            if pt.d_lower > pt.d_upper + hw:
                return False
        return True


def mc_cutoff_experiment(params: Params, L: int, s_grid, replicas: int, v_hat: float,
                         sigma_hat: float, seed: int = 0, level: float = 0.95) -> CutoffProfile:
    """Compare P(tau(L) > L/v + s sqrt(L)) and the A_t lower bound with
    Phi(-v^1.5 s / sigma).

    tau(L) is the first time the all-ones chain on [1, L] has a zero at L;
    up to that time it coincides with the half-line process from omega*, so
    one run from omega* per replica yields both bounds.
    """
    from . import stats
    from .engine import EventStream, FrontProbe, HitProbe, LatticeState, WindowProbe, run

    if L < 2:
        raise UsageError("L must be >= 2")
    s_grid = np.asarray(s_grid, dtype=np.float64)
    t_star = L / v_hat + s_grid * math.sqrt(L)
    if np.any(t_star <= 0):
        raise UsageError("s grid produces non-positive times")
    order = np.argsort(t_star)
    ts_sorted = t_star[order]
    a_L = math.log(L)
    a_lo = int(math.floor(L - a_L)) + 1  # sites in (L - a_L, L]
    horizon = float(ts_sorted[-1])
    base = EventStream(seed)
    tau = np.empty(replicas)
    front = np.empty((replicas, s_grid.size), np.int64)
    At = np.empty((replicas, s_grid.size), bool)
    for r in range(replicas):
        rec = run(LatticeState.omega_star(), params, base.spawn(r), horizon,
                  [FrontProbe(ts_sorted), WindowProbe(ts_sorted, a_lo, L), HitProbe(L)])
        tau[r] = np.inf if rec.hit_time is None else rec.hit_time
        front[r, order] = rec.front
        At[r, order] = rec.window.all(axis=1)
    pi_A = params.p ** (L - a_lo + 1)
    pts = []
    from scipy.stats import norm
    for i, s in enumerate(s_grid):
        k_up = int(np.sum(tau > t_star[i]))
        up_ci = stats.proportion_ci(k_up, replicas, level)
        k_lo = int(np.sum(front[:, i] <= L - a_L))
        lo_ci = stats.proportion_ci(k_lo, replicas, level)
        pts.append(CutoffPoint(
            s=float(s), t_star=float(t_star[i]),
            d_upper=k_up / replicas, d_upper_ci=up_ci,
            d_lower=k_lo / replicas - params.p ** a_L,
            d_lower_ci=(lo_ci[0] - params.p ** a_L, lo_ci[1] - params.p ** a_L),
            d_lower_At=float(At[:, i].mean()) - pi_A,
            phi=float(norm.cdf(-v_hat ** 1.5 * s / sigma_hat)),
        ))
    return CutoffProfile(L, params.p, v_hat, sigma_hat, a_L, replicas, pts)


def coupling_upper_bound(params: Params, L: int, times, replicas: int, seed: int = 0):
    """Monte Carlo P(tau(L) > t) with its binomial standard error."""
    tau = hitting_times(params, L, replicas, seed)
    t = np.asarray(times, dtype=np.float64)
    est = (tau[None, :] > t[:, None]).mean(axis=1)
    se = np.sqrt(est * (1 - est) / replicas)
    return est, se
