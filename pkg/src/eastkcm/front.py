"""Front statistics for the East process started from a single zero.

Every simulation here starts from ``LatticeState.omega_star()`` (zero at the
origin, ones elsewhere) and runs with left truncation at ``w_keep`` sites
behind the front.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from . import stats
from .engine import (
    DEFAULT_W_KEEP,
    BehindFrontProbe,
    EventStream,
    FrontProbe,
    LatticeState,
    Params,
    UsageError,
    run,
)


@dataclass
class FrontTrace:
    dt: float
    times: np.ndarray
    X: np.ndarray
    seed: int
    replica: int
    behind: np.ndarray | None = None

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.X)

    def burn_in_index(self, burn_in: float) -> int:
        return int(np.searchsorted(self.times, burn_in, side="left"))


def _sample_grid(horizon, dt):
    n = int(math.floor(horizon / dt + 1e-9))
    return np.arange(n + 1) * dt


def trace_front(params: Params, horizon: float, dt: float = 1.0, replicas: int = 1,
                seed: int = 0, w_keep: int | None = DEFAULT_W_KEEP,
                behind_width: int = 0, replica_ids=None) -> list[FrontTrace]:
    """Front positions X(n*dt) for independent replicas from omega*.

    With ``behind_width > 0`` the bits at offsets -1..-behind_width are
    recorded at the same times.  ``replica_ids`` overrides ``range(replicas)``
    so a subset can be run on its own.
    """
    if not dt > 0:
        raise UsageError("dt must be > 0")
    if replica_ids is None:
        if replicas < 1:
            raise UsageError("replicas must be >= 1")
        replica_ids = range(replicas)
    times = _sample_grid(horizon, dt)
    base = EventStream(seed)
    probes = [FrontProbe(times)]
    if behind_width:
        probes.append(BehindFrontProbe(times, behind_width))
    out = []
    for r in replica_ids:
        rec = run(LatticeState.omega_star(), params, base.spawn(r), horizon, probes, w_keep=w_keep)
        out.append(FrontTrace(dt, rec.front_times, rec.front, seed, r,
                              rec.behind if behind_width else None))
    return out


# -- velocity ---------------------------------------------------------------

@dataclass(frozen=True)
class VelocityEstimate:
    v: float
    ci_lo: float
    ci_hi: float
    window: tuple[float, float]
    replicas: int
    degenerate_ci: bool
    q_star: float | None = None
    q_star_hw: float | None = None
    v_formula: float | None = None
    v_formula_hw: float | None = None

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_hi - self.ci_lo)

    @property
    def in_window(self) -> bool:
        lo, hi = self.window
        return lo <= self.v <= hi

    @property
    def formula_agrees(self) -> bool | None:
        """|v - (q - p q*)| within two combined CI half-widths."""
        if self.v_formula is None:
            return None
        tol = 2 * stats.combined_half_width(self.half_width, self.v_formula_hw)
        return abs(self.v - self.v_formula) < tol

    def to_dict(self) -> dict:
        return {
            "v": self.v, "ci": [self.ci_lo, self.ci_hi], "half_width": self.half_width,
            "window": list(self.window), "in_window": self.in_window,
            "replicas": self.replicas, "degenerate_ci": self.degenerate_ci,
            "q_star": self.q_star, "q_star_hw": self.q_star_hw,
            "v_formula": self.v_formula, "v_formula_hw": self.v_formula_hw,
            "formula_agrees": self.formula_agrees,
        }


def velocity_window(params: Params) -> tuple[float, float]:
    """[q - p, q^2] from q < q* <= 1, floored at 0."""
    p, q = params.p, params.q
    return max(q - p, 0.0), q * q


def _default_burn_in(traces):
    return traces[0].times[-1] / 10.0


def estimate_velocity(traces: list[FrontTrace], burn_in: float | None = None,
                      params: Params | None = None, level: float = 0.95) -> VelocityEstimate:
    """Pooled post-burn-in slope with a replica-based CI.

    When ``params`` is given and the traces carry behind-front bits, also
    reports ``v_formula = q - p * q*_hat`` where ``q*_hat`` is the
    post-burn-in frequency of a zero at offset -1.
    """
    if burn_in is None:
        burn_in = _default_burn_in(traces)
    slopes = []
    qs = []
    for tr in traces:
        b = tr.burn_in_index(burn_in)
        if b >= tr.times.size - 1:
            raise UsageError("burn_in must be < horizon")
        slopes.append((tr.X[-1] - tr.X[b]) / (tr.times[-1] - tr.times[b]))
        if tr.behind is not None and tr.behind.size:
            qs.append(float(np.mean(tr.behind[b:, 0] == 0)))
    s = stats.summarize(slopes, level)
    degenerate = len(slopes) < 2
    window = velocity_window(params) if params is not None else (math.nan, math.nan)
    kw = {}
    if params is not None and len(qs) == len(traces):
        qsum = stats.summarize(qs, level)
        kw = dict(q_star=qsum.mean, q_star_hw=qsum.half_width,
                  v_formula=params.q - params.p * qsum.mean,
                  v_formula_hw=params.p * qsum.half_width)
    lo, hi = (s.mean, s.mean) if degenerate else (s.ci_lo, s.ci_hi)
    return VelocityEstimate(s.mean, lo, hi, window, len(slopes), degenerate, **kw)


# -- variance rate ----------------------------------------------------------

@dataclass(frozen=True)
class SigmaStarEstimate:
    replica: float
    replica_ci: tuple[float, float]
    covsum: float
    covsum_ci: tuple[float, float]
    lag_cutoff: int
    warning: str | None = None

    @property
    def replica_hw(self) -> float:
        return 0.5 * (self.replica_ci[1] - self.replica_ci[0])

    @property
    def covsum_hw(self) -> float:
        return 0.5 * (self.covsum_ci[1] - self.covsum_ci[0])

    @property
    def consistent(self) -> bool:
        tol = 2 * stats.combined_half_width(self.replica_hw, self.covsum_hw)
        return abs(self.replica - self.covsum) < tol

    def to_dict(self) -> dict:
        return {
            "replica": self.replica, "replica_ci": list(self.replica_ci),
            "covsum": self.covsum, "covsum_ci": list(self.covsum_ci),
            "lag_cutoff": self.lag_cutoff, "consistent": self.consistent,
            "warning": self.warning,
        }


def _post_burn_increments(traces, burn_in):
    return [tr.increments[tr.burn_in_index(burn_in):] for tr in traces]


def estimate_sigma_star(traces: list[FrontTrace], burn_in: float | None = None,
                        max_lag: int = 50, level: float = 0.95) -> SigmaStarEstimate:
    """Two estimators of the variance rate of the front.

    (a) Var over replicas of the post-burn-in displacement divided by its
    duration; (b) dt^-1 [Var(xi) + 2 sum_l Cov(xi_0, xi_l)] on pooled
    post-burn-in increments, summing lags until the first one whose CI
    contains 0 (at most ``max_lag``).
    """
    if max_lag < 1:
        raise UsageError("max_lag must be >= 1")
    if burn_in is None:
        burn_in = _default_burn_in(traces)
    dt = traces[0].dt
    disp, durs = [], []
    for tr in traces:
        b = tr.burn_in_index(burn_in)
        disp.append(tr.X[-1] - tr.X[b])
        durs.append(tr.times[-1] - tr.times[b])
    disp = np.asarray(disp, dtype=np.float64)
    T = float(np.mean(durs))
    n = disp.size
    if n > 1:
        s2 = float(disp.var(ddof=1))
        a = (1 - level) / 2
        lo = (n - 1) * s2 / sps.chi2.ppf(1 - a, n - 1)
        hi = (n - 1) * s2 / sps.chi2.ppf(a, n - 1)
        rep, rep_ci = s2 / T, (lo / T, hi / T)
    else:
        rep, rep_ci = math.nan, (math.nan, math.nan)

    incs = _post_burn_increments(traces, burn_in)
    curve, per = stats.autocov_pooled(incs, max_lag, level)
    first0 = curve.first_zero_lag()
    cut = max_lag + 1 if first0 is None else first0
    g = curve.acov
    val = (g[0] + 2 * g[1:cut].sum()) / dt
    per_val = (per[:, 0] + 2 * per[:, 1:cut].sum(axis=1)) / dt
    if per_val.size > 1:
        lens = np.array([s.size for s in incs if s.size > max_lag], dtype=np.float64)
        w = lens / lens.sum()
        se = math.sqrt(np.sum(w ** 2 * (per_val - val) ** 2) * per_val.size / (per_val.size - 1))
    else:
        se = math.sqrt(2.0 / max(curve.n, 1)) * abs(val)
    z = stats.z_value(level)
    warning = None
    if val < -z * se:
        warning = "covariance-sum estimate significantly negative: inconsistent lag window"
        warnings.warn(warning)
    return SigmaStarEstimate(rep, rep_ci, float(val), (val - z * se, val + z * se), cut - 1, warning)


@dataclass(frozen=True)
class MixingReport:
    curve: stats.AutocovCurve
    first_zero_lag: int | None

    def to_rows(self):
        c = self.curve
        return [(int(l), float(g), float(lo), float(hi))
                for l, g, lo, hi in zip(c.lags, c.acov, c.ci_lo, c.ci_hi)]


def increment_mixing(traces: list[FrontTrace], burn_in: float | None = None,
                     max_lag: int = 50, level: float = 0.95,
                     max_increments: int | None = None) -> MixingReport:
    """Lag autocovariances of the post-burn-in increments.

    ``max_increments`` caps the pooled sample (whole replicas, in order).
    """
    if burn_in is None:
        burn_in = _default_burn_in(traces)
    incs = _post_burn_increments(traces, burn_in)
    if max_increments is not None:
        kept, total = [], 0
        for s in incs:
            if total >= max_increments:
                break
            s = s[: max_increments - total]
            kept.append(s)
            total += s.size
        incs = kept
    curve, _ = stats.autocov_pooled(incs, max_lag, level)
    return MixingReport(curve, curve.first_zero_lag())


# -- law behind the front ---------------------------------------------------

@dataclass(frozen=True)
class NuEstimate:
    """Per-offset zero frequencies at offsets -1..-w (index 0 is offset -1)."""
    time: float | None
    freq: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    n: int

    @property
    def q_star(self) -> float:
        return float(self.freq[0])

    @property
    def q_star_hw(self) -> float:
        return float(0.5 * (self.ci_hi[0] - self.ci_lo[0]))

    def rows(self):
        return [(i + 1, float(f), float(lo), float(hi))
                for i, (f, lo, hi) in enumerate(zip(self.freq, self.ci_lo, self.ci_hi))]

    def to_dict(self) -> dict:
        return {"time": self.time, "n": self.n, "q_star": self.q_star,
                "freq": self.freq.tolist(), "ci_lo": self.ci_lo.tolist(),
                "ci_hi": self.ci_hi.tolist()}


def _nu_from_bits(bits: np.ndarray, time, level, groups=None) -> NuEstimate:
    """``bits`` is (n, w); ``groups`` labels rows by replica for clustered CIs."""
    zeros = (bits == 0).astype(np.float64)
    freq = zeros.mean(axis=0)
    n = bits.shape[0]
    z = stats.z_value(level)
    if groups is None:
        lo = np.empty_like(freq)
        hi = np.empty_like(freq)
        k = zeros.sum(axis=0)
        for i in range(freq.size):
            lo[i], hi[i] = stats.proportion_ci(int(k[i]), n, level)
    else:
        ug, inv = np.unique(groups, return_inverse=True)
        m = ug.size
        sums = np.zeros((m, freq.size))
        np.add.at(sums, inv, zeros)
        counts = np.bincount(inv).astype(np.float64)
        # ratio estimator with replica clusters
        resid = sums - counts[:, None] * freq
        se = np.sqrt(m / max(m - 1, 1) * np.sum(resid ** 2, axis=0)) / counts.sum()
        lo, hi = np.clip(freq - z * se, 0, 1), np.clip(freq + z * se, 0, 1)
    return NuEstimate(time, freq, lo, hi, n)


def nu_from_traces(traces: list[FrontTrace], burn_in: float | None = None,
                   level: float = 0.95) -> NuEstimate:
    if burn_in is None:
        burn_in = _default_burn_in(traces)
    blocks, groups = [], []
    for tr in traces:
        if tr.behind is None:
            raise UsageError("traces carry no behind-front bits")
        b = tr.burn_in_index(burn_in)
        blocks.append(tr.behind[b:])
        groups.append(np.full(tr.behind.shape[0] - b, tr.replica))
    return _nu_from_bits(np.vstack(blocks), None, level, np.concatenate(groups))


@dataclass
class NuReport:
    params: Params
    times: np.ndarray
    per_time: list[NuEstimate]
    pooled: NuEstimate
    v_check: float = field(init=False)
    v_check_hw: float = field(init=False)

    def __post_init__(self):
        last = self.per_time[-1]
        self.v_check = self.params.q - self.params.p * last.q_star
        self.v_check_hw = self.params.p * last.q_star_hw

    @property
    def q_star(self) -> float:
        return self.per_time[-1].q_star


def estimate_nu(params: Params, snapshot_times, w: int, replicas: int, seed: int = 0,
                w_keep: int = DEFAULT_W_KEEP, pool_from: float | None = None,
                level: float = 0.95) -> NuReport:
    """Zero frequencies behind the front at each snapshot time.

    ``pooled`` merges all snapshots at times >= ``pool_from`` (default: all),
    with CIs clustered by replica.
    """
    if w < 1:
        raise UsageError("w must be >= 1")
    if w > w_keep:
        raise UsageError(f"window {w} exceeds w_keep={w_keep}")
    times = np.asarray(snapshot_times, dtype=np.float64)
    horizon = float(times[-1])
    base = EventStream(seed)
    bits = np.empty((replicas, times.size, w), np.uint8)
    for r in range(replicas):
        rec = run(LatticeState.omega_star(), params, base.spawn(r), horizon,
                  [BehindFrontProbe(times, w)], w_keep=w_keep)
        bits[r] = rec.behind
    per = [_nu_from_bits(bits[:, i, :], float(t), level) for i, t in enumerate(times)]
    sel = times >= (times[0] if pool_from is None else pool_from)
    pooled_bits = bits[:, sel, :].reshape(-1, w)
    groups = np.repeat(np.arange(replicas), int(sel.sum()))
    pooled = _nu_from_bits(pooled_bits, None, level, groups)
    return NuReport(params, times, per, pooled)


@dataclass(frozen=True)
class NuConvergence:
    times: np.ndarray
    reference_time: float
    distance: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    undersampled: np.ndarray
    fit: stats.DecayFit | None

    def monotone_beyond_ci(self) -> bool:
        """Each distance's CI lies strictly above the next one's."""
        return bool(np.all(self.ci_lo[:-1] > self.ci_hi[1:]))

    def rows(self):
        return [(float(t), float(d), float(lo), float(hi), bool(u))
                for t, d, lo, hi, u in zip(self.times, self.distance, self.ci_lo,
                                           self.ci_hi, self.undersampled)]


def _tv_codes(a: np.ndarray, b: np.ndarray, ncell: int) -> float:
    pa = np.bincount(a, minlength=ncell) / a.size
    pb = np.bincount(b, minlength=ncell) / b.size
    return 0.5 * float(np.abs(pa - pb).sum())


def nu_convergence(params: Params, w: int, times, replicas: int, seed: int = 0,
                   reference_time: float | None = None, n_boot: int = 200,
                   level: float = 0.95, w_keep: int = DEFAULT_W_KEEP) -> NuConvergence:
    """Empirical TV on the w-bit window behind the front, law at t vs law at T.

    ``T`` is ``reference_time`` or the last entry of ``times``; the curve is
    reported for every time, T included (distance 0).
    """
    if not 1 <= w <= 10:
        raise UsageError("w must be in 1..10")
    times = np.asarray(times, dtype=np.float64)
    T = float(times[-1]) if reference_time is None else float(reference_time)
    grid = np.unique(np.append(times, T))
    base = EventStream(seed)
    ncell = 1 << w
    weights = (1 << np.arange(w)).astype(np.int64)
    codes = np.empty((replicas, grid.size), np.int64)
    for r in range(replicas):
        rec = run(LatticeState.omega_star(), params, base.spawn(r), T,
                  [BehindFrontProbe(grid, w)], w_keep=w_keep)
        codes[r] = rec.behind.astype(np.int64) @ weights
    iT = int(np.searchsorted(grid, T))
    idx = np.searchsorted(grid, times)
    dist = np.array([_tv_codes(codes[:, i], codes[:, iT], ncell) for i in idx])

    rng = np.random.default_rng(seed + 1)
    boot = np.empty((n_boot, idx.size))
    for b in range(n_boot):
        sel = codes[rng.integers(0, replicas, replicas)]
        boot[b] = [_tv_codes(sel[:, i], sel[:, iT], ncell) for i in idx]
    a = (1 - level) / 2
    # resampling adds its own upward TV bias near the noise floor, so the
    # percentile interval is widened to cover the point estimate
    lo = np.minimum(np.quantile(boot, a, axis=0), dist)
    hi = np.maximum(np.quantile(boot, 1 - a, axis=0), dist)

    ref = np.bincount(codes[:, iT], minlength=ncell) * 1.0
    under = np.zeros(idx.size, bool)
    for j, i in enumerate(idx):
        seen = np.bincount(codes[:, i], minlength=ncell) > 0
        thin = seen & (ref < 5)
        if thin.any():
            under[j] = True
            # widen by the mass sitting in thin cells
            extra = float(ref[thin].sum() / replicas + np.mean(np.isin(codes[:, i], np.flatnonzero(thin))))
            lo[j] = max(0.0, lo[j] - extra)
            hi[j] = hi[j] + extra
    fit_mask = times < T
    fit = None
    if fit_mask.sum() >= 4:
        fit = stats.decay_fit(times[fit_mask], dist[fit_mask])
    return NuConvergence(times, T, dist, lo, hi, under, fit)


# -- CLT --------------------------------------------------------------------

@dataclass(frozen=True)
class NormalityReport:
    n: int
    mean: float
    sd: float
    ks: float
    ks_critical: float
    skewness: float
    skewness_ci: tuple[float, float]
    excess_kurtosis: float
    kurtosis_ci: tuple[float, float]
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def normality_report(samples, level: float = 0.95) -> NormalityReport:
    """Standardise by the sample mean/SD and compare to N(0, 1)."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = x.size
    mean, sd = float(x.mean()), float(x.std(ddof=1))
    if sd == 0.0:
        return NormalityReport(n, mean, 0.0, math.nan, math.nan, math.nan,
                               (math.nan, math.nan), math.nan, (math.nan, math.nan), True)
    zx = (x - mean) / sd
    ks = stats.ks_distance(zx, sps.norm.cdf)
    sk, ku = stats.skew_kurtosis(zx)
    z = stats.z_value(level)
    se_s = math.sqrt(6.0 * n * (n - 1) / ((n - 2) * (n + 1) * (n + 3)))
    se_k = 2 * se_s * math.sqrt((n * n - 1) / ((n - 3) * (n + 5)))
    crit = float(sps.kstwo.ppf(level, n))
    return NormalityReport(n, mean, sd, ks, crit, sk, (sk - z * se_s, sk + z * se_s),
                           ku, (ku - z * se_k, ku + z * se_k))


def front_at(params: Params, t: float, replicas: int, seed: int = 0,
             w_keep: int = DEFAULT_W_KEEP) -> np.ndarray:
    base = EventStream(seed)
    out = np.empty(replicas, np.int64)
    for r in range(replicas):
        rec = run(LatticeState.omega_star(), params, base.spawn(r), t, [FrontProbe([t])], w_keep=w_keep)
        out[r] = rec.front[0]
    return out


def clt_diagnostics(params: Params, t: float, replicas: int, seed: int = 0,
                    level: float = 0.95) -> NormalityReport:
    if replicas < 500:
        raise UsageError("clt_diagnostics needs replicas >= 500")
    return normality_report(front_at(params, t, replicas, seed), level)
