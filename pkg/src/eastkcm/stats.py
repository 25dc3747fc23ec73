"""Small statistical toolkit shared by the experiments.

Normal-approximation intervals by default; percentile bootstrap (seeded)
where the sampling distribution is skewed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps


def z_value(level: float = 0.95) -> float:
    return float(sps.norm.ppf(0.5 + level / 2))


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    sd: float
    ci_lo: float
    ci_hi: float
    level: float = 0.95

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_hi - self.ci_lo)

    @property
    def se(self) -> float:
        return self.sd / math.sqrt(self.n) if self.n > 0 else math.nan


def summarize(x, level: float = 0.95) -> SampleSummary:
    x = np.asarray(x, dtype=np.float64).ravel()
    n = x.size
    mean = float(x.mean()) if n else math.nan
    sd = float(x.std(ddof=1)) if n > 1 else 0.0
    hw = z_value(level) * sd / math.sqrt(n) if n > 1 else math.inf
    return SampleSummary(n, mean, sd, mean - hw, mean + hw, level)


def proportion_ci(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval."""
    if n == 0:
        return 0.0, 1.0
    z = z_value(level)
    ph = k / n
    den = 1 + z * z / n
    c = (ph + z * z / (2 * n)) / den
    h = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, c - h)
    hi = 1.0 if k == n else min(1.0, c + h)
    return lo, hi


def combined_half_width(*hws: float) -> float:
    return math.sqrt(sum(h * h for h in hws))


def ks_distance(samples, cdf: Callable) -> float:
    """Sup distance between the empirical CDF of ``samples`` and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    if n < 20:
        raise ValueError("ks_distance needs n >= 20")
    F = np.asarray(cdf(x), dtype=np.float64)
    # at tied values only the last occurrence carries the full jump
    last = np.r_[x[1:] != x[:-1], True]
    first = np.r_[True, x[1:] != x[:-1]]
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    d_plus = np.max((upper - F)[last])
    d_minus = np.max((F - lower)[first])
    return float(max(d_plus, d_minus))


def bootstrap_ci(samples, stat: Callable, n_resamples: int = 1000, level: float = 0.95,
                 seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap over the first axis of ``samples``."""
    x = np.asarray(samples)
    rng = np.random.default_rng(seed)
    n = x.shape[0]
    vals = np.empty(n_resamples)
    for b in range(n_resamples):
        idx = rng.integers(0, n, n)
        vals[b] = stat(x[idx])
    a = (1 - level) / 2
    return float(np.quantile(vals, a)), float(np.quantile(vals, 1 - a))


def ecdf(samples):
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    return x, np.arange(1, x.size + 1) / x.size


# -- autocovariance -----------------------------------------------------------

@dataclass(frozen=True)
class AutocovCurve:
    lags: np.ndarray
    acov: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    n: int

    def first_zero_lag(self) -> int | None:
        """Smallest lag >= 1 whose CI contains 0."""
        for lag, lo, hi in zip(self.lags, self.ci_lo, self.ci_hi):
            if lag >= 1 and lo <= 0.0 <= hi:
                return int(lag)
        return None


def _acov_biased(x: np.ndarray, max_lag: int, mean: float) -> np.ndarray:
    d = x - mean
    n = d.size
    return np.array([np.dot(d[: n - k], d[k:]) / n for k in range(max_lag + 1)])


def autocov(series, max_lag: int, level: float = 0.95) -> AutocovCurve:
    """Biased autocovariances with Bartlett intervals."""
    x = np.asarray(series, dtype=np.float64).ravel()
    n = x.size
    if n <= 2 * max_lag:
        raise ValueError("series length must exceed 2*max_lag")
    g = _acov_biased(x, max_lag, x.mean())
    z = z_value(level)
    lags = np.arange(max_lag + 1)
    if g[0] == 0.0:
        zero = np.zeros(max_lag + 1)
        return AutocovCurve(lags, zero, zero.copy(), zero.copy(), n)
    rho = g / g[0]
    # Bartlett: var(g_k) ~ g_0^2 (1 + 2 sum_{i<k} rho_i^2) / n
    cum = np.concatenate([[0.0, 0.0], np.cumsum(rho[1:-1] ** 2)])[: max_lag + 1]
    se = g[0] * np.sqrt((1 + 2 * cum) / n)
    se[0] = g[0] * math.sqrt(2.0 / n)
    return AutocovCurve(lags, g, g - z * se, g + z * se, n)


def autocov_pooled(series_list: Sequence, max_lag: int, level: float = 0.95) -> tuple[AutocovCurve, np.ndarray]:
    """Autocovariance pooled over independent series.

    Each series is centred with the grand mean; the curve is the
    length-weighted average and its CI comes from the spread of the
    per-series curves.  Returns the curve and the per-series matrix.
    """
    xs = [np.asarray(s, dtype=np.float64).ravel() for s in series_list]
    xs = [s for s in xs if s.size > max_lag]
    if not xs:
        raise ValueError("no series longer than max_lag")
    if len(xs) == 1:
        c = autocov(xs[0], max_lag, level)
        return c, c.acov[None, :]
    mu = float(np.mean(np.concatenate(xs)))
    per = np.stack([_acov_biased(s, max_lag, mu) for s in xs])
    w = np.array([s.size for s in xs], dtype=np.float64)
    w = w / w.sum()
    g = w @ per
    m = len(xs)
    se = np.sqrt(np.sum(w[:, None] ** 2 * (per - g) ** 2, axis=0) * m / (m - 1))
    z = z_value(level)
    n = int(sum(s.size for s in xs))
    return AutocovCurve(np.arange(max_lag + 1), g, g - z * se, g + z * se, n), per


# -- stochastic dominance -------------------------------------------------------

@dataclass(frozen=True)
class DominanceResult:
    passed: bool
    worst_gap: float
    band: float
    at: float


def dkw_epsilon(n: int, level: float) -> float:
    return math.sqrt(math.log(2.0 / level) / (2.0 * n))


def dominance_band(samples_a, samples_b, level: float = 0.01) -> DominanceResult:
    """Test ``a`` stochastically larger than ``b``: F_a(t) <= F_b(t) + band.

    The band is the sum of the two DKW half-widths at ``level``.
    """
    a = np.asarray(samples_a, dtype=np.float64).ravel()
    b = np.asarray(samples_b, dtype=np.float64).ravel()
    if a.size < 100 or b.size < 100:
        raise ValueError("dominance_band needs n >= 100 on both sides")
    grid = np.union1d(a, b)
    Fa = np.searchsorted(np.sort(a), grid, side="right") / a.size
    Fb = np.searchsorted(np.sort(b), grid, side="right") / b.size
    gap = Fa - Fb
    i = int(np.argmax(gap))
    band = dkw_epsilon(a.size, level) + dkw_epsilon(b.size, level)
    return DominanceResult(bool(gap[i] <= band), float(gap[i]), band, float(grid[i]))


# -- decay fits -------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    slope: float
    slope_se: float
    intercept: float
    monotone: bool
    n_used: int
    excluded: int


def decay_fit(times, distances) -> DecayFit:
    """Least-squares slope of log(distance) against time."""
    t = np.asarray(times, dtype=np.float64)
    d = np.asarray(distances, dtype=np.float64)
    if t.size < 4:
        raise ValueError("decay_fit needs >= 4 points")
    keep = d > 0
    excluded = int((~keep).sum())
    tt, y = t[keep], np.log(d[keep])
    if tt.size < 2:
        return DecayFit(math.nan, math.nan, math.nan, False, int(tt.size), excluded)
    A = np.vstack([tt, np.ones_like(tt)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = tt.size - 2
    resid = y - A @ coef
    if dof > 0:
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(A.T @ A)
        se = math.sqrt(max(cov[0, 0], 0.0))
    else:
        se = math.nan
    monotone = bool(np.all(np.diff(d) < 0))
    slope = float(coef[0])
    if abs(slope) < 1e-14:
        slope = 0.0
    return DecayFit(slope, se, float(coef[1]), monotone, int(tt.size), excluded)


def skew_kurtosis(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    return float(sps.skew(x)), float(sps.kurtosis(x))
