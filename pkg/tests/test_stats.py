import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import expon, norm

from eastkcm import stats


def test_summarize_and_half_width():
    s = stats.summarize([1.0, 2.0, 3.0, 4.0])
    assert s.mean == 2.5
    assert s.half_width == pytest.approx(1.959964 * s.sd / 2, rel=1e-5)


def test_ci_coverage_calibration():
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(1000):
        s = stats.summarize(rng.normal(3.0, 2.0, 400))
        hits += s.ci_lo <= 3.0 <= s.ci_hi
    assert 0.93 <= hits / 1000 <= 0.97


def test_proportion_ci_edges():
    lo, hi = stats.proportion_ci(0, 100)
    assert lo == 0.0 and 0 < hi < 0.05
    lo, hi = stats.proportion_ci(100, 100)
    assert hi == 1.0 and lo > 0.95


def test_ks_quantile_sample():
    x = norm.ppf((np.arange(100) + 0.5) / 100)
    assert stats.ks_distance(x, norm.cdf) <= 0.01 + 1e-12


def test_ks_constant_sample():
    assert stats.ks_distance(np.zeros(50), norm.cdf) >= 0.5 - 1e-12
    assert stats.ks_distance(np.full(50, 10.0), norm.cdf) > 0.99


def test_ks_normal_sample():
    x = np.random.default_rng(1).standard_normal(2000)
    assert stats.ks_distance(x, norm.cdf) < 0.04


def test_ks_needs_20():
    with pytest.raises(ValueError):
        stats.ks_distance(np.zeros(5), norm.cdf)


def test_autocov_white_noise():
    # pointwise 95% intervals: about 5% of lags may miss 0 by chance
    c = stats.autocov(np.random.default_rng(2).standard_normal(20000), 200)
    miss = np.mean([not (lo <= 0 <= hi) for lo, hi in zip(c.ci_lo[1:], c.ci_hi[1:])])
    assert miss <= 0.1


def test_autocov_ar1():
    rng = np.random.default_rng(3)
    n, rho = 200_000, 0.5
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0]
    for i in range(1, n):
        x[i] = rho * x[i - 1] + e[i]
    var = 1 / (1 - rho ** 2)
    c = stats.autocov(x, 6)
    for lag in range(7):
        want = rho ** lag * var
        assert c.ci_lo[lag] <= want <= c.ci_hi[lag], lag


def test_autocov_constant():
    c = stats.autocov(np.ones(100), 5)
    assert np.all(c.acov == 0)


def test_autocov_pooled_iid():
    rng = np.random.default_rng(4)
    curve, per = stats.autocov_pooled([rng.standard_normal(1000) for _ in range(50)], 5)
    assert per.shape == (50, 6)
    assert curve.ci_lo[3] <= 0 <= curve.ci_hi[3]
    assert curve.acov[0] == pytest.approx(1.0, abs=0.05)


def test_dominance_identical_and_shift():
    a = np.random.default_rng(5).exponential(size=2000)
    assert stats.dominance_band(a, a).passed
    assert stats.dominance_band(a + 1, a).passed
    assert not stats.dominance_band(a, a + 1).passed


def test_dominance_exponentials():
    rng = np.random.default_rng(6)
    big = rng.exponential(1.0, 5000)
    small = rng.exponential(0.5, 5000)
    assert stats.dominance_band(big, small).passed
    assert not stats.dominance_band(small, big).passed


def test_decay_fit_exact():
    t = np.arange(1, 11, dtype=float)
    f = stats.decay_fit(t, np.exp(-t))
    assert f.slope == pytest.approx(-1.0, abs=1e-9)
    assert f.monotone


def test_decay_fit_constant_and_nonpositive():
    f = stats.decay_fit(np.arange(5.0), np.full(5, 0.3))
    assert f.slope == 0.0 and not f.monotone
    g = stats.decay_fit(np.arange(6.0), [1.0, 0.5, 0.0, 0.2, 0.1, -1])
    assert g.excluded == 2


def test_decay_fit_noisy():
    rng = np.random.default_rng(7)
    t = np.linspace(0, 10, 30)
    d = np.exp(-0.4 * t + rng.normal(0, 0.1, t.size))
    f = stats.decay_fit(t, d)
    assert f.slope + 2 * f.slope_se < 0
    assert abs(f.slope + 0.4) < 4 * f.slope_se


def test_bootstrap_deterministic():
    x = np.arange(50.0)
    a = stats.bootstrap_ci(x, np.mean, 200, seed=3)
    assert a == stats.bootstrap_ci(x, np.mean, 200, seed=3)
    assert a[0] < 24.5 < a[1]


def test_exponential_mad():
    x = expon.rvs(size=200_000, random_state=8)
    assert np.mean(np.abs(x - x.mean())) == pytest.approx(2 / math.e, abs=0.01)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=20, max_size=200))
def test_ks_in_unit_interval(xs):
    d = stats.ks_distance(xs, norm.cdf)
    assert 0.0 <= d <= 1.0
