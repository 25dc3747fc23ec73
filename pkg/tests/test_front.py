import numpy as np
import pytest

from eastkcm import front as F
from eastkcm.engine import Params, UsageError


def synth(X, dt=1.0, replica=0):
    X = np.asarray(X)
    return F.FrontTrace(dt, np.arange(X.size) * dt, X, 0, replica)


def test_trace_shapes_and_short_horizon():
    tr = F.trace_front(Params(0.3), 0.5, dt=1.0, replicas=2, seed=1)
    assert len(tr) == 2
    assert tr[0].X.size == 1 and tr[0].increments.size == 0
    tr = F.trace_front(Params(0.3), 20, dt=2.0, replicas=1, seed=1, behind_width=3)
    assert np.allclose(tr[0].times, np.arange(0, 21, 2.0))
    assert tr[0].behind.shape == (11, 3)
    assert tr[0].X[-1] - tr[0].X[0] == tr[0].increments.sum()


def test_trace_replica_subset_reproducible():
    full = F.trace_front(Params(0.3), 50, replicas=4, seed=2)
    part = F.trace_front(Params(0.3), 50, seed=2, replica_ids=[3, 1])
    assert np.array_equal(part[0].X, full[3].X)
    assert np.array_equal(part[1].X, full[1].X)


def test_velocity_window():
    assert F.velocity_window(Params(0.1)) == pytest.approx((0.8, 0.81))
    assert F.velocity_window(Params(0.5)) == pytest.approx((0.0, 0.25))


def test_velocity_synthetic_unit_slope():
    dt = 0.5
    traces = [synth(np.arange(101), dt, r) for r in range(3)]
    v = F.estimate_velocity(traces, burn_in=5.0)
    assert v.v == pytest.approx(1 / dt)
    assert v.half_width == 0.0


def test_velocity_degenerate_and_burn_in():
    v = F.estimate_velocity([synth(np.arange(10))], burn_in=1.0)
    assert v.degenerate_ci
    with pytest.raises(UsageError):
        F.estimate_velocity([synth(np.arange(10))], burn_in=20.0)


def test_sigma_iid_increments():
    rng = np.random.default_rng(0)
    s2, dt = 2.0, 1.0
    traces = [synth(np.r_[0, np.cumsum(rng.normal(0.5, np.sqrt(s2), 2000))], dt, r) for r in range(300)]
    est = F.estimate_sigma_star(traces, burn_in=100.0, max_lag=10)
    assert est.replica_ci[0] <= s2 <= est.replica_ci[1]
    assert est.covsum_ci[0] <= s2 <= est.covsum_ci[1]
    assert est.consistent


def test_sigma_deterministic_zero():
    traces = [synth(np.arange(200), replica=r) for r in range(4)]
    est = F.estimate_sigma_star(traces, burn_in=10.0, max_lag=5)
    assert est.replica == 0.0 and est.covsum == 0.0


def test_mixing_iid_and_constant():
    rng = np.random.default_rng(1)
    traces = [synth(np.r_[0, np.cumsum(rng.integers(-1, 2, 3000))], replica=r) for r in range(20)]
    rep = F.increment_mixing(traces, burn_in=0.0, max_lag=5)
    assert rep.first_zero_lag == 1
    const = F.increment_mixing([synth(np.arange(300))], burn_in=0.0, max_lag=5)
    assert np.all(const.curve.acov == 0)


def test_mixing_cap():
    traces = [synth(np.arange(1000), replica=r) for r in range(5)]
    rep = F.increment_mixing(traces, burn_in=0.0, max_lag=3, max_increments=1500)
    assert rep.curve.n == 1500


def test_nu_window_checks():
    with pytest.raises(UsageError):
        F.estimate_nu(Params(0.3), [10.0], 600, 2)
    rep = F.estimate_nu(Params(0.3), [5.0, 10.0], 4, 1, seed=3)
    est = rep.per_time[-1]
    assert est.freq.shape == (4,)
    assert np.all((est.ci_lo <= est.freq) & (est.freq <= est.ci_hi))


def test_nu_convergence_reference_and_marginal():
    p = Params(0.3)
    conv = F.nu_convergence(p, 1, [2.0, 10.0, 40.0], 400, seed=4, n_boot=50)
    assert conv.distance[-1] == 0.0
    # w = 1: distance equals the difference of zero frequencies at -1
    rep = F.estimate_nu(p, [2.0, 10.0, 40.0], 1, 400, seed=4)
    want = abs(rep.per_time[0].freq[0] - rep.per_time[-1].freq[0])
    assert conv.distance[0] == pytest.approx(want, abs=1e-12)


def test_velocity_formula_cross_check():
    p = Params(0.25)
    traces = F.trace_front(p, 1500, replicas=60, seed=5, behind_width=1)
    v = F.estimate_velocity(traces, 150.0, p)
    assert v.formula_agrees
    assert v.in_window


def test_normality_reference_sample():
    x = np.random.default_rng(6).standard_normal(2000)
    rep = F.normality_report(x)
    assert rep.ks < 0.04
    assert rep.skewness_ci[0] <= 0 <= rep.skewness_ci[1]


def test_normality_degenerate():
    assert F.normality_report(np.ones(50)).degenerate


def test_clt_pre_asymptotic_runs():
    rep = F.clt_diagnostics(Params(0.25), 1.0, 500, seed=7)
    assert 0 <= rep.ks <= 1
    with pytest.raises(UsageError):
        F.clt_diagnostics(Params(0.25), 1.0, 10)
