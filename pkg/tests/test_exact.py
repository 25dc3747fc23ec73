import math

import numpy as np
import pytest

from eastkcm import exact
from eastkcm.engine import Params, ResourceCapError, UsageError


def gen(p, L, **kw):
    return exact.build_generator(Params(p), L, **kw)


def test_l1_generator_and_gap():
    G = gen(0.3, 1)
    assert np.allclose(G.Q.toarray(), [[-0.3, 0.3], [0.7, -0.7]])
    assert exact.spectral_gap(G) == pytest.approx(1.0, abs=1e-12)


def test_l2_structure():
    # bit 0 = site 1 (always free), bit 1 = site 2 (free iff site 1 is 0)
    Q = gen(0.4, 2).Q.toarray()
    for s in range(4):
        for t in range(4):
            if s == t:
                continue
            diff = s ^ t
            allowed = diff == 1 or (diff == 2 and (s & 1) == 0)
            assert (Q[s, t] > 0) == allowed, (s, t)


@pytest.mark.parametrize("p", [0.2, 0.5, 0.8])
def test_reversible_and_stationary(p):
    for L in range(2, 9):
        G = gen(p, L)
        assert G.detailed_balance_error() < 1e-12
        assert G.stationarity_error() < 1e-12
        assert G.row_sum_error() < 1e-12


def test_cap():
    with pytest.raises(ResourceCapError):
        gen(0.5, 30)
    with pytest.raises(UsageError):
        gen(0.5, 0)


@pytest.mark.parametrize("p", [0.2, 0.5, 0.8])
def test_gap_positive(p):
    for L in range(1, 9):
        assert exact.spectral_gap(gen(p, L)) > 0


def test_gap_translation_invariant():
    assert exact.spectral_gap(gen(0.3, 6)) == pytest.approx(exact.spectral_gap(gen(0.3, 6, offset=9)), abs=1e-12)


def test_sparse_gap_matches_dense():
    G = gen(0.5, 10)
    dense = exact.spectral_gap(G)
    old = exact.L_MAX_DENSE
    exact.L_MAX_DENSE = 5
    try:
        sparse = exact.spectral_gap(G)
    finally:
        exact.L_MAX_DENSE = old
    assert sparse == pytest.approx(dense, rel=1e-9)


def test_gap_table_reported():
    # monotonicity is observed, not asserted by the theory
    gaps = [g for _, g in exact.gap_table(Params(0.5), range(1, 9))]
    assert gaps[0] == pytest.approx(1.0)
    assert all(g > 0 for g in gaps)


def test_l1_tv_closed_form():
    p = 0.3
    G = gen(p, 1)
    t = np.arange(1, 51) / 10
    c = exact.tv_curve(G, t, start="ones")
    assert np.max(np.abs(c.d - (1 - p) * np.exp(-t))) < 1e-10


def test_tv_at_zero_and_monotone():
    G = gen(0.4, 5)
    t = np.linspace(0, 30, 31)
    c = exact.tv_curve(G, t, start="ones")
    assert c.d[0] == pytest.approx(1 - 0.4 ** 5)
    assert np.all(np.diff(c.d) <= 1e-12)
    assert c.method["max_row_sum_error"] < 1e-10
    assert np.all((c.d >= 0) & (c.d <= 1))


def test_tv_all_starts_dominates_single_start():
    G = gen(0.4, 4)
    t = [0.5, 2.0, 5.0]
    assert np.all(exact.tv_curve(G, t).d >= exact.tv_curve(G, t, start="ones").d - 1e-14)


def test_tv_rejects_unsorted():
    with pytest.raises(UsageError):
        exact.tv_curve(gen(0.4, 2), [2.0, 1.0])


@pytest.mark.parametrize("p,eps", [(0.5, 0.25), (0.3, 0.25), (0.2, 0.5)])
def test_l1_tmix_closed_form(p, eps):
    m = exact.t_mix(gen(p, 1), eps, tol=1e-12)
    assert m.t_mix == pytest.approx(math.log(max(p, 1 - p) / eps), abs=1e-10)


def test_tmix_eps_to_one():
    G = gen(0.5, 3)
    assert exact.t_mix(G, 0.999).t_mix <= exact.t_mix(G, 0.8).t_mix < 1.0
    assert exact.t_mix(G, 1 - 1e-9).t_mix < 1e-3


@pytest.mark.parametrize("p", [0.3, 0.5])
@pytest.mark.parametrize("eps", [0.25, 0.5])
def test_gap_inequality_small(p, eps):
    for L in range(2, 7):
        m = exact.t_mix(gen(p, L), eps)
        assert m.holds, m


def test_coo_dump():
    text = gen(0.5, 2).coo_text()
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    # 2 flips at site 1 from each of 4 states, site 2 free in 2 states
    assert len(lines) == 4 + 2
    r, c, v = lines[0].split()
    assert (int(r), int(c), float(v)) == (0, 1, 0.5)


def test_coupling_bound_dominates_exact_small():
    p, L = 0.3, 5
    t = np.array([2.0, 5.0, 10.0, 20.0])
    d = exact.tv_curve(gen(p, L), t).d
    est, se = exact.coupling_upper_bound(Params(p), L, t, 20000, seed=1)
    assert np.all(est + 3 * se >= d)
