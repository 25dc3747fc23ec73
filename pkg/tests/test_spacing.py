import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eastkcm import spacing as S
from eastkcm.engine import Params, UsageError


def test_longest_run_examples():
    assert S.longest_one_run([0, 1, 1, 1, 0]) == 3
    assert S.longest_one_run([0] * 9) == 0
    assert S.longest_one_run([1] * 7) == 7
    assert S.longest_one_run([1, 1, 0, 1, 1, 1], (0, 2)) == 2
    with pytest.raises(UsageError):
        S.longest_one_run([1, 0], (1, 0))


def test_ssc_threshold_natural_log():
    # 10 ln 100 / min(|ln 0.3|, 1) = 10 ln 100
    assert S.ssc_threshold(100, 0.3) == pytest.approx(10 * math.log(100))
    assert S.ssc_threshold(100, 0.5) == pytest.approx(10 * math.log(100) / math.log(2))


def test_ssc_examples():
    bits = np.zeros(100, int)
    bits[:10] = 1
    assert S.ssc(bits, 0.3)
    for p in (0.05, 0.3, 0.6):
        assert not S.ssc(np.ones(100, int), p)
    # for p near 1 the threshold exceeds |I| and even all ones passes
    assert S.ssc_threshold(100, 0.9) > 100 and S.ssc(np.ones(100, int), 0.9)
    for p in (0.05, 0.3, 0.9):
        assert S.ssc(np.zeros(100, int), p)


def test_wsc_examples():
    sp = S.SpacingParams(0.2, 0.2)
    assert sp.threshold(10 ** 5) == pytest.approx(2.0)
    bits = np.zeros(10 ** 5, np.uint8)
    bits[5] = 1
    assert S.wsc(bits, sp)
    bits[6:8] = 1
    assert not S.wsc(bits, sp)
    assert S.wsc(np.zeros(10 ** 5, np.uint8), sp)


def test_spacing_params_ranges():
    with pytest.raises(UsageError):
        S.SpacingParams(0.3, 0.1)
    with pytest.raises(UsageError):
        S.SpacingParams(0.1, 0.0)


@given(st.lists(st.integers(0, 1), min_size=2, max_size=60), st.data())
def test_predicates_monotone(bits, data):
    i = data.draw(st.integers(0, len(bits) - 1))
    lowered = list(bits)
    lowered[i] = 0
    sp = S.SpacingParams(0.2, 0.2)
    if S.ssc(bits, 0.3):
        assert S.ssc(lowered, 0.3)
    if S.wsc(bits, sp):
        assert S.wsc(lowered, sp)
    assert S.longest_one_run(lowered) <= S.longest_one_run(bits)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=80))
def test_longest_run_matches_scan(bits):
    best = cur = 0
    for b in bits:
        cur = cur + 1 if b else 0
        best = max(best, cur)
    assert S.longest_one_run(bits) == best


def test_run_dp_small_cases():
    assert S.prob_run_at_least(3, 2, 0.5) == pytest.approx(3 / 8)
    assert S.prob_run_at_least(4, 4, 0.3) == pytest.approx(0.3 ** 4)
    assert S.prob_run_at_least(4, 5, 0.3) == 0.0


def test_equilibrium_sampler_against_dp():
    chk = S.equilibrium_failure(20, 0.5, 20000, which="WSC", sp=S.SpacingParams(0.2, 0.2), seed=1)
    assert chk.consistent
    chk = S.equilibrium_failure(30, 0.7, 20000, which="SSC", seed=2)
    assert chk.exact <= chk.bound
    assert chk.consistent


def test_ssc_under_pi_is_rare():
    chk = S.equilibrium_failure(64, 0.3, 5000, seed=3)
    assert chk.failures == 0
    assert chk.bound <= 64 ** -9 or chk.exact <= 64 ** -9


def test_failure_at_time_zero_deterministic():
    est = S.spacing_failure_probability(Params(0.3), 64, 0.0, 5)
    assert est.failures == 5


def test_wsc_tiny_threshold_always_fails():
    sp = S.SpacingParams(0.1, 0.1)
    est = S.spacing_failure_probability(Params(0.5), 8, 0.0, 4, which="WSC", sp=sp)
    assert est.probability == 1.0


def test_failure_late_time_small():
    est = S.spacing_failure_probability(Params(0.3), 64, 300.0, 300, seed=1)
    assert est.failures == 0 and est.ci[1] < 0.02
    est = S.spacing_failure_probability(Params(0.3), 64, 300.0, 100, seed=1, anchor="front")
    assert est.failures == 0


def test_failure_csv(tmp_path):
    est = S.spacing_failure_probability(Params(0.3), 16, 5.0, 20)
    S.write_failure_csv(tmp_path / "f.csv", [est])
    head, row = (tmp_path / "f.csv").read_text().splitlines()
    assert head == "t,ell,which,failures,replicas,ci_lo,ci_hi"
    assert row.startswith("5.0,16,SSC,")
