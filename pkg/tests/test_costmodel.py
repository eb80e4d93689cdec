import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_system
from qdmd.costmodel import (EULER_GAMMA, brayton_expected_trials, cost_report, coupon_collector_mc,
                            mode_count, table1_budgets, total_qsvd_count)
from qdmd.errors import DegenerateDistributionError, DomainError
from qdmd.kprime import prepare_inputs
from qdmd.refstates import build_reference_states


def test_brayton_single_item():
    assert brayton_expected_trials(1, 1, [1.0]) == pytest.approx(EULER_GAMMA)


def test_brayton_uniform_eight():
    assert brayton_expected_trials(8, 1, np.full(8, 1 / 8)) == pytest.approx(8 * (math.log(8) + EULER_GAMMA))
    assert brayton_expected_trials(8, 1, np.full(8, 1 / 8)) == pytest.approx(21.25, abs=0.01)


def test_brayton_rejects_zero_probability():
    with pytest.raises(DegenerateDistributionError):
        brayton_expected_trials(2, 1, [1.0, 0.0])


def test_mc_single_item():
    est = coupon_collector_mc([1.0], 5, 100, np.random.default_rng(0))
    assert est.mean == 5 and est.std_error == 0


def test_mc_two_coupons():
    est = coupon_collector_mc([0.5, 0.5], 1, 10**4, np.random.default_rng(1))
    assert abs(est.mean - 3) < 5 * est.std_error


def test_mc_trials_floor():
    with pytest.raises(ValueError):
        coupon_collector_mc([0.5, 0.5], 1, 99, np.random.default_rng(0))


def test_mc_matches_closed_form_uniform():
    # E = n H_n for m = 1
    n = 6
    est = coupon_collector_mc(np.full(n, 1 / n), 1, 20_000, np.random.default_rng(2))
    assert abs(est.mean - n * sum(1 / k for k in range(1, n + 1))) < 5 * est.std_error


def unit_refs(R=2):
    u = np.eye(R, dtype=complex)[:, :1]
    return build_reference_states(u, u, u, u, u)


def test_table1_unit_overlaps():
    refs = unit_refs()
    b = table1_budgets(0.1, refs, {"X": np.array([1.0]), "Xprime": np.array([1.0])},
                       {"X": 1.0, "Xprime": 1.0})
    assert b["norm_ratio"] == 100 and b["sigma_readout"] == 1
    assert b["chi1_u"]["Joint"].tolist() == [100]
    assert b["left_gram"]["QUp"].tolist() == [[100]]
    assert b["chi2_v"]["X"].tolist() == [100]


def test_table1_quadruples_when_epsilon_halves():
    d, _ = random_system(0)
    inp = prepare_inputs(d, 1e-8, None, 0, 0)
    p = {"X": 0.5, "Xprime": 0.5}
    a = table1_budgets(0.1, inp.refs, inp.sigma_hat, p)
    b = table1_budgets(0.05, inp.refs, inp.sigma_hat, p)
    assert b["norm_ratio"] == 4 * a["norm_ratio"]
    ratio = b["left_gram"]["UQ"] / a["left_gram"]["UQ"]
    assert np.all(np.abs(ratio - 4) < 4 / a["left_gram"]["UQ"] + 1e-12)


def test_total_count_unit_parameters():
    assert total_qsvd_count(1, 2, 1, 1) == 4
    with pytest.raises(DomainError):
        total_qsvd_count(1, 1, 1, 1)


def test_mode_count_scaling():
    # exponent 2 + log2(1/zeta4) = 3 with zeta4 = 1/2; the log factor is clamped here
    assert mode_count(1.0, 4, 0.5) * 8 == mode_count(1.0, 8, 0.5)


@settings(max_examples=40, deadline=None)
@given(st.floats(1, 50), st.integers(2, 64), st.floats(0.01, 0.99), st.floats(0.01, 0.99),
       st.floats(1.01, 2.0))
def test_total_count_monotone(kappa, R, zeta, eps, factor):
    base = total_qsvd_count(kappa, R, zeta, eps)
    assert total_qsvd_count(kappa, R, min(zeta * factor, 0.999), eps) <= base
    assert total_qsvd_count(kappa, R, zeta, min(eps * factor, 0.999)) <= base


@pytest.mark.parametrize("seed", range(10))
def test_report_invariants(seed):
    d, _ = random_system(seed, N=[4, 8][seed % 2])
    inp = prepare_inputs(d, 1e-8, None, 0, 0)
    rep = cost_report(inp, 0.1)
    assert rep.kappa >= 1 and rep.eta >= 2 - 1e-12
    assert rep.eta <= math.e**2 + 1
    assert all(rep.sigma_min_check.values())
    assert rep.p_z["X"] + rep.p_z["Xprime"] == pytest.approx(1)
    assert rep.zeta == min(rep.zeta1, rep.zeta2)


def test_budgets_beyond_int64():
    # smallest retained singular value of X sits near the 1e-8 threshold
    d, _ = random_system(1007, N=8, T=4)
    inp = prepare_inputs(d, 1e-8, None, 0, 0)
    report = cost_report(inp, 0.05)
    assert max(report.table1_budgets["chi2_v"]["X"]) > np.iinfo(np.int64).max
    assert all(report.sigma_min_check.values())
