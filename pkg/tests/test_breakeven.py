import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import breakeven_oracle, brute_pseudotype
from scoring_auctions.breakeven import (ProjectionRangeError, breakeven_batch, breakeven_contract,
                                        breakeven_order, closed_form_effort, project_batch,
                                        project_pseudotype)
from scoring_auctions.core import CostParams, SellerType
from scoring_auctions.scoring import ScoringRule

QD = ScoringRule("qd", qbar=2.0)
PQR = ScoringRule("pqr")
QL = ScoringRule("quasilinear")


@pytest.mark.parametrize("f,effort", [(0.0, 0.0), (1.0, 1.0 / 9.0), (2.0, 1.0)])
def test_qd_oracle_values(f, effort):
    r = breakeven_contract(QD, SellerType(1.0, f), 2.0)
    q_o, s_o = breakeven_oracle(QD, 1.0, f, 2.0)
    assert abs(r.effort - effort) < 1e-6
    assert abs(r.effort - q_o ** 2) < 1e-6
    assert abs(r.score - s_o) < 1e-9


def test_qd_breakeven_contract_values():
    r = breakeven_contract(QD, SellerType(1.0, 1.0), 2.0)
    assert r.contract.q == pytest.approx(1 / 3, abs=1e-7)
    assert r.contract.p == pytest.approx(10 / 9, abs=1e-7)


@pytest.mark.parametrize("eta", [1.5, 2.0, 3.0])
def test_pqr_closed_form_on_grid(eta):
    m, f = np.meshgrid(np.linspace(1, 2, 20), np.linspace(0.1, 0.5, 20), indexing="ij")
    q, _ = breakeven_batch(PQR, m, f, eta)
    expect = np.minimum(f / ((eta - 1) * m), 1.0)
    assert np.max(np.abs(q ** eta - expect)) < 1e-8


def test_pqr_cap_binds_for_large_fixed_cost():
    r = breakeven_contract(PQR, SellerType(1.0, 1.4), 2.0)
    assert r.contract.q == pytest.approx(1.0)
    assert closed_form_effort(PQR, 1.0, 1.4, 2.0) == pytest.approx(1.4)


@given(st.floats(1.0, 2.0), st.floats(0.0, 1.5))
def test_breakeven_matches_oracle(m, f):
    for rule in (QD, PQR, QL):
        if rule is PQR and f == 0:
            continue
        q, s = breakeven_batch(rule, np.array([m]), np.array([f]), 2.0)
        _, s_o = breakeven_oracle(rule, m, f, 2.0, n=20001)
        assert s[0] >= s_o - 1e-9


@given(st.floats(1.0, 2.0), st.floats(0.1, 1.5))
def test_zero_profit(m, f):
    for rule in (QD, PQR, QL):
        r = breakeven_contract(rule, SellerType(m, f), 2.0)
        assert r.contract.p - m * r.contract.q ** 2 - f == pytest.approx(0.0, abs=1e-12)


def test_breakeven_score_decreasing_in_f():
    f = np.linspace(0.1, 1.5, 60)
    for rule in (QD, PQR, QL):
        _, s = breakeven_batch(rule, np.full_like(f, 1.3), f, 2.0)
        assert np.all(np.diff(s) < 0)


def test_order():
    assert breakeven_order(PQR, SellerType(1, 0.5), SellerType(1, 0.6), 2.0) == "t1-wins"
    assert breakeven_order(PQR, SellerType(2, 0.5), SellerType(1, 1.0), 2.0) == "tie"


def test_quasilinear_eta1_projection_is_shift():
    # value 2 sqrt(q): best gross surplus at price-taking m is 1/m, so classes are shifts
    t = SellerType(1.6, 0.9)
    rho = project_pseudotype(QL, 1.1, t, 1.0)
    assert rho == pytest.approx(0.9 + 1 / 1.1 - 1 / 1.6, abs=1e-9)


def test_projection_matches_bisection_oracle():
    t = SellerType(1.8, 0.7)
    target = breakeven_oracle(QD, t.m, t.f, 2.0)[1]
    ref = brute_pseudotype(QD, 1.2, target, 2.0, -2.0, 4.0)
    assert project_pseudotype(QD, 1.2, t, 2.0) == pytest.approx(ref, abs=1e-7)
    s = breakeven_contract(QD, t, 2.0).score
    assert float(project_batch(QD, 1.2, s, 2.0)) == pytest.approx(ref, abs=1e-7)


def test_projection_on_own_line_is_identity():
    t = SellerType(1.3, 0.8)
    for rule in (QD, PQR, QL):
        assert project_pseudotype(rule, 1.3, t, 2.0) == pytest.approx(0.8, abs=1e-9)


def test_projection_range_error():
    p = CostParams(2.0, 1.0, 2.0, 0.5, 1.5)
    with pytest.raises(ProjectionRangeError):
        project_pseudotype(PQR, 1.0, SellerType(2.0, 50.0), 2.0, p)
