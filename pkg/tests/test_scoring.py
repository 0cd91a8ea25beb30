import numpy as np
import pytest
from hypothesis import given, strategies as st

from scoring_auctions.core import Contract, CostParams, SellerType, ValidationError
from scoring_auctions.scoring import (ScoringRule, check_regularity, indirect_utility,
                                      monotonicity_violation, optimal_quality_batch,
                                      price_for_score, rule_from_dict, score, ubar, ubar_ds)

RULES = [ScoringRule("quasilinear"), ScoringRule("pqr"), ScoringRule("qd", qbar=2.0),
         ScoringRule("qd", qbar=1.5)]


def test_rule_validation():
    with pytest.raises(ValidationError):
        ScoringRule("qd", qbar=1.0)
    with pytest.raises(ValidationError):
        ScoringRule("nonsense")
    with pytest.raises(ValidationError):
        ScoringRule("quasilinear", phi_b=1.5)
    with pytest.raises(ValidationError):
        ScoringRule("custom", score_fn=lambda p, q: p + q)  # increasing in price


def test_rule_roundtrip():
    for r in RULES:
        assert rule_from_dict(r.to_dict()).label() == r.label()
    with pytest.raises(ValidationError):
        rule_from_dict({"family": "x"})


def test_score_values():
    assert score(ScoringRule("quasilinear"), Contract(1.0, 0.25)) == pytest.approx(0.0)
    assert score(ScoringRule("pqr"), Contract(1.0, 0.5)) == pytest.approx(-2.0)
    assert score(ScoringRule("qd", qbar=2.0), Contract(1.0, 0.5)) == pytest.approx(-1.5)
    with pytest.raises(ValueError):
        score(ScoringRule("pqr"), Contract(1.0, 0.0))


@pytest.mark.parametrize("rule", RULES, ids=lambda r: r.label())
@given(s=st.floats(-5, -0.1), q=st.floats(0.05, 1.0))
def test_price_inverts_score(rule, s, q):
    p = price_for_score(rule, s, q)
    assert float(rule.score(p, q)) == pytest.approx(s, abs=1e-9)


@pytest.mark.parametrize("rule", RULES, ids=lambda r: r.label())
def test_monotone_in_price_and_quality(rule):
    assert monotonicity_violation(rule) == 0.0


@pytest.mark.parametrize("rule", RULES, ids=lambda r: r.label())
def test_ubar_beats_dense_grid(rule):
    qs = np.linspace(rule.q_min, 1.0, 200001)
    for s in (-3.0, -1.5, -0.8):
        for m in (1.0, 1.7):
            brute = np.max(rule.price(s, qs) - m * qs ** 2)
            v = float(ubar(rule, s, m, 2.0))
            assert v >= brute - 1e-12
            assert v - brute < 1e-8


def test_ubar_decreasing_in_score():
    r = ScoringRule("pqr")
    s = np.linspace(-4, -0.5, 50)
    v = ubar(r, s, 1.3, 2.0)
    assert np.all(np.diff(v) < 0)
    # envelope slope matches finite differences
    q, _ = optimal_quality_batch(r, s, 1.3, 2.0)
    assert np.allclose(ubar_ds(r, s, 1.3, 2.0), r.price_ds(s, q), atol=1e-5)


def test_indirect_utility_subtracts_fixed_cost():
    r = ScoringRule("qd", qbar=2.0)
    t = SellerType(1.2, 0.4)
    assert indirect_utility(r, -2.0, t, 2.0) == pytest.approx(float(ubar(r, -2.0, 1.2, 2.0)) - 0.4)


def test_regularity_report_fields():
    rep = check_regularity(ScoringRule("pqr"), CostParams(2.0, 1.0, 2.0, 0.1, 0.5), n_scores=5, n_types=4)
    d = rep.to_dict()
    assert d["convexity_ok"] is True
    assert set(d) >= {"single_crossing_ok", "boundary_ok", "worst_violation", "probe_locations"}
