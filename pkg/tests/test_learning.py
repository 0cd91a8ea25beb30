import numpy as np
import pytest

from scoring_auctions.core import (CostParams, SellerType, ValidationError, evaluate_moment,
                                   max_admissible_eps, perturb, uniform)
from scoring_auctions.equilibrium import (NotAdmitted, cross_class_direction, solve_invariant,
                                          within_class_direction)
from scoring_auctions.learning import (MomentSignal, acquire, bid_from_signal, common_prior_bid,
                                       denominator_fixed_direction, information_technology_tiers,
                                       numerator_fixed_direction, verify_cbe)
from scoring_auctions.scoring import ScoringRule

from conftest import FREE

PQR = ScoringRule("pqr")
P = CostParams(2.0, *FREE)


@pytest.fixture(scope="module")
def g():
    return uniform(P, 20, 20)


def _half(g, v):
    return perturb(g, v, 0.5 * max_admissible_eps(g, v))


def test_signal_shape():
    with pytest.raises(ValidationError):
        MomentSignal(SellerType(1, 1), ("a",), (1.0, 2.0))


def test_acquire_gates_qd(g):
    with pytest.raises(NotAdmitted):
        acquire(ScoringRule("qd"), SellerType(1.5, 0.3), g)


def test_signal_determines_bid(g):
    for t in (SellerType(1.2, 0.2), SellerType(1.7, 0.4)):
        sig = acquire(PQR, t, g)
        c = bid_from_signal(PQR, sig, 2.0)
        cp = common_prior_bid(PQR, t, g, 2.0)
        assert abs(c.p - cp.p) < 1e-8 and abs(c.q - cp.q) < 1e-8


def test_weakest_type_is_degenerate(g):
    sig = acquire(PQR, SellerType(2.0, 0.5), g)
    assert sig.degenerate
    c = bid_from_signal(PQR, sig, 2.0)
    assert c.p - 2.0 * c.q ** 2 - 0.5 == pytest.approx(0.0, abs=1e-12)


def test_within_class_perturbation_keeps_realizations(g):
    g2 = _half(g, within_class_direction(PQR, g).direction)
    assert not np.allclose(g.density, g2.density)
    for t in (SellerType(1.25, 0.3), SellerType(1.6, 0.2), SellerType(1.9, 0.45)):
        a, b = acquire(PQR, t, g), acquire(PQR, t, g2)
        assert np.max(np.abs(np.subtract(a.realizations, b.realizations))) < 1e-8


def test_verify_cbe_within_and_cross_class(g):
    t = SellerType(1.5, 0.3)
    gw = _half(g, within_class_direction(PQR, g).direction)
    gc = _half(g, cross_class_direction(PQR, g, t))
    rep = verify_cbe(PQR, None, [g, gw], probes=[[t.m, t.f]])
    assert rep.passed and rep.checks[0].groups == [[0, 1]]
    rep = verify_cbe(PQR, None, [g, gc], probes=[[t.m, t.f]])
    assert rep.passed and rep.checks[0].groups == [[0], [1]]


def test_verify_cbe_refuses_qd(g):
    rep = verify_cbe(ScoringRule("qd"), None, [g, g])
    assert rep.refused and not rep.passed
    assert rep.to_dict()["verdict"] == "refused"


def test_verify_cbe_needs_two(g):
    with pytest.raises(ValidationError):
        verify_cbe(PQR, None, [g])


def test_single_moment_moves(g):
    t = SellerType(1.5, 0.3)
    a = acquire(PQR, t, g)
    d = acquire(PQR, t, _half(g, denominator_fixed_direction(PQR, g, t, 2.0)))
    n = acquire(PQR, t, _half(g, numerator_fixed_direction(PQR, g, t, 2.0)))
    assert abs(d.realizations[1] - a.realizations[1]) < 1e-12
    assert abs(d.realizations[0] - a.realizations[0]) > 1e-6
    assert abs(n.realizations[0] - a.realizations[0]) < 1e-12
    assert abs(n.realizations[1] - a.realizations[1]) > 1e-6


def test_tiers_for_ratio_rule():
    rep = information_technology_tiers(PQR, 2.0)
    assert rep.k0.differ
    assert len(rep.k1) == 2 and all(w.differ for w in rep.k1)
    assert rep.k2.passed
    assert rep.passed
    d = rep.to_dict()
    assert d["verdict"] == "pass"


def test_tiers_refused_for_qd():
    rep = information_technology_tiers(ScoringRule("qd"), 2.0)
    assert rep.refused and not rep.passed
