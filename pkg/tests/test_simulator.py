import numpy as np
import pytest

from scoring_auctions.breakeven import breakeven_contract
from scoring_auctions.core import CostParams, SellerType, evaluate_moment, make_distribution, uniform
from scoring_auctions.equilibrium import solve_best_response, solve_invariant, two_moments_for_type
from scoring_auctions.scoring import ScoringRule, ubar
from scoring_auctions.simulator import (adversarial_candidates, default_probes, interim_quadrature,
                                        invariance_scan, payoff_equivalence_report,
                                        run_first_score, run_second_score)

from conftest import FREE

PQR = ScoringRule("pqr")
P = CostParams(2.0, *FREE)


@pytest.fixture(scope="module")
def g():
    return uniform(P, 20, 20)


@pytest.fixture(scope="module")
def inv(g):
    return solve_invariant(PQR, g)


def test_default_probes_interior():
    pr = default_probes(P)
    assert pr.shape == (49, 2)
    assert pr[:, 0].min() > 1.0 and pr[:, 1].max() < 0.5


def test_strongest_wins_weakest_earns_nothing(g, inv):
    probes = np.array([[1.001, 0.1005], [1.999, 0.4995]])
    rep = run_first_score(PQR, inv, g, draws=20_000, seed=1, probes=probes)
    assert rep.X[0] > 0.99
    assert abs(rep.U[1]) < 1e-3


def test_standard_errors_scale(g, inv):
    probes = default_probes(P, 3)
    a = run_first_score(PQR, inv, g, draws=20_000, seed=2, probes=probes)
    b = run_first_score(PQR, inv, g, draws=40_000, seed=3, probes=probes)
    ok = a.se_U > 1e-6
    ratio = b.se_U[ok] / a.se_U[ok]
    assert np.all(np.abs(ratio - 1 / np.sqrt(2)) < 0.2 / np.sqrt(2))


def test_monte_carlo_deterministic_and_thread_independent(g, inv):
    a = run_first_score(PQR, inv, g, draws=30_000, seed=7, probes=default_probes(P, 3))
    b = run_first_score(PQR, inv, g, draws=30_000, seed=7, probes=default_probes(P, 3), threads=3)
    assert a.to_csv() == b.to_csv()


def test_second_score_ir_and_identical_bidders():
    # one 1/50 x 1/50 cell holds nearly all the mass
    gp = make_distribution({"kind": "mixture", "components": [
        {"rect": [1.49, 1.51, 0.296, 0.304], "weight": 1.0},
        {"rect": [1.0, 2.0, 0.1, 0.5], "weight": 1e-6}]}, P, 50, 50)
    probes = np.array([[1.5, 0.3], [1.2, 0.2], [1.8, 0.4]])
    rep = run_second_score(PQR, gp, draws=40_000, seed=0, probes=probes)
    assert np.all(rep.U >= -1e-12)
    # residual spread within the cell: half its fixed-cost width times a win rate near 1/2
    assert rep.U[0] < 5e-3
    # against a near point mass the strong probe earns ubar(s_BE(tau), m) - f
    s_tau = breakeven_contract(PQR, SellerType(1.5, 0.3), 2.0).score
    expect = float(ubar(PQR, s_tau, 1.2, 2.0)) - 0.2
    assert rep.U[1] == pytest.approx(expect, abs=5e-3)
    assert rep.U[2] < 1e-3


@pytest.mark.parametrize("fmt", ["first-score", "second-score"])
def test_quadrature_matches_monte_carlo(g, inv, fmt):
    probes = default_probes(P, 4)
    if fmt == "first-score":
        mc = run_first_score(PQR, inv, g, draws=100_000, seed=11, probes=probes)
        qd = interim_quadrature(PQR, inv, g, probes=probes)
    else:
        mc = run_second_score(PQR, g, draws=100_000, seed=11, probes=probes)
        qd = interim_quadrature(PQR, "second-score", g, probes=probes)
    for name, se in (("X", mc.se_X), ("U", mc.se_U)):
        diff = np.abs(getattr(mc, name) - getattr(qd, name))
        assert np.all(diff <= 3 * se + 1e-9), (name, diff / np.maximum(se, 1e-300))


def test_win_probability_is_denominator_moment(g, inv):
    probes = default_probes(P, 3)
    rep = interim_quadrature(PQR, inv, g, probes=probes)
    for (m, f), x in zip(probes, rep.X):
        _, den = two_moments_for_type(PQR, SellerType(m, f), 2.0)
        assert x == pytest.approx(evaluate_moment(den, g), abs=1e-9)


def test_utility_nonincreasing_in_fixed_cost(g, inv):
    f = np.linspace(0.11, 0.49, 25)
    probes = np.column_stack([np.full_like(f, 1.4), f])
    U = interim_quadrature(PQR, inv, g, probes=probes).U
    assert np.all(np.diff(U) <= 1e-12)


def test_ir_across_rules_and_distributions():
    qd = ScoringRule("qd", qbar=2.0)
    for spec in ({"kind": "uniform"}, {"kind": "trunc_normal", "mu_m": 1.3, "mu_f": 0.2, "sigma": 0.15}):
        gg = make_distribution(spec, P, 14, 14)
        reps = [interim_quadrature(PQR, solve_invariant(PQR, gg), gg),
                interim_quadrature(qd, solve_best_response(qd, gg), gg),
                interim_quadrature(qd, "second-score", gg)]
        for r in reps:
            assert r.ir_ok()


def test_incentive_compatibility_spot_check(g, inv):
    rng = np.random.default_rng(5)
    truth = np.column_stack([rng.uniform(1.0, 2.0, 20), rng.uniform(0.1, 0.5, 20)])
    lie = np.column_stack([rng.uniform(1.0, 2.0, 20), rng.uniform(0.1, 0.5, 20)])
    a = interim_quadrature(PQR, inv, g, probes=truth)
    b = interim_quadrature(PQR, inv, g, probes=lie)
    mimic = b.X * (b.T - truth[:, 0] * b.Y - truth[:, 1])
    assert np.all(a.U >= mimic - 1e-6)


def test_payoff_equivalence_for_ratio_rule(g):
    rep = payoff_equivalence_report(PQR, g)
    assert rep.max_gap < 1e-3
    assert rep.order_disagreements == 0
    assert np.all(rep.gap >= 0)


def test_self_comparison_has_zero_gap(g, inv):
    a = interim_quadrature(PQR, inv, g)
    b = interim_quadrature(PQR, inv, g)
    assert np.max(np.abs(a.U - b.U)) == 0.0


def test_paired_monte_carlo_equivalence(g):
    rep = payoff_equivalence_report(PQR, g, probes=default_probes(P, 3), method="monte-carlo",
                                    draws=50_000, seed=4)
    assert rep.max_z < 3.5


def test_invariance_scan_ratio_rule_has_no_flips():
    dists = [uniform(P, 16, 16),
             make_distribution({"kind": "trunc_normal", "mu_m": 1.4, "mu_f": 0.25, "sigma": 0.2}, P, 16, 16),
             make_distribution({"kind": "mixture", "components": [
                 {"rect": [1.0, 1.5, 0.1, 0.3], "weight": 0.7}, {"rect": [1.0, 2.0, 0.1, 0.5], "weight": 0.3}]},
                 P, 16, 16)]
    scan = invariance_scan(PQR, None, dists)
    assert scan.n_flips == 0
    # only exact same-class pairs may be undecided
    assert all(max(abs(x) for x in r["margins"]) < 1e-12 for r in scan.inconclusive)


def test_invariance_scan_single_distribution():
    scan = invariance_scan(PQR, None, [uniform(P, 10, 10)])
    assert scan.n_flips == 0


def test_adversarial_candidates_are_valid_mixtures():
    cands = adversarial_candidates(P, 12, 12)
    assert len(cands) == 6
    for label, spec in cands:
        gg = make_distribution(spec, P, 12, 12)
        assert np.all(gg.density > 0)


def test_csv_columns(g, inv):
    text = interim_quadrature(PQR, inv, g, probes=default_probes(P, 2)).to_csv()
    assert text.splitlines()[0] == "m,f,X,Y,T,U,se_U"
    assert len(text.splitlines()) == 5
