import numpy as np
import pytest
from hypothesis import given, strategies as st

from scoring_auctions.breakeven import breakeven_batch, breakeven_contract
from scoring_auctions.core import (CostParams, SellerType, ValidationError, evaluate_moment,
                                   make_distribution, max_admissible_eps, perturb, uniform)
from scoring_auctions.equilibrium import (DegenerateType, Density1D, NotAdmitted,
                                          breakeven_profile, cross_class_direction, f2, f2_detail,
                                          foc_residual, nplayer_pushforward, pushforward_density,
                                          score_distribution, solve_1d_first_price,
                                          solve_best_response, solve_invariant,
                                          strategy_from_moments, two_moments_for_type,
                                          within_class_direction)
from scoring_auctions.scoring import ScoringRule

from conftest import FREE

PQR = ScoringRule("pqr")


# --- one-dimensional densities ----------------------------------------------

def test_uniform_conditional_means():
    u = Density1D.uniform(0.0, 1.0)
    assert float(u.conditional_mean_above(0.0)) == pytest.approx(0.5)
    assert float(u.conditional_mean_above(0.5)) == pytest.approx(0.75)


def test_point_mass_bid():
    b = solve_1d_first_price(Density1D.point_mass(0.7), nodes=np.array([0.1, 0.4, 0.7]))
    assert np.allclose(b(np.array([0.1, 0.4, 0.7])), 0.7)


@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(0, 1), st.floats(0.01, 1)), min_size=1, max_size=8))
def test_density_mass_and_monotone_cdf(segs):
    lo = np.array([a for a, _, _ in segs])
    hi = lo + np.array([w for _, w, _ in segs])
    mass = np.array([m for _, _, m in segs])
    d = Density1D.from_segments(lo, hi, mass / mass.sum())
    assert abs(d.total_mass() - 1.0) < 1e-9
    x = np.linspace(lo.min() - 0.1, hi.max() + 0.1, 200)
    c = d.cdf(x)
    assert np.all(np.diff(c) >= -1e-12)
    assert c[-1] == pytest.approx(1.0, abs=1e-9)
    cm = d.conditional_mean_above(x[:-1])
    ok = np.isfinite(cm)
    assert np.all(cm[ok] >= x[:-1][ok] - 1e-9)


def test_ode_residual_of_closed_form_bid():
    d = Density1D.from_segments(np.array([0.0, 0.3]), np.array([1.0, 0.6]), np.array([0.6, 0.4]))
    b = solve_1d_first_price(d)
    r = b.ode_residual()
    f = b.nodes[1:-1]
    step = b.nodes[1] - b.nodes[0]
    # the bid has kinks where the density jumps
    clear = np.min(np.abs(f[:, None] - np.array([0.0, 0.3, 0.6, 1.0])[None, :]), axis=1) > 1.5 * step
    assert np.max(np.abs(r[clear])) < 1e-3
    assert np.max(np.abs(solve_1d_first_price(Density1D.uniform(0, 1)).ode_residual())) < 1e-3


def test_nplayer_identity_and_min_of_two():
    u = Density1D.uniform(0.0, 1.0)
    x = np.linspace(0, 1, 11)
    assert np.allclose(nplayer_pushforward(u, 2).cdf(x), u.cdf(x))
    d3 = nplayer_pushforward(u, 3)
    assert abs(d3.total_mass() - 1.0) < 1e-9
    assert float(d3.conditional_mean_above(0.0)) == pytest.approx(1 / 3, abs=1e-4)


# --- pushforward and f2 -------------------------------------------------------

def test_pushforward_conserves_mass(g_free):
    for m in (1.0, 1.5, 2.0):
        assert abs(pushforward_density(PQR, g_free, m, 2.0).total_mass() - 1.0) < 1e-9


def test_quasilinear_eta1_pushforward_is_shifted_uniforms():
    rule = ScoringRule("quasilinear")
    p = CostParams(1.0, 1.0, 2.0, 0.5, 1.5)
    n = 20
    g = uniform(p, n, n)
    m_ref = 1.3
    gm = pushforward_density(rule, g, m_ref, 1.0)
    # rho = f + 1/m_ref - 1/m with m, f independent uniforms
    ms = np.linspace(1, 2, 4001)
    x = np.linspace(0.0, 2.0, 400)
    shift = 1 / m_ref - 1 / ms
    exact = np.trapezoid(np.clip((x[:, None] - shift[None, :] - 0.5) / 1.0, 0, 1), ms, axis=1)
    assert np.max(np.abs(gm.cdf(x) - exact)) < 1.0 / n


def test_near_point_mass_pushforward():
    p = CostParams(2.0, *FREE)
    g = make_distribution({"kind": "trunc_normal", "mu_m": 1.5, "mu_f": 0.3, "sigma": 0.02}, p, 40, 40)
    gm = pushforward_density(PQR, g, 1.2, 2.0)
    # rho on line 1.2 of (1.5, 0.3) is 1.5 * 0.3 / 1.2
    assert gm.mean() == pytest.approx(0.375, abs=2e-3)


def test_f2_degenerate_at_weakest_type(g_free):
    t = SellerType(2.0, 0.5)
    z, degenerate = f2_detail(PQR, g_free, t, 2.0)
    assert degenerate and z == 0.5


def test_f2_refuses_non_admitting_rule(g_free):
    with pytest.raises(NotAdmitted):
        f2(ScoringRule("qd"), g_free, SellerType(1.5, 0.3), 2.0)


def test_f2_equals_1d_bid_at_own_pseudotype(g_free):
    for t in (SellerType(1.2, 0.2), SellerType(1.7, 0.35), SellerType(1.5, 0.45)):
        gm = pushforward_density(PQR, g_free, t.m, 2.0)
        b = solve_1d_first_price(gm)
        assert abs(float(b(np.array(t.f))) - f2(PQR, g_free, t, 2.0)) < 1e-6


# --- invariant solver ---------------------------------------------------------

def test_invariant_strategy_invariants(g_free):
    st_ = solve_invariant(PQR, g_free)
    assert np.allclose(st_.score, PQR.score(st_.p, st_.q), atol=1e-9)
    assert np.all(st_.score <= st_.be_score + 1e-9)
    assert np.all(np.diff(st_.score, axis=1) <= 1e-12)
    assert st_.mode == "invariant-closed-path"


def test_weakest_type_bids_breakeven(g_free):
    st_ = solve_invariant(PQR, g_free, type_grid=([2.0], [0.5]))
    be = breakeven_contract(PQR, SellerType(2.0, 0.5), 2.0)
    assert float(st_.score[0, 0]) == pytest.approx(be.score, abs=1e-12)


def test_quasilinear_eta1_quality_is_fixed_cost_free():
    rule = ScoringRule("quasilinear")
    p = CostParams(1.0, 1.0, 2.0, 0.5, 1.5)
    st_ = solve_invariant(rule, uniform(p, 12, 12))
    expect = 1.0 / st_.m_nodes ** 2
    assert np.max(np.abs(st_.q - expect[:, None])) < 1e-7
    assert np.allclose(st_.p, st_.m_nodes[:, None] * st_.q + st_.f2, atol=1e-9)


def test_invariant_refuses_qd(g_free):
    with pytest.raises(NotAdmitted):
        solve_invariant(ScoringRule("qd"), g_free)


def test_foc_residual_invariant_vs_breakeven_control():
    g = uniform(CostParams(2.0, *FREE), 30, 30)
    assert foc_residual(PQR, solve_invariant(PQR, g), g).max_interior < 1e-3
    assert foc_residual(PQR, breakeven_profile(PQR, g), g).max_interior > 0.1


def test_score_distribution_invariants(g_free):
    sd = score_distribution(solve_invariant(PQR, g_free), g_free)
    s = np.linspace(sd.values.min() - 0.05, sd.values.max() + 0.05, 2001)
    c, h = sd.cdf_pdf(s)
    assert np.all(np.diff(c) >= -1e-12)
    assert c[-1] == pytest.approx(1.0, abs=1e-9)
    fd = np.diff(c) / np.diff(s)
    mid = 0.5 * (h[1:] + h[:-1])
    assert np.median(np.abs(fd - mid)) < 1e-2 * max(1.0, np.max(h))


# --- moments ------------------------------------------------------------------

@pytest.mark.parametrize("t", [SellerType(1.2, 0.2), SellerType(1.8, 0.4), SellerType(1.5, 0.3)])
def test_moment_ratio_is_f2(g_free, t):
    num, den = two_moments_for_type(PQR, t, 2.0)
    vals = (evaluate_moment(num, g_free), evaluate_moment(den, g_free))
    assert vals[0] / vals[1] == pytest.approx(f2(PQR, g_free, t, 2.0), abs=1e-9)
    c = strategy_from_moments(PQR, t, 2.0, vals)
    st_ = solve_invariant(PQR, g_free, type_grid=([t.m], [t.f]))
    assert abs(c.p - st_.p[0, 0]) < 1e-10 and abs(c.q - st_.q[0, 0]) < 1e-10


def test_strongest_type_beats_everyone(g_free):
    _, den = two_moments_for_type(PQR, SellerType(1.0, 0.1), 2.0)
    assert evaluate_moment(den, g_free) == pytest.approx(1.0, abs=1e-9)


def test_strategy_from_moments_edge_cases():
    t = SellerType(1.4, 0.3)
    be = breakeven_contract(PQR, t, 2.0).contract
    c = strategy_from_moments(PQR, t, 2.0, (0.3 * 0.5, 0.5))
    assert c.p == pytest.approx(be.p, abs=1e-12) and c.q == pytest.approx(be.q, abs=1e-12)
    scores = [float(PQR.score(*(lambda c: (c.p, c.q))(strategy_from_moments(PQR, t, 2.0, (z, 1.0)))))
              for z in np.linspace(0.3, 0.6, 7)]
    assert np.all(np.diff(scores) <= 1e-12)
    with pytest.raises(DegenerateType):
        strategy_from_moments(PQR, t, 2.0, (0.0, 0.0))


# --- perturbations ------------------------------------------------------------

@pytest.mark.parametrize("n", [10, 20])
def test_within_class_perturbation_invariance(n):
    g = uniform(CostParams(2.0, *FREE), n, n)
    move = within_class_direction(PQR, g)
    assert move.max_cdf_change < 1e-9
    g2 = perturb(g, move.direction, 0.9 * max_admissible_eps(g, move.direction))
    a, b = solve_invariant(PQR, g), solve_invariant(PQR, g2)
    assert np.max(np.abs(a.score - b.score)) < 1e-6
    for t in (SellerType(1.25, 0.3), SellerType(1.75, 0.2)):
        for M in two_moments_for_type(PQR, t, 2.0):
            assert abs(evaluate_moment(M, g) - evaluate_moment(M, g2)) < 1e-6


def test_within_class_requires_matching_runs():
    g = uniform(CostParams(2.0, 1.0, 1.013, 0.1, 0.5), 3, 3)
    with pytest.raises(ValidationError):
        within_class_direction(PQR, g, min_cells=3)


@pytest.mark.parametrize("t", [SellerType(1.5, 0.3), SellerType(1.2, 0.25), SellerType(1.8, 0.35)])
def test_cross_class_perturbation_lowers_f2(g_free, t):
    v = cross_class_direction(PQR, g_free, t)
    before = f2(PQR, g_free, t, 2.0)
    for share in (0.1, 0.5, 0.9):
        g2 = perturb(g_free, v, share * max_admissible_eps(g_free, v))
        assert f2(PQR, g2, t, 2.0) < before - 1e-9


# --- best response ------------------------------------------------------------

def test_best_response_validation(g_free):
    with pytest.raises(ValidationError):
        solve_best_response(PQR, g_free, damping=0.0)
    with pytest.raises(ValidationError):
        solve_best_response(PQR, uniform(CostParams(2.0, *FREE), 8, 8))


def test_best_response_small_grid():
    g = uniform(CostParams(2.0, *FREE), 12, 12)
    br = solve_best_response(PQR, g)
    inv = solve_invariant(PQR, g)
    assert br.converged and br.iterations < 500
    assert np.max(np.abs(br.score - inv.score)) < 2e-2
    assert np.all(br.score <= br.be_score + 1e-9)
    # the weakest node bids its own break-even score
    assert br.score[-1, -1] == pytest.approx(br.be_score[-1, -1], abs=1e-6)


def test_best_response_near_point_mass():
    p = CostParams(2.0, *FREE)
    g = make_distribution({"kind": "trunc_normal", "mu_m": 1.5, "mu_f": 0.3, "sigma": 0.03}, p, 20, 20)
    br = solve_best_response(PQR, g)
    s_tau = breakeven_contract(PQR, SellerType(1.5, 0.3), 2.0).score
    strong = br.be_score > s_tau + 0.05
    assert br.converged
    assert np.max(np.abs(br.score[strong] - s_tau)) < 0.05


def test_best_response_runs_for_qd():
    g = uniform(CostParams(2.0, *FREE), 12, 12)
    br = solve_best_response(ScoringRule("qd"), g, max_iter=50)
    assert br.mode == "best-response-fixed-point"
    assert np.all(br.score <= br.be_score + 1e-9)
    assert br.br_residual is not None
