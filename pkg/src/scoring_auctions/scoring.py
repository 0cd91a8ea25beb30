"""Scoring-rule families, iso-score prices and indirect utilities."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

import numpy as np

from .core import CostParams, SellerType, Contract, ValidationError
from .optimize import maximize_batch

FAMILIES = ("quasilinear", "pqr", "qd", "custom")
PQR_Q_MIN = 1e-9
DEFAULT_GRID = 512
# coarse scan used by whole-grid solver passes; smooth built-in objectives need less
BULK_GRID = 128
DEFAULT_TOL = 1e-10


class InfeasibleScore(ValueError):
    """No contract with nonnegative price attains the requested score."""


@dataclass(frozen=True, eq=False)
class ScoringRule:
    """A buyer's score over (price, quality).

    ``phi_a``/``phi_b`` parametrize the quasilinear value ``a * q**b``;
    ``qbar`` is the quality-discount anchor; ``score_fn`` is the vectorized
    mapping ``(p, q) -> score`` for custom rules.
    """

    family: str
    phi_a: float = 2.0
    phi_b: float = 0.5
    qbar: float = 2.0
    score_fn: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = ""
    _probe_seed: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown scoring family {self.family!r}")
        if self.family == "quasilinear" and not (self.phi_a > 0 and 0 < self.phi_b <= 1):
            raise ValidationError("quasilinear phi must be a*q**b with a > 0 and 0 < b <= 1")
        if self.family == "qd" and not self.qbar > 1:
            raise ValidationError(f"quality discount needs qbar > 1, got {self.qbar}")
        if self.family == "custom":
            if self.score_fn is None:
                raise ValidationError("custom rule needs a score_fn")
            worst = monotonicity_violation(self)
            if worst > 0:
                raise ValidationError(
                    f"custom score is not strictly increasing in q and decreasing in p "
                    f"(worst violation {worst:.3g})"
                )

    @property
    def q_min(self) -> float:
        return PQR_Q_MIN if self.family == "pqr" else 0.0

    def label(self) -> str:
        if self.name:
            return self.name
        if self.family == "quasilinear":
            return f"quasilinear(a={self.phi_a:g},b={self.phi_b:g})"
        if self.family == "qd":
            return f"qd(qbar={self.qbar:g})"
        return self.family

    def phi(self, q):
        return self.phi_a * np.power(q, self.phi_b)

    def score(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.family == "quasilinear":
            return self.phi(q) - p
        if self.family == "pqr":
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(q > 0, -p / np.where(q > 0, q, 1.0), -np.inf)
        if self.family == "qd":
            return -p * (self.qbar - q)
        return np.asarray(self.score_fn(p, q), dtype=float)

    def price(self, s, q):
        """Price reaching score ``s`` at quality ``q`` (may be negative: infeasible)."""
        s = np.asarray(s, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.family == "quasilinear":
            return self.phi(q) - s
        if self.family == "pqr":
            return -s * q
        if self.family == "qd":
            return -s / (self.qbar - q)
        return _custom_price(self, s, q)

    def price_ds(self, s, q, h: float = 1e-6):
        """Derivative of the iso-score price in the score."""
        s, q = np.broadcast_arrays(np.asarray(s, float), np.asarray(q, float))
        if self.family == "quasilinear":
            return np.full(s.shape, -1.0)
        if self.family == "pqr":
            return -q
        if self.family == "qd":
            return -1.0 / (self.qbar - q)
        return (self.price(s + h, q) - self.price(s - h, q)) / (2.0 * h)

    def to_dict(self) -> dict:
        if self.family == "quasilinear":
            return {"family": "quasilinear", "phi": {"kind": "power", "a": self.phi_a, "b": self.phi_b}}
        if self.family == "qd":
            return {"family": "qd", "qbar": self.qbar}
        return {"family": self.family}


def _custom_price(rule: ScoringRule, s, q, iters: int = 200):
    s, q = np.broadcast_arrays(np.asarray(s, float), np.asarray(q, float))
    lo = np.zeros(s.shape)
    hi = np.ones(s.shape)
    # score decreases in p: grow hi until score(hi) <= s
    for _ in range(200):
        short = rule.score(hi, q) > s
        if not short.any():
            break
        hi = np.where(short, hi * 2.0, hi)
    infeasible = rule.score(lo, q) < s
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = rule.score(mid, q) >= s
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.all(hi - lo <= 1e-15 * np.maximum(1.0, hi)):
            break
    return np.where(infeasible, -1.0, 0.5 * (lo + hi))


def monotonicity_violation(rule: ScoringRule, n: int = 1000, seed: int = 0) -> float:
    """Worst violation of strict monotonicity at random probes (0 when none)."""
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.0, 5.0, n)
    q = rng.uniform(max(rule.q_min, 1e-3), 1.0, n)
    dp, dq = 1e-4, 1e-4
    s0 = rule.score(p, q)
    d_p = rule.score(p + dp, q) - s0
    qq = np.minimum(q + dq, 1.0)
    d_q = rule.score(p, qq) - rule.score(p, qq - dq)
    bad = np.concatenate([np.maximum(d_p, 0.0), np.maximum(-d_q, 0.0)])
    bad = np.where(np.isnan(bad), np.inf, bad)
    strict_fail = np.concatenate([d_p >= 0, d_q <= 0])
    if not strict_fail.any():
        return 0.0
    return float(max(np.max(bad), np.finfo(float).tiny))


def rule_from_dict(d: Mapping[str, Any]) -> ScoringRule:
    fam = d.get("family")
    if fam == "quasilinear":
        phi = d.get("phi", {"kind": "power", "a": 2.0, "b": 0.5})
        if phi.get("kind", "power") != "power":
            raise ValidationError(f"unsupported phi kind {phi.get('kind')!r}")
        return ScoringRule("quasilinear", phi_a=float(phi["a"]), phi_b=float(phi["b"]))
    if fam == "pqr":
        return ScoringRule("pqr")
    if fam == "qd":
        return ScoringRule("qd", qbar=float(d.get("qbar", 2.0)))
    raise ValidationError(f"rule spec family must be quasilinear, pqr or qd; got {fam!r}")


# --- scalar API -------------------------------------------------------------

def score(rule: ScoringRule, c: Contract) -> float:
    if rule.family == "pqr" and c.q == 0:
        raise ValueError("price-quality ratio score is undefined at q = 0")
    return float(rule.score(c.p, c.q))


def price_for_score(rule: ScoringRule, s: float, q: float) -> float:
    if rule.family == "pqr" and q <= 0:
        raise InfeasibleScore("price-quality ratio cannot be inverted at q = 0")
    p = float(rule.price(s, q))
    if not p >= 0.0:
        raise InfeasibleScore(f"no nonnegative price attains score {s} at quality {q}")
    return p


def _utility_objective(rule: ScoringRule, eta: float):
    def obj(q, s, m):
        p = rule.price(s, q)
        val = p - m * np.power(q, eta)
        return np.where(p >= 0.0, val, -np.inf)
    return obj


def optimal_quality_batch(rule: ScoringRule, s, m, eta: float,
                          n_grid: int = DEFAULT_GRID, tol: float = DEFAULT_TOL):
    """Vectorized ``argmax_q P(s, q) - m q**eta`` and its value ``ubar(s, m)``."""
    s, m = np.broadcast_arrays(np.asarray(s, float), np.asarray(m, float))
    q, v = maximize_batch(_utility_objective(rule, eta), rule.q_min, 1.0, (s, m), n_grid, tol)
    return q, v


def ubar(rule: ScoringRule, s, m, eta: float, n_grid: int = DEFAULT_GRID, tol: float = DEFAULT_TOL):
    """Gross indirect utility ``max_q P(s, q) - m q**eta`` (utility plus fixed cost)."""
    return optimal_quality_batch(rule, s, m, eta, n_grid, tol)[1]


def optimal_quality_given_score(rule: ScoringRule, s: float, m: float, eta: float) -> float:
    q, v = optimal_quality_batch(rule, np.array([s]), np.array([m]), eta)
    if not np.isfinite(v[0]):
        raise InfeasibleScore(f"score {s} is not attainable with a nonnegative price")
    return float(q[0])


def indirect_utility(rule: ScoringRule, s: float, t: SellerType, eta: float) -> float:
    q, v = optimal_quality_batch(rule, np.array([s]), np.array([t.m]), eta)
    if not np.isfinite(v[0]):
        raise InfeasibleScore(f"score {s} is not attainable with a nonnegative price")
    return float(v[0]) - t.f


def ubar_ds(rule: ScoringRule, s, m, eta: float, h: float = 1e-5):
    """Central difference of ``ubar`` in the score."""
    s = np.asarray(s, float)
    return (ubar(rule, s + h, m, eta) - ubar(rule, s - h, m, eta)) / (2.0 * h)


def ubar_with_slope(rule: ScoringRule, s, m, eta: float, n_grid: int = DEFAULT_GRID):
    """``ubar`` and its score derivative ``P_s(s, q*)`` (envelope theorem)."""
    q, v = optimal_quality_batch(rule, s, m, eta, n_grid)
    return v, rule.price_ds(s, q)


# --- regularity probes ----------------------------------------------------

@dataclass
class RegularityReport:
    convexity_ok: bool
    single_crossing_ok: bool
    boundary_ok: bool
    worst_violation: float
    probe_locations: list
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "convexity_ok": self.convexity_ok,
            "single_crossing_ok": self.single_crossing_ok,
            "boundary_ok": self.boundary_ok,
            "worst_violation": self.worst_violation,
            "probe_locations": self.probe_locations,
            "details": self.details,
        }


def check_regularity(rule: ScoringRule, params: CostParams, n_scores: int = 12, n_types: int = 6,
                     tol: float = 1e-8) -> RegularityReport:
    """Numerical probes of the regularity conditions.

    * convexity: the seller's net cost ``m q**eta - P(s, q)`` has nonnegative
      second differences in ``q`` (the maximizer of ``P - m q**eta`` is unique);
    * single crossing: ``d/dm [u / (-u_s)]`` keeps a strictly negative sign,
      where ``u_s`` is the score derivative of utility;
    * boundary: the maximizer of ``P(s, q) - m q**eta`` is interior.
    """
    from .breakeven import breakeven_score_batch

    eta = params.eta
    ms = np.linspace(params.m_lo, params.m_hi, n_types)
    fs = np.linspace(params.f_lo, params.f_hi, n_types)
    mm, ff = np.meshgrid(ms, fs, indexing="ij")
    s_be = breakeven_score_batch(rule, mm, ff, eta)
    s_grid = np.linspace(s_be.min(), s_be.max(), n_scores)
    # scores strictly below the top break-even level keep utilities positive
    s_grid = s_grid[:-1] if n_scores > 2 else s_grid

    worst = 0.0
    probes = []

    # convexity of the net cost along q
    qs = np.linspace(max(rule.q_min, 1e-3), 1.0, 201)
    h = qs[1] - qs[0]
    conv_worst = 0.0
    for s in s_grid:
        for m in ms:
            p = rule.price(s, qs)
            ok = p >= 0
            cost = m * qs ** eta - p
            d2 = (cost[2:] - 2 * cost[1:-1] + cost[:-2]) / h ** 2
            d2 = d2[ok[2:] & ok[1:-1] & ok[:-2]]
            if d2.size:
                v = float(max(0.0, -d2.min()))
                if v > conv_worst:
                    conv_worst = v
                    if v > tol:
                        probes.append({"check": "convexity", "s": float(s), "m": float(m), "violation": v})
    worst = max(worst, conv_worst)

    # single crossing: u/(-u_s) decreasing in m
    sc_worst = 0.0
    dm = 1e-4 * (params.m_hi - params.m_lo)
    for s in s_grid:
        for m in ms[1:-1]:
            for f in fs:
                ratio = []
                for mv in (m - dm, m + dm):
                    u = float(ubar(rule, s, mv, eta)) - f
                    us = float(ubar_ds(rule, s, mv, eta))
                    ratio.append(u / -us if us != 0 else np.nan)
                d = (ratio[1] - ratio[0]) / (2 * dm)
                if not np.isfinite(d):
                    continue
                if d >= 0:
                    v = d if d > 0 else tol * 10
                    if v > sc_worst:
                        sc_worst = v
                        probes.append({"check": "single_crossing", "s": float(s), "m": float(m),
                                       "f": float(f), "derivative": d})
    worst = max(worst, sc_worst)

    # interior maximizers
    S, M = np.meshgrid(s_grid, ms, indexing="ij")
    q_star, _ = optimal_quality_batch(rule, S, M, eta)
    at_bound = (q_star <= rule.q_min + 1e-7) | (q_star >= 1.0 - 1e-7)
    n_bound = int(at_bound.sum())
    for k in np.argwhere(at_bound)[:10]:
        probes.append({"check": "boundary", "s": float(S[tuple(k)]), "m": float(M[tuple(k)]),
                       "q": float(q_star[tuple(k)])})

    return RegularityReport(
        convexity_ok=conv_worst <= tol,
        single_crossing_ok=sc_worst <= tol,
        boundary_ok=n_bound == 0,
        worst_violation=float(worst),
        probe_locations=probes,
        details={"n_boundary_maximizers": n_bound, "n_probes": int(S.size)},
    )
