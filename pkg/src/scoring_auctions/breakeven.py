"""Break-even contracts, the break-even order, and pseudotype projections."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Contract, CostParams, SellerType
from .optimize import bisect_decreasing, maximize_batch
from .scoring import DEFAULT_GRID, DEFAULT_TOL, ScoringRule, ubar

TIE_TOL = 1e-10


class ProjectionRangeError(ValueError):
    """A pseudotype fell outside the extended fixed-cost range."""


@dataclass(frozen=True)
class BreakEvenResult:
    contract: Contract
    score: float
    effort: float

    def to_record(self, t: SellerType) -> dict:
        return {"m": t.m, "f": t.f, "p": self.contract.p, "q": self.contract.q,
                "score": self.score, "effort": self.effort}


def _be_objective(rule: ScoringRule, eta: float):
    # prices are floored at zero: a type whose cost is negative prices at 0
    def obj(q, m, f):
        return rule.score(np.maximum(m * np.power(q, eta) + f, 0.0), q)
    return obj


def breakeven_batch(rule: ScoringRule, m, f, eta: float, n_grid: int = DEFAULT_GRID,
                    tol: float = DEFAULT_TOL):
    """Vectorized break-even quality and score: ``max_q score(m q**eta + f, q)``."""
    m, f = np.broadcast_arrays(np.asarray(m, float), np.asarray(f, float))
    return maximize_batch(_be_objective(rule, eta), rule.q_min, 1.0, (m, f), n_grid, tol)


def breakeven_score_batch(rule: ScoringRule, m, f, eta: float) -> np.ndarray:
    return breakeven_batch(rule, m, f, eta)[1]


def breakeven_effort_batch(rule: ScoringRule, m, f, eta: float) -> np.ndarray:
    return np.power(breakeven_batch(rule, m, f, eta)[0], eta)


def breakeven_contract(rule: ScoringRule, t: SellerType, eta: float) -> BreakEvenResult:
    q, s = breakeven_batch(rule, np.array([t.m]), np.array([t.f]), eta)
    q = float(q[0])
    p = max(t.m * q ** eta + t.f, 0.0)
    return BreakEvenResult(Contract(p, q), float(s[0]), q ** eta)


def breakeven_effort(rule: ScoringRule, t: SellerType, eta: float) -> float:
    return breakeven_contract(rule, t, eta).effort


def breakeven_order(rule: ScoringRule, t1: SellerType, t2: SellerType, eta: float) -> str:
    """``"t1-wins"``, ``"t2-wins"`` or ``"tie"`` by break-even score."""
    s1 = breakeven_contract(rule, t1, eta).score
    s2 = breakeven_contract(rule, t2, eta).score
    if abs(s1 - s2) < TIE_TOL:
        return "tie"
    return "t1-wins" if s1 > s2 else "t2-wins"


def closed_form_effort(rule: ScoringRule, m: float, f: float, eta: float) -> Optional[float]:
    """Textbook break-even effort where one exists, ignoring the q <= 1 cap.

    Quasilinear (power value): ``phi'(q) = m eta q**(eta-1)``; price-quality
    ratio with ``eta > 1``: ``f / ((eta - 1) m)``. Returns None otherwise.
    """
    if rule.family == "quasilinear":
        a, b = rule.phi_a, rule.phi_b
        if eta == 1.0 and b == 1.0:
            return None
        # a b q**(b-1) = m eta q**(eta-1)  ->  q**(eta-b) = a b / (m eta)
        q = (a * b / (m * eta)) ** (1.0 / (eta - b))
        return q ** eta
    if rule.family == "pqr" and eta > 1.0:
        return f / ((eta - 1.0) * m)
    return None


def project_pseudotype(rule: ScoringRule, m_ref: float, t: SellerType, eta: float,
                       params: Optional[CostParams] = None, tol: float = 1e-12) -> float:
    """Fixed cost ``rho`` on the line ``m = m_ref`` sharing ``t``'s break-even score.

    Found by bisection on the strictly decreasing map ``f -> s_BE(m_ref, f)``
    over the extended range of ``params`` (or a wide default bracket).
    """
    target = breakeven_contract(rule, t, eta).score
    if params is not None:
        lo, hi = params.f_ext_lo, params.f_ext_hi
    else:
        lo, hi = min(0.0, t.f) - abs(t.m - m_ref) - 1.0, t.f + abs(t.m - m_ref) + 1.0

    def s_of_f(f):
        return float(breakeven_batch(rule, np.array([m_ref]), np.array([f]), eta)[1][0])

    try:
        return bisect_decreasing(s_of_f, target, lo, hi, tol=tol)
    except ValueError as exc:
        raise ProjectionRangeError(
            f"pseudotype of {t} on m={m_ref} lies outside [{lo}, {hi}]"
        ) from exc


def project_batch(rule: ScoringRule, m_ref, s_be, eta: float) -> np.ndarray:
    """Pseudotypes on line ``m_ref`` of types with break-even scores ``s_be``.

    ``(m_ref, rho)`` breaks even at score ``s`` exactly when the best gross
    surplus ``max_q P(s, q) - m_ref q**eta`` equals ``rho``, so no root search
    is needed.
    """
    return ubar(rule, s_be, m_ref, eta)
