"""Does a first-score auction admit a coarse beliefs equilibrium?

The test is whether break-even effort is affine in the fixed cost on every
marginal-cost line. Efforts pinned at the quality bounds are excused when
they are exactly the clamp of the affine interior piece.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .breakeven import breakeven_batch
from .core import CostParams, ValidationError
from .scoring import ScoringRule

DEFAULT_TOL = 1e-4
CORNER_TOL = 1e-7


class InconsistentVerdict(RuntimeError):
    """Closed-form and numeric classification disagree."""


@dataclass(frozen=True)
class CBEVerdict:
    admits_cbe: bool
    method: str
    nonlinearity_score: float
    witness: Optional[tuple] = None  # (m, f_left, f_mid, f_right)
    note: str = ""

    def to_dict(self) -> dict:
        return {"admits_cbe": self.admits_cbe, "method": self.method,
                "nonlinearity_score": self.nonlinearity_score,
                "witness": list(self.witness) if self.witness else None,
                "note": self.note}


def classify_family(rule: ScoringRule, eta: float) -> CBEVerdict:
    if rule.family == "custom":
        raise ValidationError("custom rules have no closed form; use test_linearity")
    if rule.family == "quasilinear":
        return CBEVerdict(True, "closed-form", 0.0, note="effort does not depend on f")
    if rule.family == "pqr":
        if eta > 1.0:
            return CBEVerdict(True, "closed-form", 0.0, note="effort f/((eta-1)m) is affine in f")
        return CBEVerdict(True, "closed-form", 0.0, note="eta=1: effort sits at q=1 for every f")
    return CBEVerdict(False, "closed-form", float("nan"), note="effort is nonlinear in f")


def _line_scores(e: np.ndarray, q: np.ndarray, f: np.ndarray, q_min: float, scale: float,
                 slope_at=None):
    """Normalized second differences along one line after corner excusal.

    ``slope_at(f)`` gives the local effort slope, used when only one grid
    point is interior.
    """
    n = e.size
    d2 = np.abs(e[2:] - 2.0 * e[1:-1] + e[:-2]) * (n - 1) ** 2 / 4.0 / scale
    top = q >= 1.0 - CORNER_TOL
    bottom = q <= q_min + CORNER_TOL
    inner = ~(top | bottom)
    if inner.all() or not inner.any():
        return d2
    idx = np.flatnonzero(inner)
    if idx[-1] - idx[0] + 1 != idx.size:
        return d2
    if idx.size >= 2:
        slope, icpt = np.polyfit(f[idx], e[idx], 1)
    elif slope_at is not None:
        slope = slope_at(f[idx[0]])
        icpt = e[idx[0]] - slope * f[idx[0]]
    else:
        return d2
    line = slope * f + icpt
    tol = 1e-6 * max(scale, 1.0)
    clamp_ok = np.all(line[top] >= 1.0 - tol) and np.all(line[bottom] <= tol)
    if not clamp_ok:
        return d2
    keep = inner[2:] & inner[1:-1] & inner[:-2]
    return np.where(keep, d2, 0.0)


def _slope_fn(rule, m, eta, span):
    h = 1e-5 * span

    def slope_at(f0):
        q, _ = breakeven_batch(rule, np.array([m, m]), np.array([f0 - h, f0 + h]), eta)
        e = q ** eta
        return float((e[1] - e[0]) / (2 * h))
    return slope_at


def line_nonlinearity(rule: ScoringRule, m: float, f_grid, eta: float,
                      scale: Optional[float] = None):
    """Worst normalized second difference of break-even effort along one line."""
    f = np.asarray(f_grid, float)
    if f.size < 3:
        raise ValidationError("need at least 3 fixed-cost points")
    q, _ = breakeven_batch(rule, np.full(f.size, m), f, eta)
    e = q ** eta
    if scale is None:
        scale = float(e.max() - e.min())
    if scale < 1e-12:
        return 0.0, None
    d2 = _line_scores(e, q, f, rule.q_min, scale, _slope_fn(rule, m, eta, f[-1] - f[0]))
    k = int(np.argmax(d2))
    return float(d2[k]), (float(m), float(f[k]), float(f[k + 1]), float(f[k + 2]))


def test_linearity(rule: ScoringRule, params: CostParams, n_m: int = 11, n_f: int = 41,
                   tol: float = DEFAULT_TOL) -> CBEVerdict:
    if n_f < 3 or n_m < 1:
        raise ValidationError("need at least 3 f points and 1 m point")
    eta = params.eta
    ms = np.linspace(params.m_lo, params.m_hi, n_m)
    fs = np.linspace(params.f_lo, params.f_ext_hi, n_f)
    mm, ff = np.meshgrid(ms, fs, indexing="ij")
    q, _ = breakeven_batch(rule, mm.ravel(), ff.ravel(), eta)
    q = q.reshape(mm.shape)
    e = q ** eta
    scale = float(e.max() - e.min())
    if scale < 1e-12:
        return CBEVerdict(True, "numeric", 0.0, note="effort is constant on the grid")
    worst, witness = -1.0, None
    for i, m in enumerate(ms):
        d2 = _line_scores(e[i], q[i], fs, rule.q_min, scale,
                          _slope_fn(rule, m, eta, fs[-1] - fs[0]))
        k = int(np.argmax(d2))
        if d2[k] > worst:
            worst = float(d2[k])
            witness = (float(m), float(fs[k]), float(fs[k + 1]), float(fs[k + 2]))
    return CBEVerdict(worst < tol, "numeric", worst, witness)


test_linearity.__test__ = False  # keep pytest from collecting it by name


def classify(rule: ScoringRule, params: CostParams, n_m: int = 11, n_f: int = 41,
             tol: float = DEFAULT_TOL) -> CBEVerdict:
    """Numeric verdict, cross-checked against the closed form for built-in families."""
    numeric = test_linearity(rule, params, n_m, n_f, tol)
    if rule.family == "custom":
        return numeric
    closed = classify_family(rule, params.eta)
    if closed.admits_cbe != numeric.admits_cbe:
        raise InconsistentVerdict(
            f"{rule.label()} at eta={params.eta}: closed form says "
            f"{closed.admits_cbe}, numeric test says {numeric.admits_cbe} "
            f"(score {numeric.nonlinearity_score:.3g} at {numeric.witness})"
        )
    return CBEVerdict(closed.admits_cbe, "closed-form+numeric", numeric.nonlinearity_score,
                      numeric.witness, closed.note)


def admits(rule: ScoringRule, params: CostParams) -> bool:
    if rule.family == "custom":
        return test_linearity(rule, params).admits_cbe
    return classify_family(rule, params.eta).admits_cbe
