"""Moment signals and the learn-then-bid reduction.

A seller learns two linear moments of the type distribution and bids as a
fixed function of their values. ``verify_cbe`` checks that this signal-only
bid agrees with the full-information equilibrium bid across a family of
distributions, and that equal signals always produce equal bids.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .breakeven import breakeven_contract
from .classifier import admits
from .core import (Contract, CostParams, Moment, PerturbationDirection, SellerType,
                   TypeDistribution, ValidationError, evaluate_moment, make_distribution,
                   max_admissible_eps, perturb, uniform)
from .equilibrium import (DEGENERATE_MASS, NotAdmitted, cross_class_direction, line_segments,
                          solve_invariant, strategy_from_moments, two_moments_for_type,
                          within_class_direction)
from .scoring import ScoringRule

REALIZATION_TOL = 1e-8


@dataclass(frozen=True)
class MomentSignal:
    type: SellerType
    moments: tuple
    realizations: tuple
    degenerate: bool = False

    def __post_init__(self):
        if len(self.moments) != len(self.realizations):
            raise ValidationError("one realization per moment is required")

    def to_dict(self) -> dict:
        return {"type": [self.type.m, self.type.f],
                "moments": [M.label for M in self.moments],
                "realizations": list(self.realizations), "degenerate": self.degenerate}


def _gate(rule: ScoringRule, params: CostParams):
    if not admits(rule, params):
        raise NotAdmitted(f"{rule.label()} has no two-moment strategy at eta={params.eta}")


def acquire(rule: ScoringRule, t: SellerType, g: TypeDistribution,
            eta: Optional[float] = None) -> MomentSignal:
    """Evaluate the two bid-relevant moments of ``t`` at the true distribution."""
    eta = g.params.eta if eta is None else eta
    _gate(rule, g.params)
    moments = two_moments_for_type(rule, t, eta)
    vals = tuple(evaluate_moment(M, g) for M in moments)
    return MomentSignal(t, moments, vals, degenerate=vals[1] <= DEGENERATE_MASS)


def bid_from_signal(rule: ScoringRule, sig: MomentSignal, eta: float) -> Contract:
    """The bid as a function of the signal alone; a type that beats no one bids break-even."""
    if sig.degenerate:
        return breakeven_contract(rule, sig.type, eta).contract
    return strategy_from_moments(rule, sig.type, eta, sig.realizations)


def common_prior_bid(rule: ScoringRule, t: SellerType, g: TypeDistribution, eta: float) -> Contract:
    st = solve_invariant(rule, g, eta, type_grid=([t.m], [t.f]))
    return st.contract(0, 0)


def _gap(c1: Contract, c2: Contract) -> float:
    return max(abs(c1.p - c2.p), abs(c1.q - c2.q))


def _groups(vals: np.ndarray, tol: float) -> list:
    """Single-linkage groups of rows whose realizations agree within ``tol``."""
    labels = list(range(len(vals)))
    for a in range(len(vals)):
        for b in range(a + 1, len(vals)):
            if np.max(np.abs(vals[a] - vals[b])) <= tol:
                old, new = labels[b], labels[a]
                labels = [new if x == old else x for x in labels]
    out = {}
    for k, lab in enumerate(labels):
        out.setdefault(lab, []).append(k)
    return list(out.values())


@dataclass
class TypeCheck:
    type: SellerType
    realizations: list
    bids: list
    common_prior: list
    groups: list
    within_group_gap: float
    signal_gap: float
    passed: bool

    def to_dict(self) -> dict:
        return {"type": [self.type.m, self.type.f],
                "realizations": [list(r) for r in self.realizations],
                "bids": [[c.p, c.q] for c in self.bids],
                "common_prior": [[c.p, c.q] for c in self.common_prior],
                "groups": self.groups, "within_group_gap": self.within_group_gap,
                "signal_gap": self.signal_gap, "passed": self.passed}


@dataclass
class CBEReport:
    rule: str
    eta: float
    labels: list
    checks: list = field(default_factory=list)
    refused: bool = False
    note: str = ""

    @property
    def passed(self) -> bool:
        return not self.refused and all(c.passed for c in self.checks)

    @property
    def worst(self) -> float:
        return max((max(c.within_group_gap, c.signal_gap) for c in self.checks), default=0.0)

    def to_dict(self) -> dict:
        return {"rule": self.rule, "eta": self.eta, "labels": self.labels,
                "verdict": "refused" if self.refused else ("pass" if self.passed else "fail"),
                "worst_gap": self.worst, "note": self.note,
                "types": [c.to_dict() for c in self.checks]}


def verify_cbe(rule: ScoringRule, eta: Optional[float], family: Sequence[TypeDistribution],
               probes=None, tol: float = 1e-8, labels=None) -> CBEReport:
    """Check that signal-only bids reproduce the common-prior equilibrium at every member.

    Members whose signals agree must have the same common-prior bid, and the
    bid computed from the signal alone must match each member's common-prior
    bid. Rules without a two-moment equilibrium get a refused report.
    """
    if len(family) < 2:
        raise ValidationError("verify_cbe needs at least two distributions")
    params = family[0].params
    eta = params.eta if eta is None else eta
    labels = list(labels) if labels is not None else [f"g{k}" for k in range(len(family))]
    if not admits(rule, params):
        return CBEReport(rule.label(), eta, labels, refused=True,
                         note="the rule's break-even effort is nonlinear in the fixed cost; "
                              "no coarse-beliefs path exists")
    if probes is None:
        from .simulator import default_probes
        probes = default_probes(params, 5)
    report = CBEReport(rule.label(), eta, labels)
    for m, f in np.asarray(probes, float).reshape(-1, 2):
        t = SellerType(float(m), float(f))
        sigs = [acquire(rule, t, g, eta) for g in family]
        bids = [bid_from_signal(rule, s, eta) for s in sigs]
        cp = [common_prior_bid(rule, t, g, eta) for g in family]
        vals = np.array([s.realizations for s in sigs])
        groups = _groups(vals, REALIZATION_TOL)
        within = 0.0
        for grp in groups:
            for k in grp[1:]:
                within = max(within, _gap(cp[grp[0]], cp[k]), _gap(bids[grp[0]], bids[k]))
        signal = max(_gap(b, c) for b, c in zip(bids, cp))
        report.checks.append(TypeCheck(t, [list(s.realizations) for s in sigs], bids, cp, groups,
                                       within, signal, within <= tol and signal <= tol))
    return report


# --- information technology tiers ------------------------------------------

def _fully(rule, g, t, eta):
    lo, hi, _, _, _ = line_segments(rule, g, t.m, eta)
    return lo, hi, 0.5 * (lo + hi)


def denominator_fixed_direction(rule: ScoringRule, g: TypeDistribution, t: SellerType,
                                eta: float) -> PerturbationDirection:
    """Shift mass between two cells ``t`` beats outright: the beaten mass is unchanged."""
    lo, _, c = _fully(rule, g, t, eta)
    beaten = np.argwhere(lo >= t.f)
    if len(beaten) < 2:
        raise ValidationError(f"type {t} beats fewer than two whole cells")
    cb = c[tuple(beaten.T)]
    src, dst = tuple(beaten[np.argmax(cb)]), tuple(beaten[np.argmin(cb)])
    return PerturbationDirection.transfer(g, [src], [dst])


def numerator_fixed_direction(rule: ScoringRule, g: TypeDistribution, t: SellerType,
                              eta: float) -> PerturbationDirection:
    """Reweight beaten cells so the pseudotype-weighted mass is unchanged.

    Mass ``1`` leaves the highest beaten cell, ``c_hi / c_lo`` enters the
    lowest, and the balance leaves the cells stronger than ``t``.
    """
    lo, hi, c = _fully(rule, g, t, eta)
    beaten = np.argwhere(lo >= t.f)
    stronger = np.argwhere(hi <= t.f)
    if len(beaten) < 2 or not len(stronger):
        raise ValidationError(f"type {t} lacks the cells for a numerator-fixed move")
    cb = c[tuple(beaten.T)]
    src, dst = tuple(beaten[np.argmax(cb)]), tuple(beaten[np.argmin(cb)])
    c_hi, c_lo = float(c[src]), float(c[dst])
    if not c_lo > 0:
        raise ValidationError("numerator-fixed move needs positive pseudotypes")
    v = np.zeros(g.shape)
    v[src] -= 1.0
    v[dst] += c_hi / c_lo
    extra = c_hi / c_lo - 1.0
    for cell in stronger:
        v[tuple(cell)] -= extra / len(stronger)
    return PerturbationDirection(v / g.cell_area, g.cell_area)


@dataclass
class Witness:
    label: str
    realizations: list
    bids: list
    differ: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {"label": self.label, "realizations": self.realizations,
                "bids": [[c.p, c.q] for c in self.bids], "bids_differ": self.differ,
                "note": self.note}


@dataclass
class TierReport:
    rule: str
    eta: float
    type: SellerType
    k0: Optional[Witness]
    k1: list
    k2: Optional[CBEReport]
    refused: bool = False

    @property
    def passed(self) -> bool:
        return (not self.refused and self.k0 is not None and self.k0.differ
                and len(self.k1) > 0 and all(w.differ for w in self.k1)
                and self.k2 is not None and self.k2.passed)

    def to_dict(self) -> dict:
        return {"rule": self.rule, "eta": self.eta, "type": [self.type.m, self.type.f],
                "refused": self.refused,
                "k0": self.k0.to_dict() if self.k0 else None,
                "k1": [w.to_dict() for w in self.k1],
                "k2": self.k2.to_dict() if self.k2 else None,
                "verdict": "pass" if self.passed else ("refused" if self.refused else "fail")}


def _perturbed(g, v, share=0.5):
    return perturb(g, v, share * max_admissible_eps(g, v))


def information_technology_tiers(rule: ScoringRule, eta: float, params: Optional[CostParams] = None,
                                 n: int = 20, t: Optional[SellerType] = None,
                                 tol: float = 1e-6) -> TierReport:
    """Witnesses that zero or one moment cannot support the bid while two can.

    k=0: two distributions on shifted fixed-cost bands give different bids,
    so no belief-free bid is optimal at both. k=1: two distributions with the
    same denominator moment (or the same numerator moment) give different
    bids. k=2: ``verify_cbe`` passes on a family that includes a within-class
    perturbation.
    """
    params = CostParams(eta, 1.0, 2.0, 0.1, 0.5) if params is None else params
    t = SellerType(0.5 * (params.m_lo + params.m_hi),
                   params.f_lo + 0.4 * (params.f_hi - params.f_lo)) if t is None else t
    if not admits(rule, params):
        return TierReport(rule.label(), eta, t, None, [], None, refused=True)
    g = uniform(params, n, n)
    df = params.f_hi - params.f_lo
    bands = []
    for lo_frac in (0.0, 0.4):
        spec = {"kind": "mixture", "components": [
            {"rect": [params.m_lo, params.m_hi, params.f_lo, params.f_hi], "weight": 0.1},
            {"rect": [params.m_lo, params.m_hi, params.f_lo + lo_frac * df,
                      params.f_lo + (lo_frac + 0.6) * df], "weight": 0.9}]}
        bands.append(make_distribution(spec, params, n, n))

    def witness(label, dists, note=""):
        sigs = [acquire(rule, t, d, eta) for d in dists]
        bids = [common_prior_bid(rule, t, d, eta) for d in dists]
        return Witness(label, [list(s.realizations) for s in sigs], bids,
                       _gap(bids[0], bids[1]) > tol, note)

    k0 = witness("shifted fixed-cost bands", bands, "no moment learned; one bid cannot fit both")
    g_den = _perturbed(g, denominator_fixed_direction(rule, g, t, eta))
    g_num = _perturbed(g, numerator_fixed_direction(rule, g, t, eta))
    k1 = [witness("denominator held fixed", [g, g_den]),
          witness("numerator held fixed", [g, g_num])]
    within = within_class_direction(rule, g, eta)
    family = [g, _perturbed(g, within.direction), _perturbed(g, cross_class_direction(rule, g, t, eta)),
              bands[0]]
    from .simulator import default_probes
    probes = np.vstack([[t.m, t.f], default_probes(params, 3)])
    k2 = verify_cbe(rule, eta, family, probes=probes, tol=1e-8,
                    labels=["uniform", "within-class", "cross-class", "band"])
    return TierReport(rule.label(), eta, t, k0, k1, k2)
