"""Equilibrium solvers for the first-score auction.

Two paths are provided. For rules whose break-even effort is affine in the
fixed cost, a type's bid is the break-even contract of the expected
pseudotype of the opponent it beats (``f2``). Any rule can use the damped
best-response iteration in score space.

Pseudotypes live on a marginal-cost line ``m_ref``. A grid cell of the type
density maps to a uniform segment of pseudotypes between the images of the
cell's lower and upper fixed-cost edges. The segment is exact in ``f``. In
``m`` the cell is collapsed onto its centre column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator, RegularGridInterpolator

from .breakeven import breakeven_batch
from .classifier import admits
from .core import (Contract, Moment, PerturbationDirection, SellerType, TypeDistribution,
                   ValidationError)
from .scoring import BULK_GRID, ScoringRule, optimal_quality_batch, ubar, ubar_with_slope

MASS_TOL = 1e-9
DEGENERATE_MASS = 1e-14
SCORE_GRID = 1024
TIE_REL = 1e-9


class NotAdmitted(ValidationError):
    """The rule has no closed-path equilibrium; use the best-response solver."""


class DegenerateType(ValueError):
    """A type beats no one, so its conditional pseudotype is undefined."""


# --- one-dimensional pseudotype distributions ------------------------------

@dataclass(frozen=True, eq=False)
class Density1D:
    """Finite mixture of uniform segments ``[lo, hi]`` carrying ``mass``.

    Zero-width segments are atoms. ``nodes``/``values`` give a density view
    on a regular grid for reporting.
    """

    lo: np.ndarray
    hi: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, float).ravel()
        hi = np.asarray(self.hi, float).ravel()
        mass = np.asarray(self.mass, float).ravel()
        if not (lo.shape == hi.shape == mass.shape):
            raise ValidationError("segment arrays must have equal length")
        if np.any(hi < lo) or np.any(mass < 0) or not np.all(np.isfinite(lo + hi + mass)):
            raise ValidationError("segments need lo <= hi, finite ends and mass >= 0")
        if abs(mass.sum() - 1.0) > MASS_TOL:
            raise ValidationError(f"total mass {mass.sum()!r} is not 1")
        for name, arr in (("lo", lo), ("hi", hi), ("mass", mass)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def uniform(cls, a: float, b: float) -> "Density1D":
        return cls(np.array([a]), np.array([b]), np.array([1.0]))

    @classmethod
    def point_mass(cls, z: float) -> "Density1D":
        return cls(np.array([z]), np.array([z]), np.array([1.0]))

    @classmethod
    def from_segments(cls, lo, hi, mass) -> "Density1D":
        lo, hi, mass = (np.asarray(x, float).ravel() for x in (lo, hi, mass))
        a, b = np.minimum(lo, hi), np.maximum(lo, hi)
        return cls(a, b, mass / mass.sum())

    @property
    def support(self) -> tuple:
        live = self.mass > 0
        return float(self.lo[live].min()), float(self.hi[live].max())

    def total_mass(self) -> float:
        return float(self.mass.sum())

    def _frac_above(self, x):
        """Fraction of each segment at or above ``x``: shape ``x.shape + (S,)``."""
        x = np.asarray(x, float)[..., None]
        width = self.hi - self.lo
        atom = width <= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.clip((self.hi - x) / np.where(atom, 1.0, width), 0.0, 1.0)
        return np.where(atom, (self.lo >= x).astype(float), frac)

    def survival(self, x):
        """``P(Z >= x)``."""
        return self._frac_above(x) @ self.mass

    def cdf(self, x):
        """``P(Z < x)``."""
        return 1.0 - self.survival(x)

    def partial_above(self, x):
        """Mass and first moment of ``Z`` restricted to ``[x, inf)``."""
        x = np.asarray(x, float)
        frac = self._frac_above(x)
        mid = 0.5 * (np.maximum(self.lo, x[..., None]) + self.hi)
        w = frac * self.mass
        return w.sum(axis=-1), (w * mid).sum(axis=-1)

    def conditional_mean_above(self, x):
        """``E[Z | Z >= x]``; returns ``x`` itself where nothing lies above."""
        x = np.asarray(x, float)
        mass, first = self.partial_above(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(mass > DEGENERATE_MASS, first / np.where(mass > 0, mass, 1.0), x)
        return np.maximum(out, x)

    def pdf(self, x):
        """Density of the continuous part (atoms excluded)."""
        x = np.asarray(x, float)[..., None]
        width = self.hi - self.lo
        inside = (x >= self.lo) & (x < self.hi) & (width > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            dens = np.where(inside, self.mass / np.where(width > 0, width, 1.0), 0.0)
        return dens.sum(axis=-1)

    def atoms(self) -> list:
        at = (self.hi - self.lo) <= 0
        return [(float(z), float(w)) for z, w in zip(self.lo[at], self.mass[at]) if w > 0]

    def mean(self) -> float:
        return float(np.sum(self.mass * 0.5 * (self.lo + self.hi)))

    def histogram(self, nodes) -> np.ndarray:
        """Mass per node by linear splitting between adjacent nodes.

        Segments are split at their centroid, which keeps mass and mean.
        """
        nodes = np.asarray(nodes, float)
        c = 0.5 * (self.lo + self.hi)
        out = np.zeros(nodes.size)
        k = np.clip(np.searchsorted(nodes, c) - 1, 0, nodes.size - 2)
        w = np.clip((c - nodes[k]) / (nodes[k + 1] - nodes[k]), 0.0, 1.0)
        np.add.at(out, k, self.mass * (1.0 - w))
        np.add.at(out, k + 1, self.mass * w)
        return out

    @property
    def nodes(self) -> np.ndarray:
        a, b = self.support
        return np.linspace(a, b, 201) if b > a else np.array([a])

    @property
    def values(self) -> np.ndarray:
        return self.pdf(self.nodes)


def _elementary(gm: Density1D):
    """Breakpoints, atom mass at each, and continuous mass on each gap."""
    pts = np.unique(np.concatenate([gm.lo, gm.hi]))
    width = gm.hi - gm.lo
    cont = width > 0
    slope = np.zeros(pts.size)
    np.add.at(slope, np.searchsorted(pts, gm.lo[cont]), gm.mass[cont] / width[cont])
    np.add.at(slope, np.searchsorted(pts, gm.hi[cont]), -gm.mass[cont] / width[cont])
    gap_mass = np.cumsum(slope)[:-1] * np.diff(pts)
    atom = np.zeros(pts.size)
    np.add.at(atom, np.searchsorted(pts, gm.lo[~cont]), gm.mass[~cont])
    return pts, atom, np.maximum(gap_mass, 0.0)


class LineProfile:
    """Exact ``f2`` on one line and its inverse, from a segment mixture.

    Between breakpoints the mass above ``x`` is linear in ``x`` and the first
    moment above ``x`` is quadratic, so ``f2(x) = z`` is a quadratic equation.
    """

    def __init__(self, gm: Density1D):
        pts, atom, gap = _elementary(gm)
        width = np.diff(pts)
        self.pts = pts
        with np.errstate(divide="ignore", invalid="ignore"):
            self.dens = np.where(width > 0, gap / width, 0.0)
        mid = 0.5 * (pts[:-1] + pts[1:])
        tail_m = np.concatenate([np.cumsum(gap[::-1])[::-1], [0.0]])
        tail_f = np.concatenate([np.cumsum((gap * mid)[::-1])[::-1], [0.0]])
        self.s_ge = np.cumsum(atom[::-1])[::-1] + tail_m
        self.f1_ge = np.cumsum((atom * pts)[::-1])[::-1] + tail_f
        # exclude the atom at the breakpoint itself for the value just above it
        self.s_gt = self.s_ge - atom
        self.f1_gt = self.f1_ge - atom * pts
        with np.errstate(divide="ignore", invalid="ignore"):
            self.f2_pts = np.where(self.s_ge > DEGENERATE_MASS, self.f1_ge / self.s_ge, pts)
        self.f2_pts = np.maximum.accumulate(np.maximum(self.f2_pts, pts))

    def _piece(self, x):
        k = np.clip(np.searchsorted(self.pts, x, side="right") - 1, 0, self.pts.size - 2)
        return k

    def value(self, x):
        """``E[Z | Z >= x]`` together with ``P(Z >= x)`` and the density at ``x``."""
        x = np.asarray(x, float)
        k = self._piece(x)
        b = self.pts[k + 1]
        d = self.dens[k]
        inside = (x >= self.pts[0]) & (x < self.pts[-1])
        sv = np.where(inside, self.s_ge[k + 1] + d * (b - x), np.where(x < self.pts[0], 1.0, 0.0))
        f1 = np.where(inside, self.f1_ge[k + 1] + 0.5 * d * (b * b - x * x), 0.0)
        f1 = np.where(x < self.pts[0], self.f1_ge[0], f1)
        with np.errstate(divide="ignore", invalid="ignore"):
            f2 = np.where(sv > DEGENERATE_MASS, f1 / sv, x)
        return np.maximum(f2, x), sv, np.where(inside, d, 0.0)

    def inverse(self, z):
        """``x`` with ``f2(x) = z``; ``nan`` outside ``[f2(min), max]``."""
        z = np.asarray(z, float)
        k = np.clip(np.searchsorted(self.f2_pts, z, side="right") - 1, 0, self.pts.size - 2)
        a, b = self.pts[k], self.pts[k + 1]
        d = self.dens[k]
        big_a, big_b = self.f1_ge[k + 1], self.s_ge[k + 1]
        # (d/2) x^2 - z d x - C = 0 with C = A + d b^2/2 - z B - z d b
        c = big_a + 0.5 * d * b * b - z * big_b - z * d * b
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = np.sqrt(np.maximum(z * z + 2.0 * c / np.where(d > 0, d, 1.0), 0.0))
            r1, r2 = z - disc, z + disc
            x = np.where((r1 >= a - 1e-12) & (r1 <= b + 1e-12), r1, r2)
            # a flat piece (no density) keeps f2 constant: take its lower end
            x = np.where(d > 0, x, a)
        x = np.clip(x, a, b)
        out = (z < self.f2_pts[0]) | (z > self.pts[-1])
        return np.where(out, np.nan, x)

    def slope(self, x):
        """``d f2 / dx = p(x) (f2(x) - x) / P(Z >= x)``."""
        f2v, sv, d = self.value(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(sv > DEGENERATE_MASS, d * (f2v - x) / sv, 0.5)


def nplayer_pushforward(gm: Density1D, n_players: int, refine: int = 64) -> Density1D:
    """Distribution of the smallest of ``n_players - 1`` independent draws from ``gm``.

    Probabilities are exact on every elementary interval, each split into
    ``refine`` pieces that are then treated as uniform. Atoms stay atoms.
    """
    if n_players < 2:
        raise ValidationError("need at least 2 players")
    if n_players == 2:
        return gm
    k = n_players - 1
    pts, atom, gap = _elementary(gm)
    # survival P(Z >= x) at breakpoints, and just above them
    tail_gap = np.concatenate([np.cumsum(gap[::-1])[::-1], [0.0]])
    s_ge = np.cumsum(atom[::-1])[::-1] + tail_gap
    s_gt = s_ge - atom
    t = np.linspace(0.0, 1.0, refine + 1)
    x = pts[:-1, None] + np.diff(pts)[:, None] * t[None, :]
    surv = s_gt[:-1, None] + (s_ge[1:] - s_gt[:-1])[:, None] * t[None, :]
    piece_p = surv[:, :-1] ** k - surv[:, 1:] ** k
    lo = np.concatenate([pts, x[:, :-1].ravel()])
    hi = np.concatenate([pts, x[:, 1:].ravel()])
    prob = np.concatenate([s_ge ** k - s_gt ** k, piece_p.ravel()])
    keep = prob > 0
    return Density1D.from_segments(lo[keep], hi[keep], prob[keep])


@dataclass(frozen=True, eq=False)
class BidFunction:
    """Symmetric first-price bid ``b(f) = E[Z | Z >= f]`` on a node grid."""

    gm: Density1D
    nodes: np.ndarray
    bids: np.ndarray

    def __call__(self, f):
        return self.gm.conditional_mean_above(f)

    def ode_residual(self) -> np.ndarray:
        """``S(f) b'(f) - p(f) (b(f) - f)`` on interior nodes, with ``S = P(Z >= f)``.

        ``b'`` uses central differences on the node grid.
        """
        f, b = self.nodes, self.bids
        db = (b[2:] - b[:-2]) / (f[2:] - f[:-2])
        fc = f[1:-1]
        return self.gm.survival(fc) * db - self.gm.pdf(fc) * (b[1:-1] - fc)


def solve_1d_first_price(gm: Density1D, nodes=None) -> BidFunction:
    """Equilibrium of the one-dimensional procurement first-price auction.

    The bidder with the lower cost ``f`` wins. The bid is the expected cost
    of the opponent, conditional on that opponent losing.
    """
    if nodes is None:
        a, b = gm.support
        nodes = np.linspace(a, b, 401) if b > a else np.array([a])
    nodes = np.asarray(nodes, float)
    return BidFunction(gm, nodes, gm.conditional_mean_above(nodes))


# --- pushforward of the type density ---------------------------------------

def edge_scores(rule: ScoringRule, g: TypeDistribution, eta: float,
                n_grid: int = BULK_GRID) -> np.ndarray:
    """Break-even scores at each column centre and fixed-cost cell edge: ``(n_m, n_f + 1)``."""
    mm, ee = np.meshgrid(g.m_nodes, g.f_edges, indexing="ij")
    return breakeven_batch(rule, mm, ee, eta, n_grid=n_grid)[1]


def line_segments(rule: ScoringRule, g: TypeDistribution, m_ref: float, eta: float,
                  s_edges: Optional[np.ndarray] = None, n_grid: int = BULK_GRID):
    """Pseudotype segments of every cell on line ``m_ref``.

    Returns ``(lo, hi, mass, e_lo, e_hi)`` arrays of shape ``(n_m, n_f)``:
    segment ends and the fulfilment efforts at those ends.
    """
    if s_edges is None:
        s_edges = edge_scores(rule, g, eta, n_grid)
    q, rho = optimal_quality_batch(rule, s_edges, m_ref, eta, n_grid=n_grid)
    if not np.all(np.isfinite(rho)):
        raise ValidationError("a break-even score is unattainable on the reference line")
    e = q ** eta
    # rho falls as f rises (weaker types), so the upper f edge gives the lower end
    a, b = rho[:, 1:], rho[:, :-1]
    ea, eb = e[:, 1:], e[:, :-1]
    swap = a > b
    lo, hi = np.where(swap, b, a), np.where(swap, a, b)
    e_lo, e_hi = np.where(swap, eb, ea), np.where(swap, ea, eb)
    return lo, hi, g.cell_mass(), e_lo, e_hi


def pushforward_density(rule: ScoringRule, g: TypeDistribution, m_ref: float, eta: float,
                        s_edges: Optional[np.ndarray] = None) -> Density1D:
    lo, hi, mass, _, _ = line_segments(rule, g, m_ref, eta, s_edges)
    return Density1D.from_segments(lo, hi, mass)


def _check_admits(rule: ScoringRule, g: TypeDistribution):
    if not admits(rule, g.params):
        raise NotAdmitted(
            f"{rule.label()} does not admit a closed-path equilibrium at eta={g.params.eta}; "
            "use the best-response solver"
        )


def f2_detail(rule: ScoringRule, g: TypeDistribution, t: SellerType, eta: float,
              n_players: int = 2) -> tuple:
    """``(f2, degenerate)`` for type ``t``."""
    gm = pushforward_density(rule, g, t.m, eta)
    if n_players > 2:
        gm = nplayer_pushforward(gm, n_players)
    mass, first = gm.partial_above(np.array(t.f))
    if mass <= DEGENERATE_MASS:
        return float(t.f), True
    return max(float(first / mass), t.f), False


def f2(rule: ScoringRule, g: TypeDistribution, t: SellerType, eta: float,
       n_players: int = 2, check: bool = True) -> float:
    """Expected pseudotype of the opponent that ``t`` beats, on ``t``'s own line."""
    if check:
        _check_admits(rule, g)
    return f2_detail(rule, g, t, eta, n_players)[0]


# --- strategies ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EquilibriumStrategy:
    """A strategy profile on a tensor grid of types.

    ``p``, ``q`` and ``score`` have shape ``(len(m_nodes), len(f_nodes))``.
    ``resolution`` is the score accuracy the solver can vouch for.
    """

    rule: ScoringRule
    eta: float
    m_nodes: np.ndarray
    f_nodes: np.ndarray
    p: np.ndarray
    q: np.ndarray
    score: np.ndarray
    be_score: np.ndarray
    mode: str
    converged: bool = True
    iterations: int = 0
    resolution: float = 1e-9
    f2: Optional[np.ndarray] = None
    edge_score: Optional[np.ndarray] = None
    lines: Optional[list] = None
    moment_form: Optional[dict] = None
    history: list = field(default_factory=list)
    br_residual: Optional[float] = None

    def __post_init__(self):
        for arr in (self.m_nodes, self.f_nodes, self.p, self.q, self.score, self.be_score):
            arr.setflags(write=False)

    @property
    def shape(self) -> tuple:
        return self.score.shape

    def contract(self, i: int, j: int) -> Contract:
        return Contract(float(self.p[i, j]), float(self.q[i, j]))

    def score_at(self, m, f):
        """Bilinear interpolation of equilibrium scores, extrapolating at the edges."""
        interp = RegularGridInterpolator((self.m_nodes, self.f_nodes), self.score,
                                         bounds_error=False, fill_value=None)
        m, f = np.broadcast_arrays(np.asarray(m, float), np.asarray(f, float))
        return interp(np.stack([m.ravel(), f.ravel()], axis=-1)).reshape(m.shape)

    def contract_at(self, m, f):
        """Interpolated score, then the profit-maximizing contract at that score.

        Returns ``(p, q, score)`` arrays.
        """
        s = self.score_at(m, f)
        m = np.broadcast_to(np.asarray(m, float), s.shape)
        q, _ = optimal_quality_batch(self.rule, s, m, self.eta, n_grid=BULK_GRID)
        p = self.rule.price(s, q)
        return p, q, s

    def rows(self) -> list:
        out = []
        for i, m in enumerate(self.m_nodes):
            for j, f in enumerate(self.f_nodes):
                out.append((float(m), float(f), float(self.p[i, j]), float(self.q[i, j]),
                            float(self.score[i, j])))
        return out

    def report(self) -> dict:
        return {"mode": self.mode, "converged": self.converged, "iterations": self.iterations,
                "grid": [int(self.m_nodes.size), int(self.f_nodes.size)],
                "rule": self.rule.to_dict(), "eta": self.eta,
                "br_residual": self.br_residual}


def _grid_of(g: TypeDistribution, type_grid):
    if type_grid is None:
        return g.m_nodes, g.f_nodes
    m_nodes, f_nodes = (np.asarray(x, float) for x in type_grid)
    return m_nodes, f_nodes


def solve_invariant(rule: ScoringRule, g: TypeDistribution, eta: Optional[float] = None,
                    type_grid=None, n_players: int = 2, check: bool = True) -> EquilibriumStrategy:
    """Closed-path equilibrium: each type bids the break-even contract of ``(m, f2)``."""
    eta = g.params.eta if eta is None else eta
    if check:
        _check_admits(rule, g)
    m_nodes, f_nodes = _grid_of(g, type_grid)
    f_edges = np.linspace(g.params.f_lo, g.params.f_hi, f_nodes.size + 1)
    on_cells = type_grid is None
    s_edges = edge_scores(rule, g, eta)
    z = np.empty((m_nodes.size, f_nodes.size))
    z_edge = np.empty((m_nodes.size, f_edges.size))
    lines = []
    for i, m in enumerate(m_nodes):
        gm = pushforward_density(rule, g, m, eta, s_edges)
        if n_players > 2:
            gm = nplayer_pushforward(gm, n_players)
        z[i] = gm.conditional_mean_above(f_nodes)
        if on_cells:
            z_edge[i] = gm.conditional_mean_above(f_edges)
            lines.append(LineProfile(gm))
    mm, ff = np.meshgrid(m_nodes, f_nodes, indexing="ij")
    q, _ = breakeven_batch(rule, mm, z, eta)
    p = np.maximum(mm * q ** eta + z, 0.0)
    s = rule.score(p, q)
    _, s_be = breakeven_batch(rule, mm, ff, eta)
    edge = None
    if on_cells:
        # exact scores at cell edges sharpen the implied score distribution
        _, edge = breakeven_batch(rule, np.broadcast_to(m_nodes[:, None], z_edge.shape), z_edge, eta)
    form = {"numerator": "pseudotype x beaten-indicator", "denominator": "beaten-indicator",
            "combiner": "breakeven(m, numerator / denominator)"}
    return EquilibriumStrategy(rule, eta, m_nodes.copy(), f_nodes.copy(), p, q, s, s_be,
                               "invariant-closed-path", True, 0, 1e-9, z, edge,
                               lines if on_cells else None, form)


def _beaten_weights(rule: ScoringRule, t: SellerType, eta: float, g: TypeDistribution):
    """Per-cell fraction beaten by ``t`` and that fraction times the mean pseudotype."""
    lo, hi, _, _, _ = line_segments(rule, g, t.m, eta)
    width = hi - lo
    atom = width <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.clip((hi - t.f) / np.where(atom, 1.0, width), 0.0, 1.0)
    frac = np.where(atom, (lo >= t.f).astype(float), frac)
    centroid = 0.5 * (np.maximum(lo, t.f) + hi)
    return frac, frac * centroid


def two_moments_for_type(rule: ScoringRule, t: SellerType, eta: float) -> tuple:
    """Numerator and denominator moments whose ratio is ``f2`` for ``t``.

    The pointwise weights are ``rho(tau) * 1[t beats tau]`` and ``1[t beats tau]``.
    On a grid the cell averages of those weights are used.
    """
    def rho_weight(m, f):
        mm, ff = np.broadcast_arrays(np.asarray(m, float), np.asarray(f, float))
        q, s = breakeven_batch(rule, mm, ff, eta)
        rho = ubar(rule, s, t.m, eta)
        return np.where(rho >= t.f, rho, 0.0)

    def ind_weight(m, f):
        mm, ff = np.broadcast_arrays(np.asarray(m, float), np.asarray(f, float))
        _, s = breakeven_batch(rule, mm, ff, eta)
        return (ubar(rule, s, t.m, eta) >= t.f).astype(float)

    meta = {"type": (t.m, t.f), "eta": eta, "rule": rule.to_dict()}
    num = Moment(f"num[{t.m:g},{t.f:g}]", weight=rho_weight,
                 cell_weights=lambda g: _beaten_weights(rule, t, eta, g)[1], meta=meta)
    den = Moment(f"den[{t.m:g},{t.f:g}]", weight=ind_weight,
                 cell_weights=lambda g: _beaten_weights(rule, t, eta, g)[0], meta=meta)
    return num, den


def strategy_from_moments(rule: ScoringRule, t: SellerType, eta: float,
                          moment_values: Sequence[float]) -> Contract:
    num, den = (float(v) for v in moment_values)
    if not den > DEGENERATE_MASS:
        raise DegenerateType(f"type {t} beats no mass (denominator {den!r})")
    z = max(num / den, t.f)
    q, _ = breakeven_batch(rule, np.array([t.m]), np.array([z]), eta)
    q = float(q[0])
    return Contract(max(t.m * q ** eta + z, 0.0), q)


# --- score distributions and best response ---------------------------------

class ScoreDistribution:
    """Distribution of an opponent's score under a profile on ``g``'s grid.

    Scores are handled through pseudotypes ``z = ubar(s, m)`` on each column.
    Every cell is a uniform segment in ``z`` between the pseudotypes of its
    two fixed-cost edges. Edge values come from ``edge_scores`` when given,
    else from monotone interpolation of the node pseudotypes along ``f``.
    ``cdf(s)`` is ``P(score < s)``, ``pdf`` its derivative.
    """

    def __init__(self, scores: np.ndarray, g: TypeDistribution, rule: ScoringRule, eta: float,
                 edge_scores: Optional[np.ndarray] = None, exact: Optional[tuple] = None):
        scores = np.asarray(scores, float)
        if scores.shape != g.shape:
            raise ValidationError("profile grid does not match the distribution")
        n_f = g.f_nodes.size
        if edge_scores is not None and np.shape(edge_scores) != (g.m_nodes.size, n_f + 1):
            raise ValidationError("edge scores must have one more column than the profile")
        self.g, self.rule, self.eta = g, rule, eta
        self.scores = scores
        edges = g.f_edges
        cell_mass = g.cell_mass()
        self._cols = []
        if exact is not None:
            lines = exact
            for i in range(g.m_nodes.size):
                above = np.concatenate([np.cumsum(cell_mass[i][::-1])[::-1], [0.0]])
                self._cols.append(_LineColumn(rule, eta, float(g.m_nodes[i]), lines[i], edges,
                                              above, g.density[i] * g.dm))
        else:
            mm, _ = g.mesh()
            z_nodes = ubar(rule, scores, mm, eta, n_grid=BULK_GRID)
            if edge_scores is not None:
                me = np.broadcast_to(g.m_nodes[:, None], np.shape(edge_scores))
                z_edges = ubar(rule, np.asarray(edge_scores, float), me, eta, n_grid=BULK_GRID)
            else:
                z_edges = _edge_values(g.f_nodes, edges, z_nodes)
            for i in range(g.m_nodes.size):
                self._cols.append(_SegmentColumn(z_edges[i], cell_mass[i]))
        self.nodes = np.linspace(scores.min(), scores.max(), SCORE_GRID)

    def cdf(self, s):
        return self.cdf_pdf(s)[0]

    def pdf(self, s):
        return self.cdf_pdf(s)[1]

    def cdf_pdf(self, s):
        s = np.asarray(s, float)
        big, small = np.zeros(s.shape), np.zeros(s.shape)
        for i, c in enumerate(self._cols):
            if isinstance(c, _LineColumn):
                b, d = c.below_density(s)
            else:
                z, z_s = ubar_with_slope(self.rule, s, self.g.m_nodes[i], self.eta,
                                         n_grid=BULK_GRID)
                b, d = c.above_density(z)
                d = d * np.abs(z_s)
            big += b
            small += np.nan_to_num(d)
        return np.clip(big, 0.0, 1.0), small

    def cdf_from_pseudotypes(self, z_table: np.ndarray) -> np.ndarray:
        """``cdf`` at scores whose pseudotypes on column ``i`` are ``z_table[i]``."""
        if any(isinstance(c, _LineColumn) for c in self._cols):
            raise ValidationError("pseudotype tables apply to segment columns only")
        out = np.zeros(np.shape(z_table)[1:])
        for i, c in enumerate(self._cols):
            out += c.above_density(z_table[i], need_density=False)[0]
        return np.clip(out, 0.0, 1.0)

    @property
    def values(self) -> np.ndarray:
        return self.cdf(self.nodes)


def _edge_values(f_nodes, f_edges, z_nodes):
    """Pseudotypes at cell edges by monotone cubic interpolation along ``f``."""
    out = np.empty((z_nodes.shape[0], f_edges.size))
    for i, z in enumerate(z_nodes):
        if f_nodes.size >= 3 and np.all(np.diff(z) > 0):
            ze = PchipInterpolator(f_nodes, z, extrapolate=True)(f_edges)
            ze = np.maximum.accumulate(ze)
        else:
            ze = np.interp(f_edges, f_nodes, z)
            if f_nodes.size >= 2:
                # linear extrapolation at both ends
                ze[0] = z[0] - (z[1] - z[0]) * (f_nodes[0] - f_edges[0]) / (f_nodes[1] - f_nodes[0])
                ze[-1] = z[-1] + (z[-1] - z[-2]) * (f_edges[-1] - f_nodes[-1]) / (f_nodes[-1] - f_nodes[-2])
        out[i] = ze
    return out


class _LineColumn:
    """Column whose profile is ``s_BE(m, f2(f))`` with ``f2`` known exactly."""

    def __init__(self, rule, eta, m, line: "LineProfile", edges, above, lin_density):
        self.rule, self.eta, self.m, self.line = rule, eta, m, line
        self.edges, self.above, self.lin_density = edges, above, lin_density

    def below_density(self, s):
        z, z_s = ubar_with_slope(self.rule, s, self.m, self.eta, n_grid=BULK_GRID)
        x = self.line.inverse(np.where(np.isfinite(z), z, -np.inf))
        x = np.where(np.isnan(x), np.where(z < self.line.f2_pts[0], -np.inf, np.inf), x)
        below = np.interp(x, self.edges, self.above)
        inside = (x > self.edges[0]) & (x < self.edges[-1])
        xc = np.where(inside, x, self.edges[0])
        k = np.clip(np.searchsorted(self.edges, xc, side="right") - 1, 0, self.lin_density.size - 1)
        slope = self.line.slope(xc)
        with np.errstate(divide="ignore", invalid="ignore"):
            dens = np.where(inside & (slope > 0), self.lin_density[k] * np.abs(z_s) / slope, 0.0)
        return below, dens


class _SegmentColumn:
    """Cells uniform in pseudotype between their edge values.

    A lower score means a higher pseudotype, so the column mass scoring
    below ``s`` is its mass with pseudotype above ``ubar(s, m)``.
    """

    def __init__(self, z_edges, cell_mass):
        self.z_edges = np.asarray(z_edges, float)
        self.mass = np.asarray(cell_mass, float)
        self.above = np.concatenate([np.cumsum(self.mass[::-1])[::-1], [0.0]])
        self.monotone = bool(np.all(np.diff(self.z_edges) > 0))
        self.lo = np.minimum(self.z_edges[:-1], self.z_edges[1:])
        self.hi = np.maximum(self.z_edges[:-1], self.z_edges[1:])

    def above_density(self, z, need_density: bool = True):
        """Mass with pseudotype above ``z`` and its density in ``z``."""
        z = np.asarray(z, float)
        z = np.where(np.isnan(z), -np.inf, z)
        if self.monotone:
            mass = np.interp(z, self.z_edges, self.above)
            if not need_density:
                return mass, None
            k = np.clip(np.searchsorted(self.z_edges, z, side="right") - 1, 0, self.mass.size - 1)
            inside = (z > self.z_edges[0]) & (z < self.z_edges[-1])
            dens = np.where(inside, self.mass[k] / (self.hi[k] - self.lo[k]), 0.0)
            return mass, dens
        z_ = z[..., None]
        width = self.hi - self.lo
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(width > 0, np.clip((self.hi - z_) / width, 0.0, 1.0),
                            np.where(z_ < self.lo, 1.0, 0.0))
            mass = (frac * self.mass).sum(axis=-1)
            if not need_density:
                return mass, None
            dens = np.where((width > 0) & (z_ > self.lo) & (z_ < self.hi),
                            self.mass / width, 0.0).sum(axis=-1)
        return mass, dens


def score_distribution(strategy: EquilibriumStrategy, g: TypeDistribution) -> ScoreDistribution:
    """Opponent score distribution implied by ``strategy`` when types follow ``g``."""
    if (strategy.shape == g.shape and np.allclose(strategy.m_nodes, g.m_nodes)
            and np.allclose(strategy.f_nodes, g.f_nodes)):
        return ScoreDistribution(strategy.score, g, strategy.rule, strategy.eta,
                                 strategy.edge_score, strategy.lines)
    mm, ff = g.mesh()
    return ScoreDistribution(strategy.score_at(mm, ff), g, strategy.rule, strategy.eta)


def _profile_contracts(rule, scores, mm, eta):
    q, _ = optimal_quality_batch(rule, scores, mm, eta, n_grid=BULK_GRID)
    p = np.maximum(rule.price(scores, q), 0.0)
    return p, q


def solve_best_response(rule: ScoringRule, g: TypeDistribution, eta: Optional[float] = None,
                        type_grid=None, damping: float = 0.05, max_iter: int = 500,
                        tol: float = 1e-4, n_scores: int = SCORE_GRID,
                        n_players: int = 2, init: Optional[np.ndarray] = None,
                        decay: Optional[float] = 100.0) -> EquilibriumStrategy:
    """Damped best-response iteration in score space.

    Each type picks the score maximizing ``H(s)**(N-1) * (ubar(s, m) - f)``.
    Scores range from the lowest break-even score up to the type's own
    break-even score. The lowest near-optimal score wins ties. A type with no
    positive payoff bids break-even.
    """
    eta = g.params.eta if eta is None else eta
    if not 0.0 < damping <= 1.0:
        raise ValidationError(f"damping must lie in (0, 1], got {damping}")
    if decay is not None and decay <= 0:
        raise ValidationError(f"decay must be positive, got {decay}")
    if type_grid is not None:
        m_nodes, f_nodes = _grid_of(g, type_grid)
        if m_nodes.shape != g.m_nodes.shape or not np.allclose(m_nodes, g.m_nodes) \
                or not np.allclose(f_nodes, g.f_nodes):
            raise ValidationError("best response runs on the distribution's own grid")
    if min(g.shape) < 10:
        raise ValidationError(f"best response needs at least a 10x10 grid, got {g.shape}")
    mm, ff = g.mesh()
    _, s_be = breakeven_batch(rule, mm, ff, eta, n_grid=BULK_GRID)
    s_lo, s_hi = float(s_be.min()), float(s_be.max())
    margin = 1e-9 * max(1.0, abs(s_lo))
    grid = np.linspace(s_lo - margin, s_hi, n_scores)
    step = grid[1] - grid[0]
    u_tab = ubar(rule, grid[None, :], g.m_nodes[:, None], eta, n_grid=BULK_GRID)
    net = u_tab[:, None, :] - g.f_nodes[None, :, None]
    allowed = grid[None, None, :] <= s_be[..., None] + 1e-12
    net = np.where(allowed, net, -np.inf)

    s = s_be.copy() if init is None else np.array(init, float)
    best_s, best_change = s.copy(), np.inf
    history = []
    converged = False
    it = 0

    def best_reply(s):
        sd = ScoreDistribution(s, g, rule, eta)
        win = sd.cdf_from_pseudotypes(u_tab) ** (n_players - 1)
        pay = win[None, None, :] * net
        top = pay.max(axis=-1)
        # ties are relative to each type's own payoff scale
        eps = TIE_REL * np.abs(top) + 1e-300
        k = np.argmax(pay >= (top - eps)[..., None], axis=-1)
        br = grid[k]
        # parabolic refinement between neighbouring grid scores
        inner = (k > 0) & (k < n_scores - 1)
        kc = np.clip(k, 1, n_scores - 2)
        y0 = np.take_along_axis(pay, (kc - 1)[..., None], -1)[..., 0]
        y1 = np.take_along_axis(pay, kc[..., None], -1)[..., 0]
        y2 = np.take_along_axis(pay, (kc + 1)[..., None], -1)[..., 0]
        with np.errstate(invalid="ignore", divide="ignore"):
            den = y0 - 2.0 * y1 + y2
            shift = np.where(np.isfinite(den) & (den < 0), 0.5 * (y0 - y2) / den, 0.0)
        shift = np.clip(np.nan_to_num(shift), -0.5, 0.5)
        br = np.where(inner & np.isfinite(y0 + y2), br + shift * step, br)
        br = np.minimum(br, s_be)
        br = np.where(top > 1e-14, br, s_be)
        return br

    for it in range(1, max_iter + 1):
        move = best_reply(s) - s
        frac = damping if decay is None else damping * decay / (decay + it - 1)
        new = s + frac * move
        change = float(np.max(np.abs(new - s)))
        history.append(change)
        s = new
        if change < best_change:
            best_change, best_s = change, s.copy()
        if change < tol:
            converged = True
            break
    if not converged:
        s = best_s
    s = np.minimum(s, s_be)
    residual = float(np.max(np.abs(best_reply(s) - s)))
    p, q = _profile_contracts(rule, s, mm, eta)
    s_out = rule.score(p, q)
    s_out = np.where(np.isfinite(s_out), s_out, s)
    return EquilibriumStrategy(rule, eta, g.m_nodes.copy(), g.f_nodes.copy(), p, q,
                               np.minimum(s_out, s_be + 1e-12), s_be,
                               "best-response-fixed-point", converged, it, step,
                               history=history, br_residual=residual)


def breakeven_profile(rule: ScoringRule, g: TypeDistribution,
                      eta: Optional[float] = None) -> EquilibriumStrategy:
    """Everyone bids break-even (the second-score play, not a first-score equilibrium)."""
    eta = g.params.eta if eta is None else eta
    mm, ff = g.mesh()
    q, s = breakeven_batch(rule, mm, ff, eta)
    p = np.maximum(mm * q ** eta + ff, 0.0)
    return EquilibriumStrategy(rule, eta, g.m_nodes.copy(), g.f_nodes.copy(), p, q,
                               rule.score(p, q), s, "breakeven", True, 0)


@dataclass(frozen=True)
class FOCResidual:
    values: np.ndarray
    interior: np.ndarray

    @property
    def max_interior(self) -> float:
        v = np.abs(self.values[self.interior])
        v = v[np.isfinite(v)]
        return float(v.max()) if v.size else 0.0


def foc_residual(rule: ScoringRule, strategy: EquilibriumStrategy, g: TypeDistribution,
                 eta: Optional[float] = None, ds: float = 1e-5) -> FOCResidual:
    """``(H u_s + h u) / (h |u| + H |u_s|)`` at every node, ``u = ubar(s, m) - f``.

    Nodes on the outer ring of the grid are boundary nodes and excluded from
    the interior mask.
    """
    eta = strategy.eta if eta is None else eta
    sd = score_distribution(strategy, g)
    s = strategy.score
    mm, ff = np.meshgrid(strategy.m_nodes, strategy.f_nodes, indexing="ij")
    u = ubar(rule, s, mm, eta) - ff
    u_s = (ubar(rule, s + ds, mm, eta) - ubar(rule, s - ds, mm, eta)) / (2.0 * ds)
    big_h, small_h = sd.cdf_pdf(s)
    num = big_h * u_s + small_h * u
    den = small_h * np.abs(u) + big_h * np.abs(u_s)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, num / den, 0.0)
    interior = np.zeros(r.shape, bool)
    interior[1:-1, 1:-1] = True
    return FOCResidual(r, interior)


# --- perturbation directions -----------------------------------------------

@dataclass(frozen=True, eq=False)
class WithinClassMove:
    """A mass transfer between two fixed-cost runs that share their pseudotype range.

    ``runs`` holds ``(column, first_cell, stop_cell)`` for the receiving and
    the giving run. ``max_cdf_change`` is the largest change of any line's
    pseudotype CDF per unit ``eps`` (zero up to rounding).
    """

    direction: PerturbationDirection
    runs: tuple
    max_cdf_change: float


def _signed_cdf_change(rho_edges: np.ndarray, weights: np.ndarray, cells: list) -> float:
    """Largest ``|sum_k w_k F_k(x)|`` over the segment ends, ``F_k`` uniform on cell ``k``."""
    lo = np.array([min(rho_edges[i, j], rho_edges[i, j + 1]) for i, j in cells])
    hi = np.array([max(rho_edges[i, j], rho_edges[i, j + 1]) for i, j in cells])
    w = np.array([weights[c] for c in cells])
    x = np.unique(np.concatenate([lo, hi]))
    width = np.where(hi > lo, hi - lo, 1.0)
    frac = np.clip((x[:, None] - lo[None, :]) / width[None, :], 0.0, 1.0)
    frac = np.where((hi > lo)[None, :], frac, (x[:, None] >= lo[None, :]).astype(float))
    return float(np.max(np.abs(frac @ w)))


def within_class_direction(rule: ScoringRule, g: TypeDistribution, eta: Optional[float] = None,
                           match_tol: float = 1e-9, check_tol: float = 1e-9,
                           min_cells: int = 2) -> WithinClassMove:
    """Find two fixed-cost runs on different columns covering the same class range.

    Mass is added on one run and removed from the other, each cell weighted
    by its pseudotype segment length, so the pushforward onto every column
    line is unchanged. Every line is checked; a candidate that changes any
    line's CDF by more than ``check_tol`` is skipped.
    """
    eta = g.params.eta if eta is None else eta
    s_edges = edge_scores(rule, g, eta)
    lines = [optimal_quality_batch(rule, s_edges, m, eta, n_grid=BULK_GRID)[1] for m in g.m_nodes]
    ref = lines[0]
    scale = max(1.0, float(np.nanmax(np.abs(ref))))
    n_m, n_e = s_edges.shape
    best = None
    for a in range(n_m):
        for b in range(a + 1, n_m):
            d = np.abs(ref[a][:, None] - ref[b][None, :])
            hits = np.argwhere(d <= match_tol * scale)
            if len(hits) < 2:
                continue
            for x in range(len(hits)):
                for y in range(x + 1, len(hits)):
                    (k1, l1), (k2, l2) = hits[x], hits[y]
                    ka, kb = sorted((k1, k2))
                    la, lb = sorted((l1, l2))
                    if kb - ka < min_cells or lb - la < min_cells:
                        continue
                    size = (kb - ka) + (lb - la)
                    if best is None or size > best[0]:
                        best_cand = (size, a, ka, kb, b, la, lb)
                        if _candidate_ok(best_cand, lines, check_tol, g) is not None:
                            best = best_cand
    if best is None:
        raise ValidationError("no pair of fixed-cost runs shares a class range on this grid")
    _, a, ka, kb, b, la, lb = best
    weights, cells, worst = _candidate_ok(best, lines, check_tol, g)
    v = weights / g.cell_area
    v = v / np.max(np.abs(v))
    return WithinClassMove(PerturbationDirection(v, g.cell_area),
                           ((a, int(ka), int(kb)), (b, int(la), int(lb))), worst)


def _candidate_ok(cand, lines, check_tol, g):
    _, a, ka, kb, b, la, lb = cand
    ref = lines[0]
    weights = np.zeros(g.shape)
    for j in range(ka, kb):
        weights[a, j] = abs(ref[a, j] - ref[a, j + 1])
    for j in range(la, lb):
        weights[b, j] = -abs(ref[b, j] - ref[b, j + 1])
    total = weights[weights > 0].sum()
    if not total > 0 or abs(weights.sum()) > check_tol * total:
        return None
    weights /= total
    cells = [(a, j) for j in range(ka, kb)] + [(b, j) for j in range(la, lb)]
    worst = max(_signed_cdf_change(rho, weights, cells) for rho in lines)
    if not np.isfinite(worst) or worst > check_tol:
        return None
    return weights, cells, worst


def cross_class_direction(rule: ScoringRule, g: TypeDistribution, t: SellerType,
                          eta: Optional[float] = None) -> PerturbationDirection:
    """Move mass from types stronger than ``t`` onto the closest competitor ``t`` beats.

    The receiving cell is the fully beaten cell with the lowest mean
    pseudotype, so the conditional mean ``f2(t)`` falls.
    """
    eta = g.params.eta if eta is None else eta
    lo, hi, _, _, _ = line_segments(rule, g, t.m, eta)
    src = [tuple(c) for c in np.argwhere(hi <= t.f)]
    beaten = np.argwhere(lo >= t.f)
    if not src or not len(beaten):
        raise ValidationError(f"type {t} has no stronger or no fully beaten cells")
    centroid = 0.5 * (lo + hi)
    dst = tuple(beaten[np.argmin(centroid[tuple(beaten.T)])])
    current = f2(rule, g, t, eta, check=False)
    if not centroid[dst] < current:
        raise ValidationError(f"no beaten cell lies below f2={current:.6g} for type {t}")
    return PerturbationDirection.transfer(g, src, [dst])
