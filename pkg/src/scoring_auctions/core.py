"""Domain primitives: cost parameters, types, contracts, grid densities, moments."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import norm

NORMALIZATION_TOL = 1e-10


class ValidationError(ValueError):
    """An input violates a documented invariant."""


@dataclass(frozen=True)
class CostParams:
    """Cost structure ``m * q**eta + f`` on the rectangle ``[m_lo, m_hi] x [f_lo, f_hi]``."""

    eta: float
    m_lo: float
    m_hi: float
    f_lo: float
    f_hi: float

    def __post_init__(self):
        if not self.eta >= 1.0:
            raise ValidationError(f"eta must be >= 1, got {self.eta}")
        if not 0.0 < self.m_lo < self.m_hi:
            raise ValidationError(f"need 0 < m_lo < m_hi, got [{self.m_lo}, {self.m_hi}]")
        if not 0.0 < self.f_lo < self.f_hi:
            raise ValidationError(f"need 0 < f_lo < f_hi, got [{self.f_lo}, {self.f_hi}]")

    @property
    def f_ext_lo(self) -> float:
        """Lower end of the fixed-cost range used for pseudotypes."""
        return self.f_lo - self.m_hi

    @property
    def f_ext_hi(self) -> float:
        """Upper end of the fixed-cost range used for pseudotypes."""
        return self.f_hi + self.m_hi

    def contains(self, t: "SellerType", extended: bool = False) -> bool:
        f_lo, f_hi = (self.f_ext_lo, self.f_ext_hi) if extended else (self.f_lo, self.f_hi)
        return self.m_lo <= t.m <= self.m_hi and f_lo <= t.f <= f_hi

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CostParams":
        return cls(float(d["eta"]), float(d["m_lo"]), float(d["m_hi"]),
                   float(d["f_lo"]), float(d["f_hi"]))

    def to_dict(self) -> dict:
        return {"eta": self.eta, "m_lo": self.m_lo, "m_hi": self.m_hi,
                "f_lo": self.f_lo, "f_hi": self.f_hi}


@dataclass(frozen=True)
class SellerType:
    m: float
    f: float


@dataclass(frozen=True)
class Contract:
    p: float
    q: float

    def __post_init__(self):
        if self.p < 0.0 or not 0.0 <= self.q <= 1.0:
            raise ValidationError(f"contract out of range: p={self.p}, q={self.q}")


@dataclass(frozen=True, eq=False)
class TypeDistribution:
    """Piecewise-constant density on a regular cell grid over the type rectangle.

    ``m_nodes``/``f_nodes`` are cell midpoints; ``density[i, j]`` is the
    density on the cell centred at ``(m_nodes[i], f_nodes[j])``.
    """

    m_nodes: np.ndarray
    f_nodes: np.ndarray
    density: np.ndarray
    cell_area: float
    params: CostParams

    def __post_init__(self):
        d = self.density
        if d.shape != (self.m_nodes.size, self.f_nodes.size):
            raise ValidationError(f"density shape {d.shape} does not match grid")
        if not np.all(np.isfinite(d)):
            raise ValidationError("density has non-finite entries")
        bad = np.argwhere(d <= 0.0)
        if bad.size:
            i, j = bad[0]
            raise ValidationError(
                f"density must be strictly positive; cell ({i}, {j}) at "
                f"m={self.m_nodes[i]:.6g}, f={self.f_nodes[j]:.6g} has {d[i, j]!r}"
            )
        total = float(d.sum() * self.cell_area)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValidationError(f"density integrates to {total!r}, not 1")
        for arr in (self.m_nodes, self.f_nodes, self.density):
            arr.setflags(write=False)

    @property
    def dm(self) -> float:
        return (self.params.m_hi - self.params.m_lo) / self.m_nodes.size

    @property
    def df(self) -> float:
        return (self.params.f_hi - self.params.f_lo) / self.f_nodes.size

    @property
    def shape(self) -> tuple:
        return self.density.shape

    @property
    def f_edges(self) -> np.ndarray:
        return np.linspace(self.params.f_lo, self.params.f_hi, self.f_nodes.size + 1)

    @property
    def m_edges(self) -> np.ndarray:
        return np.linspace(self.params.m_lo, self.params.m_hi, self.m_nodes.size + 1)

    def mesh(self) -> tuple:
        """Node coordinates as two ``(n_m, n_f)`` arrays."""
        return np.meshgrid(self.m_nodes, self.f_nodes, indexing="ij")

    def cell_mass(self) -> np.ndarray:
        return self.density * self.cell_area

    def same_grid(self, other: "TypeDistribution") -> bool:
        return (self.params == other.params and self.shape == other.shape)

    def mix(self, other: "TypeDistribution", weight: float) -> "TypeDistribution":
        """``weight * self + (1 - weight) * other`` on the shared grid."""
        if not self.same_grid(other):
            raise ValidationError("cannot mix distributions on different grids")
        return _build(self.params, self.m_nodes.size, self.f_nodes.size,
                      weight * self.density + (1.0 - weight) * other.density, renormalize=False)


@dataclass(frozen=True, eq=False)
class PerturbationDirection:
    """Zero-integral signed grid function; ``g + eps * v`` stays a density."""

    values: np.ndarray
    cell_area: float

    def __post_init__(self):
        total = float(self.values.sum() * self.cell_area)
        if abs(total) > NORMALIZATION_TOL:
            raise ValidationError(f"perturbation direction integrates to {total!r}, not 0")
        self.values.setflags(write=False)

    @classmethod
    def transfer(cls, g: TypeDistribution, src: Sequence, dst: Sequence, mass: float = 1.0):
        """Move ``mass`` (per unit eps) uniformly from cells ``src`` to cells ``dst``."""
        v = np.zeros(g.shape)
        src = [tuple(c) for c in src]
        dst = [tuple(c) for c in dst]
        for c in src:
            v[c] -= mass / (len(src) * g.cell_area)
        for c in dst:
            v[c] += mass / (len(dst) * g.cell_area)
        return cls(v, g.cell_area)


@dataclass(frozen=True, eq=False)
class Moment:
    """A linear functional ``M(g) = sum(zeta * g * cell_area)``.

    ``weight`` is the pointwise weight ``zeta(m, f)`` (vectorized). A moment
    may instead carry explicit per-cell ``values`` or a ``cell_weights``
    callable that returns cell-averaged weights for a given grid; when
    present those take precedence over pointwise midpoint evaluation.
    """

    label: str
    weight: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    values: Optional[np.ndarray] = None
    cell_weights: Optional[Callable[[TypeDistribution], np.ndarray]] = None
    meta: dict = field(default_factory=dict)

    def grid_values(self, g: TypeDistribution) -> np.ndarray:
        if self.values is not None:
            if self.values.shape != g.shape:
                raise ValidationError(f"moment {self.label!r} grid does not match distribution")
            w = self.values
        elif self.cell_weights is not None:
            w = np.asarray(self.cell_weights(g), dtype=float)
        elif self.weight is not None:
            mm, ff = g.mesh()
            w = np.broadcast_to(np.asarray(self.weight(mm, ff), dtype=float), g.shape)
        else:
            raise ValidationError(f"moment {self.label!r} has no weight")
        if not np.all(np.isfinite(w)):
            raise ValidationError(f"moment {self.label!r} weight is unbounded on the grid")
        return w


def evaluate_moment(M: Moment, g: TypeDistribution) -> float:
    return float(np.sum(M.grid_values(g) * g.density) * g.cell_area)


def constant_moment(c: float = 1.0) -> Moment:
    return Moment(label=f"const({c})", weight=lambda m, f: np.full(np.shape(m), c))


# --- construction ---------------------------------------------------------

def _grid(params: CostParams, n_m: int, n_f: int):
    if n_m < 2 or n_f < 2:
        raise ValidationError(f"grid sizes must be >= 2, got {n_m}x{n_f}")
    m_edges = np.linspace(params.m_lo, params.m_hi, n_m + 1)
    f_edges = np.linspace(params.f_lo, params.f_hi, n_f + 1)
    m_nodes = 0.5 * (m_edges[:-1] + m_edges[1:])
    f_nodes = 0.5 * (f_edges[:-1] + f_edges[1:])
    area = (params.m_hi - params.m_lo) * (params.f_hi - params.f_lo) / (n_m * n_f)
    return m_nodes, f_nodes, area


def _build(params, n_m, n_f, raw, renormalize=True) -> TypeDistribution:
    m_nodes, f_nodes, area = _grid(params, n_m, n_f)
    raw = np.asarray(raw, dtype=float)
    if renormalize:
        total = float(raw.sum() * area)
        if not np.isfinite(total) or total <= 0.0:
            raise ValidationError(f"distribution spec is not normalizable (mass {total!r})")
        raw = raw / total
    return TypeDistribution(m_nodes.copy(), f_nodes.copy(), raw.copy(), area, params)


def uniform(params: CostParams, n_m: int, n_f: int) -> TypeDistribution:
    return _build(params, n_m, n_f, np.ones((n_m, n_f)))


def make_distribution(spec: Mapping[str, Any], params: CostParams, n_m: int, n_f: int) -> TypeDistribution:
    """Build a grid density from a JSON-style spec.

    Supported kinds: ``uniform``, ``trunc_normal`` (``mu_m``, ``mu_f``,
    ``sigma``), ``mixture`` (``components``: list of ``{"rect": [m0, m1,
    f0, f1], "weight": w}``, each a uniform on its sub-rectangle), ``grid``
    (``values``: explicit ``n_m x n_f`` array, renormalized), and
    ``convex`` (``base``, ``other``, ``lambda``) giving
    ``lambda * base + (1 - lambda) * other``.
    """
    kind = spec.get("kind")
    m_nodes, f_nodes, _ = _grid(params, n_m, n_f)
    mm, ff = np.meshgrid(m_nodes, f_nodes, indexing="ij")
    if kind == "uniform":
        return uniform(params, n_m, n_f)
    if kind == "trunc_normal":
        sigma = float(spec["sigma"])
        if sigma <= 0:
            raise ValidationError("trunc_normal needs sigma > 0")
        # the log-density keeps far tails strictly positive in floating point
        logd = norm.logpdf(mm, loc=float(spec["mu_m"]), scale=sigma) + \
            norm.logpdf(ff, loc=float(spec["mu_f"]), scale=sigma)
        return _build(params, n_m, n_f, np.exp(logd - logd.max()))
    if kind == "mixture":
        raw = np.zeros((n_m, n_f))
        comps = spec.get("components") or []
        if not comps:
            raise ValidationError("mixture needs at least one component")
        for comp in comps:
            m0, m1, f0, f1 = (float(x) for x in comp["rect"])
            w = float(comp.get("weight", 1.0))
            if w < 0 or m1 <= m0 or f1 <= f0:
                raise ValidationError(f"bad mixture component {comp!r}")
            # exact overlap of each cell with the sub-rectangle
            dm = (params.m_hi - params.m_lo) / n_m
            df = (params.f_hi - params.f_lo) / n_f
            om = np.clip(np.minimum(m_nodes + dm / 2, m1) - np.maximum(m_nodes - dm / 2, m0), 0, None) / dm
            of = np.clip(np.minimum(f_nodes + df / 2, f1) - np.maximum(f_nodes - df / 2, f0), 0, None) / df
            raw += w * np.outer(om, of) / ((m1 - m0) * (f1 - f0))
        return _build(params, n_m, n_f, raw)
    if kind == "grid":
        vals = np.asarray(spec["values"], dtype=float)
        if vals.shape != (n_m, n_f):
            raise ValidationError(f"grid values shape {vals.shape} != ({n_m}, {n_f})")
        return _build(params, n_m, n_f, vals)
    if kind == "convex":
        lam = float(spec["lambda"])
        if not 0.0 <= lam <= 1.0:
            raise ValidationError(f"convex lambda must lie in [0, 1], got {lam}")
        base = make_distribution(spec["base"], params, n_m, n_f)
        other = make_distribution(spec["other"], params, n_m, n_f)
        return base.mix(other, lam)
    raise ValidationError(f"unknown distribution kind {kind!r}")


def sequence_g_n(g0: TypeDistribution, u: TypeDistribution, n: int) -> TypeDistribution:
    """``(1/n) g0 + (1 - 1/n) u``, the competitive-mass sequence."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    return g0.mix(u, 1.0 / n)


# --- sampling and perturbation --------------------------------------------

def sample_types(g: TypeDistribution, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` i.i.d. types; returns an ``(n, 2)`` array of ``(m, f)`` rows."""
    if n < 1:
        raise ValidationError(f"need n >= 1 draws, got {n}")
    rng = np.random.default_rng(seed)
    return sample_types_rng(g, n, rng)


def sample_types_rng(g: TypeDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    p = g.cell_mass().reshape(-1)
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    idx = np.minimum(idx, p.size - 1)
    i, j = np.divmod(idx, g.f_nodes.size)
    jitter = rng.random((n, 2)) - 0.5
    m = g.m_nodes[i] + jitter[:, 0] * g.dm
    f = g.f_nodes[j] + jitter[:, 1] * g.df
    return np.column_stack([m, f])


def max_admissible_eps(g: TypeDistribution, v: PerturbationDirection) -> float:
    neg = v.values < 0
    if not neg.any():
        return np.inf
    return float(np.min(g.density[neg] / -v.values[neg]))


def perturb(g: TypeDistribution, v: PerturbationDirection, eps: float) -> TypeDistribution:
    if v.values.shape != g.shape:
        raise ValidationError("perturbation grid does not match distribution")
    new = g.density + eps * v.values
    if np.any(new <= 0.0):
        raise ValidationError(
            f"eps={eps!r} breaks positivity; maximal admissible eps is "
            f"{max_admissible_eps(g, v)!r} (exclusive)"
        )
    return TypeDistribution(g.m_nodes.copy(), g.f_nodes.copy(), new, g.cell_area, g.params)
