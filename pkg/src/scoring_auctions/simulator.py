"""Monte Carlo and quadrature evaluation of first-score and second-score auctions.

Interim quantities for a probe type ``t`` facing one opponent drawn from ``g``:
``X`` win probability, ``Y`` expected effort given a win, ``T`` expected
transfer given a win, and ``U = X (T - m Y - f)``.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .breakeven import breakeven_batch
from .classifier import admits
from .core import CostParams, TypeDistribution, ValidationError, make_distribution, sample_types_rng
from .equilibrium import (BULK_GRID, EquilibriumStrategy, ScoreDistribution, edge_scores,
                          line_segments, pushforward_density, score_distribution,
                          solve_best_response, solve_invariant)
from .scoring import ScoringRule, optimal_quality_batch

BATCH = 20_000
IR_TOL = 1e-9


def default_probes(params: CostParams, n: int = 7) -> np.ndarray:
    """``n x n`` interior lattice at ``lo + k/(n+1) * (hi - lo)``, ``k = 1..n``; rows ``(m, f)``."""
    k = np.arange(1, n + 1) / (n + 1)
    m = params.m_lo + k * (params.m_hi - params.m_lo)
    f = params.f_lo + k * (params.f_hi - params.f_lo)
    mm, ff = np.meshgrid(m, f, indexing="ij")
    return np.column_stack([mm.ravel(), ff.ravel()])


def _probes(params: CostParams, probes) -> np.ndarray:
    if probes is None:
        return default_probes(params)
    p = np.atleast_2d(np.asarray(probes, float))
    if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] < 1:
        raise ValidationError("probe types must be an (n, 2) array of (m, f) rows")
    return p


@dataclass(frozen=True, eq=False)
class SimulationReport:
    format: str
    method: str
    probes: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    T: np.ndarray
    U: np.ndarray
    se_X: np.ndarray
    se_Y: np.ndarray
    se_T: np.ndarray
    se_U: np.ndarray
    buyer_expected_score: float
    draws: Optional[int] = None
    seed: Optional[int] = None
    notes: dict = field(default_factory=dict)

    def ir_ok(self, tol: float = IR_TOL) -> bool:
        return bool(np.all(self.U >= -tol))

    def to_dict(self) -> dict:
        return {"format": self.format, "method": self.method, "draws": self.draws,
                "seed": self.seed, "buyer_expected_score": self.buyer_expected_score,
                "probes": [{"m": float(m), "f": float(f), "X": float(x), "Y": float(y),
                            "T": float(t), "U": float(u), "se_X": float(sx),
                            "se_U": float(su)}
                           for (m, f), x, y, t, u, sx, su in
                           zip(self.probes, self.X, self.Y, self.T, self.U, self.se_X, self.se_U)],
                "notes": self.notes}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "f", "X", "Y", "T", "U", "se_U"])
        for (m, f), x, y, t, u, su in zip(self.probes, self.X, self.Y, self.T, self.U, self.se_U):
            w.writerow([repr(float(v)) for v in (m, f, x, y, t, u, su)])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class EquivalenceReport:
    probes: np.ndarray
    gap: np.ndarray
    max_gap: float
    method: str
    se: Optional[np.ndarray] = None
    order_disagreements: int = 0
    first: Optional[SimulationReport] = None
    second: Optional[SimulationReport] = None
    solver: dict = field(default_factory=dict)

    @property
    def max_z(self) -> float:
        """Largest ``gap / se`` over probes (Monte Carlo only)."""
        if self.se is None:
            return float("nan")
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(self.se > 0, self.gap / self.se, np.where(self.gap > 0, np.inf, 0.0))
        return float(z.max())

    def to_dict(self) -> dict:
        out = {"method": self.method, "max_gap": self.max_gap,
               "order_disagreements": self.order_disagreements, "solver": self.solver,
               "probes": [{"m": float(m), "f": float(f), "gap": float(gp)}
                          for (m, f), gp in zip(self.probes, self.gap)]}
        if self.se is not None:
            out["max_z"] = self.max_z
            for row, s in zip(out["probes"], self.se):
                row["se"] = float(s)
        return out


# --- probe bids ------------------------------------------------------------

def _by_line(ms: np.ndarray):
    """Group indices of ``ms`` by exact value."""
    keys, inv = np.unique(ms, return_inverse=True)
    return [(float(k), np.flatnonzero(inv == i)) for i, k in enumerate(keys)]


def probe_bids(strategy: EquilibriumStrategy, g: TypeDistribution, probes) -> tuple:
    """``(p, q, score)`` that each probe type submits under ``strategy``.

    Closed-path strategies are evaluated exactly at the probe (break-even
    contract at the probe's own ``f2``); other profiles are interpolated.
    """
    probes = _probes(g.params, probes)
    rule, eta = strategy.rule, strategy.eta
    if strategy.mode == "invariant-closed-path":
        z = np.empty(len(probes))
        s_edges = edge_scores(rule, g, eta)
        for m, idx in _by_line(probes[:, 0]):
            gm = pushforward_density(rule, g, m, eta, s_edges)
            z[idx] = gm.conditional_mean_above(probes[idx, 1])
        q, _ = breakeven_batch(rule, probes[:, 0], z, eta)
        p = np.maximum(probes[:, 0] * q ** eta + z, 0.0)
        return p, q, rule.score(p, q)
    p, q, s = strategy.contract_at(probes[:, 0], probes[:, 1])
    return p, q, s


def _sub_rngs(seed: int, n_batches: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_batches)]


def _batches(draws: int):
    if draws < 1:
        raise ValidationError(f"need at least one draw, got {draws}")
    n = -(-draws // BATCH)
    return [min(BATCH, draws - k * BATCH) for k in range(n)]


def _run_batches(work, draws: int, seed: int, threads: int):
    sizes = _batches(draws)
    rngs = _sub_rngs(seed, len(sizes))
    jobs = list(zip(sizes, rngs))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda a: work(*a), jobs))
    else:
        parts = [work(n, r) for n, r in jobs]
    # batch sums are added in batch order, so the result does not depend on threads
    total = parts[0]
    for p in parts[1:]:
        total = {k: total[k] + p[k] for k in total}
    return total


def _win(own: np.ndarray, opp: np.ndarray, rng) -> np.ndarray:
    """``(n_probe, n_draw)`` win indicators; exact ties split by a fair coin."""
    diff = own[:, None] - opp[None, :]
    coin = rng.random(diff.shape) < 0.5
    return (diff > 0) | ((diff == 0) & coin)


def _finish(sums: dict, n: int, m: np.ndarray, f: np.ndarray):
    wins = sums["w"]
    X = wins / n
    with np.errstate(divide="ignore", invalid="ignore"):
        Y = np.where(wins > 0, sums["y"] / wins, 0.0)
        T = np.where(wins > 0, sums["t"] / wins, 0.0)
        var_y = np.where(wins > 1, (sums["yy"] - wins * Y ** 2) / (wins - 1), 0.0)
        var_t = np.where(wins > 1, (sums["tt"] - wins * T ** 2) / (wins - 1), 0.0)
        se_Y = np.sqrt(np.maximum(var_y, 0.0) / np.maximum(wins, 1))
        se_T = np.sqrt(np.maximum(var_t, 0.0) / np.maximum(wins, 1))
    U = sums["u"] / n
    var_u = (sums["uu"] - n * U ** 2) / max(n - 1, 1)
    se_U = np.sqrt(np.maximum(var_u, 0.0) / n)
    se_X = np.sqrt(X * (1.0 - X) / n)
    return X, Y, T, U, se_X, se_Y, se_T, se_U


def _accumulate(win, y, t, u):
    w = win.astype(float)
    return {"w": w.sum(1), "y": (w * y).sum(1), "yy": (w * y * y).sum(1),
            "t": (w * t).sum(1), "tt": (w * t * t).sum(1),
            "u": (w * u).sum(1), "uu": (w * u * u).sum(1)}


# --- Monte Carlo -----------------------------------------------------------

def run_first_score(rule: ScoringRule, strategy: EquilibriumStrategy, g: TypeDistribution,
                    draws: int = 100_000, seed: int = 0, probes=None,
                    threads: int = 1) -> SimulationReport:
    """Each probe type faces ``draws`` opponents bidding the interpolated profile."""
    _check_strategy(rule, strategy, g)
    probes = _probes(g.params, probes)
    m, f = probes[:, 0], probes[:, 1]
    p, q, s_own = probe_bids(strategy, g, probes)
    eta = strategy.eta
    y_own = (q ** eta)[:, None]
    t_own = p[:, None]
    u_own = (p - m * q ** eta - f)[:, None]

    def work(n, rng):
        opp = sample_types_rng(g, n, rng)
        s_opp = strategy.score_at(opp[:, 0], opp[:, 1])
        win = _win(s_own, s_opp, rng)
        out = _accumulate(win, np.broadcast_to(y_own, win.shape),
                          np.broadcast_to(t_own, win.shape), np.broadcast_to(u_own, win.shape))
        # the buyer receives the higher of two independent opponents' scores
        opp2 = sample_types_rng(g, n, rng)
        out["best"] = np.array([np.maximum(s_opp, strategy.score_at(opp2[:, 0], opp2[:, 1])).sum()])
        return out

    sums = _run_batches(work, draws, seed, threads)
    stats = _finish(sums, draws, m, f)
    return SimulationReport("first-score", "monte-carlo", probes, *stats,
                            float(sums["best"][0] / draws), draws, seed,
                            {"strategy_mode": strategy.mode})


def run_second_score(rule: ScoringRule, g: TypeDistribution, draws: int = 100_000, seed: int = 0,
                     probes=None, eta: Optional[float] = None, threads: int = 1) -> SimulationReport:
    """Both bid break-even; the winner fulfils at the loser's score as profitably as possible."""
    eta = g.params.eta if eta is None else eta
    probes = _probes(g.params, probes)
    m, f = probes[:, 0], probes[:, 1]
    _, s_own = breakeven_batch(rule, m, f, eta, n_grid=BULK_GRID)
    lines = _by_line(m)

    def work(n, rng):
        opp = sample_types_rng(g, n, rng)
        _, s_opp = breakeven_batch(rule, opp[:, 0], opp[:, 1], eta, n_grid=BULK_GRID)
        win = _win(s_own, s_opp, rng)
        y = np.zeros(win.shape)
        t = np.zeros(win.shape)
        u = np.zeros(win.shape)
        for mv, idx in lines:
            # fulfilment at the opponent's score depends only on the winner's m
            qf, v = optimal_quality_batch(rule, s_opp, mv, eta, n_grid=BULK_GRID)
            ef = qf ** eta
            y[idx] = ef
            t[idx] = v + mv * ef
            u[idx] = v[None, :] - f[idx, None]
        out = _accumulate(win, y, t, u)
        opp2 = sample_types_rng(g, n, rng)
        _, s2 = breakeven_batch(rule, opp2[:, 0], opp2[:, 1], eta, n_grid=BULK_GRID)
        out["best"] = np.array([np.minimum(s_opp, s2).sum()])
        return out

    sums = _run_batches(work, draws, seed, threads)
    stats = _finish(sums, draws, m, f)
    return SimulationReport("second-score", "monte-carlo", probes, *stats,
                            float(sums["best"][0] / draws), draws, seed)


def _check_strategy(rule, strategy, g):
    if strategy.rule != rule:
        raise ValidationError("strategy was solved for a different scoring rule")
    lo_m, hi_m = strategy.m_nodes[0], strategy.m_nodes[-1]
    if not (g.params.m_lo <= lo_m and hi_m <= g.params.m_hi):
        raise ValidationError("strategy grid lies outside the distribution's type rectangle")


# --- quadrature ------------------------------------------------------------

def _second_score_quadrature(rule, g, eta, probes):
    m, f = probes[:, 0], probes[:, 1]
    X = np.empty(len(probes))
    Y = np.empty(len(probes))
    Z = np.empty(len(probes))
    s_edges = edge_scores(rule, g, eta)
    for mv, idx in _by_line(m):
        lo, hi, mass, e_lo, e_hi = (a.ravel() for a in line_segments(rule, g, mv, eta, s_edges))
        width = hi - lo
        for k in idx:
            a = np.maximum(lo, f[k])
            with np.errstate(divide="ignore", invalid="ignore"):
                frac = np.where(width > 0, np.clip((hi - a) / np.where(width > 0, width, 1.0), 0, 1),
                                (lo > f[k]).astype(float))
            w = mass * frac
            mid = 0.5 * (a + hi)
            # Simpson's rule on effort, which kinks where quality hits a bound
            qa, _ = breakeven_batch(rule, np.full(a.size, mv), a, eta, n_grid=BULK_GRID)
            qm, _ = breakeven_batch(rule, np.full(a.size, mv), mid, eta, n_grid=BULK_GRID)
            e_a = np.where(a > lo, qa ** eta, e_lo)
            e_mid = (e_a + 4.0 * qm ** eta + e_hi) / 6.0
            X[k] = w.sum()
            if X[k] > 0:
                Z[k] = (w * mid).sum() / X[k]
                Y[k] = (w * e_mid).sum() / X[k]
            else:
                Z[k], Y[k] = f[k], 0.0
    T = Z + m * Y
    U = X * (Z - f)
    return X, Y, T, U


def _expected_best_first(sd: ScoreDistribution, lo: float, hi: float, n: int = 4001) -> float:
    # E[max of two] = hi - int_lo^hi H(s)^2 ds
    s = np.linspace(lo, hi, n)
    return float(hi - np.trapezoid(sd.cdf(s) ** 2, s))


def interim_quadrature(rule: ScoringRule, source, g: TypeDistribution, eta: Optional[float] = None,
                       probes=None) -> SimulationReport:
    """Interim ``X, Y, T, U`` without sampling noise.

    ``source`` is an EquilibriumStrategy (first-score) or the string
    ``"second-score"`` (break-even play).
    """
    probes = _probes(g.params, probes)
    m, f = probes[:, 0], probes[:, 1]
    zeros = np.zeros(len(probes))
    if isinstance(source, str):
        if source != "second-score":
            raise ValidationError(f"unknown format {source!r}")
        eta = g.params.eta if eta is None else eta
        X, Y, T, U = _second_score_quadrature(rule, g, eta, probes)
        mm, ff = g.mesh()
        _, s_be = breakeven_batch(rule, mm, ff, eta, n_grid=BULK_GRID)
        sd = ScoreDistribution(s_be, g, rule, eta, edge_scores=edge_scores(rule, g, eta))
        grid = np.linspace(s_be.min() - 0.1 * np.ptp(s_be), s_be.max(), 4001)
        # the buyer receives the lower of two break-even scores
        best = float(grid[0] + np.trapezoid((1.0 - sd.cdf(grid)) ** 2, grid))
        return SimulationReport("second-score", "quadrature", probes, X, Y, T, U,
                                zeros, zeros, zeros, zeros.copy(), best)
    strategy: EquilibriumStrategy = source
    _check_strategy(rule, strategy, g)
    eta = strategy.eta
    p, q, s_own = probe_bids(strategy, g, probes)
    sd = score_distribution(strategy, g)
    X = sd.cdf(s_own)
    Y = q ** eta
    T = p
    U = X * (p - m * Y - f)
    s = strategy.score
    best = _expected_best_first(sd, float(s.min()) - 0.1 * float(np.ptp(s)), float(s.max()))
    return SimulationReport("first-score", "quadrature", probes, X, Y, T, U,
                            zeros, zeros, zeros, zeros.copy(), best,
                            notes={"strategy_mode": strategy.mode})


# --- equivalence and invariance ---------------------------------------------

def solve_first_score(rule: ScoringRule, g: TypeDistribution, eta: Optional[float] = None,
                      **br_options) -> EquilibriumStrategy:
    """Closed path when the rule admits it, best-response iteration otherwise."""
    eta = g.params.eta if eta is None else eta
    params = g.params if eta == g.params.eta else CostParams(eta, g.params.m_lo, g.params.m_hi,
                                                            g.params.f_lo, g.params.f_hi)
    if admits(rule, params):
        return solve_invariant(rule, g, eta)
    return solve_best_response(rule, g, eta, **br_options)


def _solver_info(st: EquilibriumStrategy) -> dict:
    return {"mode": st.mode, "converged": st.converged, "iterations": st.iterations,
            "br_residual": st.br_residual}


def payoff_equivalence_report(rule: ScoringRule, g: TypeDistribution, eta: Optional[float] = None,
                              probes=None, method: str = "quadrature",
                              strategy: Optional[EquilibriumStrategy] = None,
                              draws: int = 100_000, seed: int = 0, threads: int = 1,
                              **br_options) -> EquivalenceReport:
    """Per-probe ``|U_FS - U_SS|`` with the first-score side in equilibrium."""
    eta = g.params.eta if eta is None else eta
    probes = _probes(g.params, probes)
    if strategy is None:
        strategy = solve_first_score(rule, g, eta, **br_options)
    _, _, s_fs = probe_bids(strategy, g, probes)
    _, s_be = breakeven_batch(rule, probes[:, 0], probes[:, 1], eta, n_grid=BULK_GRID)
    disagree = _order_disagreements(s_fs, s_be, strategy.resolution)
    if method == "quadrature":
        fs = interim_quadrature(rule, strategy, g, probes=probes)
        ss = interim_quadrature(rule, "second-score", g, eta, probes)
        gap = np.abs(fs.U - ss.U)
        return EquivalenceReport(probes, gap, float(gap.max()), method, None, disagree, fs, ss,
                                 _solver_info(strategy))
    if method != "monte-carlo":
        raise ValidationError(f"unknown method {method!r}")
    gap, se, fs, ss = _paired_mc(rule, strategy, g, eta, probes, draws, seed, threads)
    return EquivalenceReport(probes, gap, float(gap.max()), method, se, disagree, fs, ss,
                             _solver_info(strategy))


def _order_disagreements(s_fs, s_be, tol):
    d1 = s_fs[:, None] - s_fs[None, :]
    d2 = s_be[:, None] - s_be[None, :]
    clear = (np.abs(d1) > tol) & (np.abs(d2) > 1e-10)
    return int(np.sum(clear & (np.sign(d1) != np.sign(d2))) // 2)


def _paired_mc(rule, strategy, g, eta, probes, draws, seed, threads):
    """Both formats face the same opponent draws; returns per-probe ``|mean diff|`` and its SE."""
    m, f = probes[:, 0], probes[:, 1]
    p, q, s_own = probe_bids(strategy, g, probes)
    _, be_own = breakeven_batch(rule, m, f, eta, n_grid=BULK_GRID)
    margin = (p - m * q ** eta - f)[:, None]
    lines = _by_line(m)

    def work(n, rng):
        opp = sample_types_rng(g, n, rng)
        s_opp = strategy.score_at(opp[:, 0], opp[:, 1])
        _, be_opp = breakeven_batch(rule, opp[:, 0], opp[:, 1], eta, n_grid=BULK_GRID)
        coin = rng.random((len(probes), n)) < 0.5
        d1 = s_own[:, None] - s_opp[None, :]
        d2 = be_own[:, None] - be_opp[None, :]
        w1 = (d1 > 0) | ((d1 == 0) & coin)
        w2 = (d2 > 0) | ((d2 == 0) & coin)
        u1 = np.where(w1, margin, 0.0)
        u2 = np.zeros(w2.shape)
        for mv, idx in lines:
            _, v = optimal_quality_batch(rule, be_opp, mv, eta, n_grid=BULK_GRID)
            u2[idx] = np.where(w2[idx], v[None, :] - f[idx, None], 0.0)
        d = u1 - u2
        return {"u1": u1.sum(1), "u2": u2.sum(1), "d": d.sum(1), "dd": (d * d).sum(1)}

    sums = _run_batches(work, draws, seed, threads)
    n = draws
    mean = sums["d"] / n
    var = (sums["dd"] - n * mean ** 2) / max(n - 1, 1)
    se = np.sqrt(np.maximum(var, 0.0) / n)
    return np.abs(mean), se, sums["u1"] / n, sums["u2"] / n


@dataclass(frozen=True, eq=False)
class InvarianceScan:
    probes: np.ndarray
    pairs: np.ndarray
    margins: np.ndarray          # (n_dist, n_pairs): score of first minus second
    tie_tol: np.ndarray          # per distribution
    flips: list
    inconclusive: list
    solver: list
    labels: list

    @property
    def n_flips(self) -> int:
        return len(self.flips)

    def to_dict(self) -> dict:
        return {"labels": self.labels, "n_pairs": int(len(self.pairs)),
                "flips": self.flips, "inconclusive": len(self.inconclusive),
                "tie_tol": [float(x) for x in self.tie_tol], "solver": self.solver}


def default_pairs(n_probes: int) -> np.ndarray:
    i, j = np.triu_indices(n_probes, 1)
    return np.column_stack([i, j])


def invariance_scan(rule: ScoringRule, eta: Optional[float], distributions: Sequence[TypeDistribution],
                    probes=None, pairs=None, labels=None, strategies=None,
                    **br_options) -> InvarianceScan:
    """Compare the winner of every probe pair across distributions.

    A pair whose margin is within the solver's tie tolerance in either
    distribution is inconclusive rather than a flip.
    """
    if len(distributions) < 1:
        raise ValidationError("need at least one distribution")
    g0 = distributions[0]
    eta = g0.params.eta if eta is None else eta
    probes = _probes(g0.params, probes)
    pairs = default_pairs(len(probes)) if pairs is None else np.asarray(pairs, int)
    labels = list(labels) if labels is not None else [f"g{k}" for k in range(len(distributions))]
    margins, tols, info = [], [], []
    for k, g in enumerate(distributions):
        st = strategies[k] if strategies is not None else solve_first_score(rule, g, eta, **br_options)
        _, _, s = probe_bids(st, g, probes)
        margins.append(s[pairs[:, 0]] - s[pairs[:, 1]])
        # best-response scores are trusted to two grid steps or the undamped residual
        if st.mode == "invariant-closed-path":
            tols.append(1e-9)
        else:
            tols.append(max(2.0 * st.resolution, st.br_residual or 0.0))
        info.append(_solver_info(st))
    margins = np.array(margins)
    tols = np.array(tols)
    flips, inconclusive = [], []
    for a in range(len(distributions)):
        for b in range(a + 1, len(distributions)):
            opposite = np.sign(margins[a]) * np.sign(margins[b]) < 0
            for k in np.flatnonzero(opposite):
                rec = {"pair": [probes[pairs[k, 0]].tolist(), probes[pairs[k, 1]].tolist()],
                       "distributions": [labels[a], labels[b]],
                       "margins": [float(margins[a, k]), float(margins[b, k])]}
                if abs(margins[a, k]) > tols[a] and abs(margins[b, k]) > tols[b]:
                    flips.append(rec)
                else:
                    inconclusive.append(rec)
    return InvarianceScan(probes, pairs, margins, tols, flips, inconclusive, info, labels)


def adversarial_candidates(params: CostParams, n_m: int, n_f: int, n_seq=(2, 4),
                           splits=(0.25, 0.5, 0.75)) -> list:
    """Two-rectangle competitive-mass mixtures ``(1/n) g0 + (1 - 1/n) u``.

    ``g0`` puts its mass on two thin bands of fixed cost: one low-``m``
    band and one high-``m`` band, chosen so the bands straddle a split of the
    fixed-cost range. Returns ``(label, spec)`` pairs.
    """
    out = []
    dm = params.m_hi - params.m_lo
    df = params.f_hi - params.f_lo
    for c in splits:
        f0 = params.f_lo + c * df
        w = 0.125 * df
        rects = [[params.m_lo, params.m_lo + 0.5 * dm, max(params.f_lo, f0 - w), f0],
                 [params.m_lo + 0.5 * dm, params.m_hi, f0, min(params.f_hi, f0 + w)]]
        for n in n_seq:
            # (1/n) g0 + (1 - 1/n) u with g0 split evenly over the two bands
            comps = [{"rect": [params.m_lo, params.m_hi, params.f_lo, params.f_hi],
                      "weight": 1.0 - 1.0 / n}]
            comps += [{"rect": r, "weight": 0.5 / n} for r in rects]
            out.append((f"split={c:g},n={n}", {"kind": "mixture", "components": comps}))
    return out


@dataclass(frozen=True)
class AdversarialScan:
    """QD payoff gaps against an invariant-rule baseline on the same distributions.

    Both rules go through the best-response solver, so the baseline gap is
    the solver's own error floor at that distribution.
    """

    labels: list
    gaps: np.ndarray
    baselines: np.ndarray
    disagreements: list
    converged: list

    @property
    def ratios(self) -> np.ndarray:
        return self.gaps / np.maximum(self.baselines, 1e-300)

    @property
    def best(self) -> int:
        """Largest ratio among candidates where both solves converged."""
        ok = np.array([all(c) for c in self.converged])
        r = np.where(ok, self.ratios, -np.inf) if ok.any() else self.ratios
        return int(np.argmax(r))

    @property
    def best_ratio(self) -> float:
        return float(self.ratios[self.best])

    def to_dict(self) -> dict:
        b = self.best
        return {"labels": self.labels, "gaps": self.gaps.tolist(),
                "baselines": self.baselines.tolist(), "ratios": self.ratios.tolist(),
                "order_disagreements": self.disagreements, "converged": self.converged,
                "best": {"label": self.labels[b], "gap": float(self.gaps[b]),
                         "baseline": float(self.baselines[b]), "ratio": float(self.ratios[b])}}


def adversarial_scan(rule: ScoringRule, params: CostParams, n_m: int = 30, n_f: int = 30,
                     baseline: Optional[ScoringRule] = None, candidates=None,
                     probes=None, **br_options) -> AdversarialScan:
    """Quadrature payoff gap of ``rule`` over the uniform and adversarial candidates.

    ``baseline`` defaults to the price-quality-ratio rule. ``candidates`` is
    a list of ``(label, spec)`` pairs for ``make_distribution``.
    """
    baseline = ScoringRule("pqr") if baseline is None else baseline
    if candidates is None:
        candidates = [("uniform", {"kind": "uniform"})] + adversarial_candidates(params, n_m, n_f)
    labels, gaps, bases, dis, conv = [], [], [], [], []
    for label, spec in candidates:
        g = make_distribution(spec, params, n_m, n_f)
        st = solve_best_response(rule, g, **br_options)
        rep = payoff_equivalence_report(rule, g, probes=probes, strategy=st)
        st0 = solve_best_response(baseline, g, **br_options)
        rep0 = payoff_equivalence_report(baseline, g, probes=probes, strategy=st0)
        labels.append(label)
        gaps.append(rep.max_gap)
        bases.append(rep0.max_gap)
        dis.append(rep.order_disagreements)
        conv.append([st.converged, st0.converged])
    return AdversarialScan(labels, np.array(gaps), np.array(bases), dis, conv)
