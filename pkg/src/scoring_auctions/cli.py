"""Command-line entry point.

Every subcommand reads an optional JSON config (``--config``); flags given on
the command line override config fields. Reports go to stdout or ``--out``
as JSON, tables to ``--csv``. Exit status: 0 success, 1 usage, 2 invalid
input, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any, Optional

import numpy as np

from . import __version__
from .breakeven import ProjectionRangeError, breakeven_contract, project_pseudotype
from .classifier import InconsistentVerdict, classify
from .core import CostParams, SellerType, ValidationError, make_distribution
from .equilibrium import NotAdmitted, solve_best_response, solve_invariant
from .learning import information_technology_tiers
from .scoring import ScoringRule, check_regularity, rule_from_dict
from .simulator import (adversarial_scan, interim_quadrature, invariance_scan,
                        payoff_equivalence_report, run_first_score, run_second_score,
                        solve_first_score)

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2, 3

DEFAULTS = {
    "params": {"eta": 2.0, "m_lo": 1.0, "m_hi": 2.0, "f_lo": 0.5, "f_hi": 1.5},
    "distribution": {"kind": "uniform"},
    "grid": [30, 30],
    "draws": 100_000,
    "seed": 0,
    "threads": 1,
}

DEFAULT_SCAN_SET = [
    {"kind": "uniform"},
    {"kind": "trunc_normal", "mu_m": 1.5, "mu_f": 1.0, "sigma": 0.3},
    {"kind": "mixture", "components": [{"rect": [1.0, 1.5, 0.5, 1.0], "weight": 0.7},
                                       {"rect": [1.0, 2.0, 0.5, 1.5], "weight": 0.3}]},
]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# --- config handling -------------------------------------------------------

def _load_json_arg(text: str, what: str) -> Any:
    """A JSON literal, or a path to a JSON file."""
    text = text.strip()
    if text.startswith("{") or text.startswith("["):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{what}: invalid JSON ({exc})") from exc
    try:
        with open(text) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ValidationError(f"{what}: no such file {text!r}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what}: {text} is not valid JSON ({exc})") from exc


def _rule_arg(text: str) -> dict:
    if text in ("pqr", "qd", "quasilinear"):
        return {"family": text}
    return _load_json_arg(text, "--rule")


def _dist_arg(text: str) -> dict:
    if text in ("uniform",):
        return {"kind": text}
    return _load_json_arg(text, "--dist")


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = json.loads(json.dumps(DEFAULTS))
    if args.config:
        loaded = _load_json_arg(args.config, "--config")
        if not isinstance(loaded, dict):
            raise ValidationError("config file must hold a JSON object")
        for k, v in loaded.items():
            if k == "params" and isinstance(v, dict):
                cfg["params"].update(v)
            else:
                cfg[k] = v
    if args.rule is not None:
        cfg["rule"] = _rule_arg(args.rule)
    if args.qbar is not None:
        cfg.setdefault("rule", {"family": "qd"})["qbar"] = args.qbar
    for key in ("eta", "m_lo", "m_hi", "f_lo", "f_hi"):
        v = getattr(args, key)
        if v is not None:
            cfg["params"][key] = v
    if args.dist is not None:
        cfg["distribution"] = _dist_arg(args.dist)
    if args.grid is not None:
        cfg["grid"] = [args.grid, args.grid]
    for key in ("draws", "seed", "threads", "out", "csv", "tol"):
        v = getattr(args, key)
        if v is not None:
            cfg[key] = v
    return cfg


class Run:
    """Validated inputs for one command."""

    def __init__(self, cfg: dict, need_rule: bool = True, need_dist: bool = True):
        self.cfg = cfg
        if need_rule and "rule" not in cfg:
            raise ValidationError("no scoring rule given (--rule or config 'rule')")
        self.rule: Optional[ScoringRule] = rule_from_dict(cfg["rule"]) if "rule" in cfg else None
        p = cfg["params"]
        missing = {"eta", "m_lo", "m_hi", "f_lo", "f_hi"} - set(p)
        if missing:
            raise ValidationError(f"cost params missing {sorted(missing)}")
        self.params = CostParams.from_dict(p)
        grid = cfg["grid"]
        if not (isinstance(grid, list) and len(grid) == 2 and all(int(x) >= 2 for x in grid)):
            raise ValidationError(f"grid must be [n_m, n_f] with entries >= 2, got {grid!r}")
        self.n_m, self.n_f = int(grid[0]), int(grid[1])
        self.g = make_distribution(cfg["distribution"], self.params, self.n_m, self.n_f) \
            if need_dist else None
        self.draws = int(cfg["draws"])
        self.seed = int(cfg["seed"])
        self.threads = int(cfg["threads"])
        if self.draws < 1 or self.threads < 1:
            raise ValidationError("draws and threads must be positive")
        self.probes = np.asarray(cfg["probes"], float) if "probes" in cfg else None


# --- output ----------------------------------------------------------------

def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def emit(report: dict, cfg: dict, out=None):
    text = json.dumps(_clean(report), indent=2, sort_keys=True) + "\n"
    path = cfg.get("out")
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        (out or sys.stdout).write(text)


def write_csv(text: str, cfg: dict):
    path = cfg.get("csv")
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def strategy_csv(st) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "f", "p", "q", "score"])
    for row in st.rows():
        w.writerow([repr(v) for v in row])
    return buf.getvalue()


# --- commands --------------------------------------------------------------

def _type(args) -> SellerType:
    if args.m is None or args.f is None:
        raise ValidationError("--m and --f are required")
    return SellerType(args.m, args.f)


def cmd_classify(args, cfg):
    run = Run(cfg, need_dist=False)
    v = classify(run.rule, run.params)
    emit({**v.to_dict(), "rule": run.rule.to_dict(), "eta": run.params.eta}, cfg)
    return EXIT_OK


def cmd_breakeven(args, cfg):
    run = Run(cfg, need_dist=False)
    t = _type(args)
    r = breakeven_contract(run.rule, t, run.params.eta)
    emit(r.to_record(t), cfg)
    return EXIT_OK


def cmd_pseudotype(args, cfg):
    run = Run(cfg, need_dist=False)
    t = _type(args)
    if args.m_ref is None:
        raise ValidationError("--m-ref is required")
    rho = project_pseudotype(run.rule, args.m_ref, t, run.params.eta, run.params)
    emit({"m": t.m, "f": t.f, "m_ref": args.m_ref, "pseudotype": rho}, cfg)
    return EXIT_OK


def _max_foc(rule, st, g):
    from .equilibrium import foc_residual
    return foc_residual(rule, st, g).max_interior


def cmd_solve(args, cfg):
    run = Run(cfg)
    try:
        st = solve_invariant(run.rule, run.g)
    except NotAdmitted as exc:
        raise NotAdmitted(f"{run.rule.label()} has no closed-path equilibrium at "
                          f"eta={run.params.eta}; it requires solve-br") from exc
    write_csv(strategy_csv(st), cfg)
    emit({**st.report(), "max_foc_residual": _max_foc(run.rule, st, run.g)}, cfg)
    return EXIT_OK


def _br_options(args, cfg) -> dict:
    opts = {}
    for key in ("damping", "max_iter", "decay"):
        v = getattr(args, key, None)
        if v is None:
            v = cfg.get(key)
        if v is not None:
            opts[key] = v
    if cfg.get("tol") is not None:
        opts["tol"] = float(cfg["tol"])
    if "max_iter" in opts:
        opts["max_iter"] = int(opts["max_iter"])
    return opts


def cmd_solve_br(args, cfg):
    run = Run(cfg)
    st = solve_best_response(run.rule, run.g, **_br_options(args, cfg))
    write_csv(strategy_csv(st), cfg)
    emit({**st.report(), "max_foc_residual": _max_foc(run.rule, st, run.g)}, cfg)
    return EXIT_OK if st.converged else EXIT_NONCONVERGED


def cmd_simulate(args, cfg):
    run = Run(cfg)
    fmt = args.format or cfg.get("format", "first-score")
    method = args.method or cfg.get("method", "monte-carlo")
    if fmt not in ("first-score", "second-score") or method not in ("monte-carlo", "quadrature"):
        raise ValidationError(f"bad format/method {fmt!r}/{method!r}")
    converged = True
    if fmt == "first-score":
        st = solve_first_score(run.rule, run.g, **_br_options(args, cfg))
        converged = st.converged
        if method == "monte-carlo":
            rep = run_first_score(run.rule, st, run.g, run.draws, run.seed, run.probes, run.threads)
        else:
            rep = interim_quadrature(run.rule, st, run.g, probes=run.probes)
    elif method == "monte-carlo":
        rep = run_second_score(run.rule, run.g, run.draws, run.seed, run.probes, threads=run.threads)
    else:
        rep = interim_quadrature(run.rule, "second-score", run.g, probes=run.probes)
    write_csv(rep.to_csv(), cfg)
    emit({**rep.to_dict(), "ir_ok": rep.ir_ok(), "converged": converged}, cfg)
    return EXIT_OK if converged else EXIT_NONCONVERGED


def cmd_equiv(args, cfg):
    run = Run(cfg)
    method = args.method or cfg.get("method", "quadrature")
    rep = payoff_equivalence_report(run.rule, run.g, probes=run.probes, method=method,
                                    draws=run.draws, seed=run.seed, threads=run.threads,
                                    **_br_options(args, cfg))
    emit(rep.to_dict(), cfg)
    conv = rep.solver.get("converged", True)
    return EXIT_OK if conv else EXIT_NONCONVERGED


def cmd_scan(args, cfg):
    run = Run(cfg, need_dist=False)
    specs = cfg.get("distributions") or DEFAULT_SCAN_SET
    dists = [make_distribution(s, run.params, run.n_m, run.n_f) for s in specs]
    labels = [s.get("label", s.get("kind", f"g{k}")) for k, s in enumerate(specs)]
    scan = invariance_scan(run.rule, None, dists, probes=run.probes, labels=labels,
                           **_br_options(args, cfg))
    report = {"invariance": scan.to_dict()}
    if args.adversarial or cfg.get("adversarial"):
        adv = adversarial_scan(run.rule, run.params, run.n_m, run.n_f, probes=run.probes,
                               **_br_options(args, cfg))
        report["adversarial"] = adv.to_dict()
    emit(report, cfg)
    return EXIT_OK


def cmd_learn_demo(args, cfg):
    run = Run(cfg, need_dist=False)
    t = SellerType(args.m, args.f) if args.m is not None and args.f is not None else None
    tiers = information_technology_tiers(run.rule, run.params.eta, run.params,
                                         n=min(run.n_m, run.n_f), t=t)
    d = tiers.to_dict()
    out = {"type": d["type"], "verdict": d["verdict"], "tiers": d}
    if tiers.k2 is not None:
        k2 = tiers.k2.to_dict()
        row = next((r for r in k2["types"]), None)
        out["distributions"] = k2["labels"]
        if row is not None:
            out["realizations"] = row["realizations"]
            out["bids"] = row["bids"]
    emit(out, cfg)
    return EXIT_OK


def cmd_regularity(args, cfg):
    run = Run(cfg, need_dist=False)
    emit(check_regularity(run.rule, run.params).to_dict(), cfg)
    return EXIT_OK


COMMANDS = {
    "classify": cmd_classify, "breakeven": cmd_breakeven, "pseudotype": cmd_pseudotype,
    "solve": cmd_solve, "solve-br": cmd_solve_br, "simulate": cmd_simulate,
    "equiv": cmd_equiv, "scan": cmd_scan, "learn-demo": cmd_learn_demo,
    "regularity": cmd_regularity,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its fields")
    common.add_argument("--rule", help="rule spec: JSON file, JSON literal, or pqr|qd|quasilinear")
    common.add_argument("--qbar", type=float, help="anchor for the quality-discount rule")
    common.add_argument("--eta", type=float)
    common.add_argument("--m-lo", dest="m_lo", type=float)
    common.add_argument("--m-hi", dest="m_hi", type=float)
    common.add_argument("--f-lo", dest="f_lo", type=float)
    common.add_argument("--f-hi", dest="f_hi", type=float)
    common.add_argument("--dist", help="distribution spec: JSON file, JSON literal, or uniform")
    common.add_argument("--grid", type=int, help="cells per axis")
    common.add_argument("--draws", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="cap on worker threads")
    common.add_argument("--tol", type=float)
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--csv", help="write the table (strategy or interim) here")

    parser = _Parser(prog="scoring-auctions", description="Scoring auction equilibrium toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name in ("breakeven", "pseudotype", "learn-demo"):
            sp.add_argument("--m", type=float)
            sp.add_argument("--f", type=float)
        if name == "pseudotype":
            sp.add_argument("--m-ref", dest="m_ref", type=float)
        if name in ("solve-br", "simulate", "equiv", "scan"):
            sp.add_argument("--damping", type=float)
            sp.add_argument("--max-iter", dest="max_iter", type=int)
            sp.add_argument("--decay", type=float)
        if name in ("simulate", "equiv"):
            sp.add_argument("--method", choices=["monte-carlo", "quadrature"])
        if name == "simulate":
            sp.add_argument("--format", choices=["first-score", "second-score"])
        if name == "scan":
            sp.add_argument("--adversarial", action="store_true",
                            help="also run the adversarial payoff-gap search")
    return parser


def run_command(argv, stdout=None, stderr=None) -> int:
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError(parser.format_help())
        cfg = resolve_config(args)
    except UsageError as exc:
        stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except ValidationError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    try:
        if stdout is not None:
            old, sys.stdout = sys.stdout, stdout
        try:
            return COMMANDS[args.command](args, cfg)
        finally:
            if stdout is not None:
                sys.stdout = old
    except (ValidationError, ProjectionRangeError, InconsistentVerdict, KeyError, TypeError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_INVALID


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
