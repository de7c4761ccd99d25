"""Command-line interface.

Exit codes: 0 on success, 1 when a check or construction fails, 2 on usage
errors (bad flags or malformed game files). ``TIMING_GAMES_TOL`` overrides
the default tolerance and ``TIMING_GAMES_THREADS`` the simulation threads.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .attrition import EndpointConditionError, PreconditionError, pure_equilibrium
from .duopoly import P0, DuopolyParams, closed_form, validate_closed_form
from .efficient import HypothesisError, efficient_equilibrium
from .model import DEFAULT_TOL, SCHEMA_HELP, GameSpecError, TimingGame, load_game_file
from .preemption import symmetric_equilibrium
from .snell import snell_envelope
from .strategy import Equilibrium, InfeasibleStrategy, strategies_from_dict
from .verify import equilibrium_diagnostics, game_value, simulate


class UsageError(Exception):
    pass


def default_tol() -> float:
    raw = os.environ.get("TIMING_GAMES_TOL")
    if raw is None:
        return DEFAULT_TOL
    try:
        return float(raw)
    except ValueError:
        raise UsageError(f"TIMING_GAMES_TOL={raw!r} is not a number") from None


def _load(path: str) -> TimingGame:
    try:
        return load_game_file(path).game()
    except FileNotFoundError:
        raise UsageError(f"game file not found: {path}") from None
    except GameSpecError as exc:
        raise UsageError(f"invalid game file {path}: {exc}") from None


def _emit(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_solve_snell(args) -> int:
    game = _load(args.game)
    p = game.pay
    lump = {
        "leader": p.leader,
        "follower": p.follower,
        "min": np.minimum(p.leader, p.follower),
    }[args.payoff]
    sol = snell_envelope(game.tree, p.flow, lump, tol=args.tol)
    labels = game.tree.labels
    doc = {
        "payoff": args.payoff,
        "nodes": [
            {
                "id": int(labels[k]),
                "U": float(sol.U[k]),
                "dD": float(sol.dD[k]),
                "stop": bool(sol.stop_flag[k]),
            }
            for k in range(game.tree.n_nodes)
        ],
    }
    _emit(json.dumps(doc), args.out)
    return 0


def _build_equilibrium(game: TimingGame, args) -> Equilibrium:
    if args.mode == "symmetric":
        return symmetric_equilibrium(game, mode=args.hazards, tol=args.tol)
    if args.mode == "efficient":
        return efficient_equilibrium(game, mode=args.hazards, tol=args.tol, diagnose=False)
    s1, s2 = pure_equilibrium(game, role_rule=args.role == "leader", tol=args.tol)
    vf = game_value(game, s1, s2)
    return Equilibrium("pure", None, (s1, s2), (vf.V1, vf.V2))


def cmd_equilibrium(args) -> int:
    game = _load(args.game)
    try:
        eq = _build_equilibrium(game, args)
    except (EndpointConditionError, HypothesisError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _emit(json.dumps(eq.to_dict(game.tree)), args.out)
    return 0


def _load_strategies(game: TimingGame, path: str):
    try:
        with open(path) as fh:
            doc = json.load(fh)
        return doc, strategies_from_dict(doc, game.tree)
    except FileNotFoundError:
        raise UsageError(f"equilibrium file not found: {path}") from None
    except (json.JSONDecodeError, KeyError, TypeError, InfeasibleStrategy) as exc:
        raise UsageError(f"invalid equilibrium file {path}: {exc}") from None


def cmd_verify(args) -> int:
    game = _load(args.game)
    doc, (s1, s2) = _load_strategies(game, args.eq)
    diag = equilibrium_diagnostics(game, s1, s2, tol=args.tol)
    kind = doc.get("kind") if isinstance(doc, dict) else None
    failed = []
    if not diag.max_best_reply_gap <= args.tol:
        failed.append("best_reply_gap")
    if kind in ("symmetric", "efficient") and not diag.max_payoff_asymmetry <= args.tol:
        failed.append("payoff_asymmetry")
    if kind in ("symmetric", "efficient") and diag.bound_checked and not diag.bound_violation <= args.tol:
        failed.append("payoff_bound")
    report = {
        "passed": not failed,
        "failed": failed,
        "worst_node": diag.worst_node,
        "tolerance": args.tol,
        "diagnostics": diag.to_dict(),
    }
    print(json.dumps(report))
    if failed:
        print(f"verification failed ({', '.join(failed)}); worst node {diag.worst_node}", file=sys.stderr)
        return 1
    return 0


def cmd_simulate(args) -> int:
    game = _load(args.game)
    _, (s1, s2) = _load_strategies(game, args.eq)
    if args.paths < 1:
        raise UsageError("--paths must be positive")
    res = simulate(game, s1, s2, args.paths, args.seed)
    exact = game_value(game, s1, s2)
    out = res.to_dict()
    out["exact"] = [float(exact.V1[0]), float(exact.V2[0])]
    _emit(json.dumps(out), args.out)
    return 0


def cmd_duopoly(args) -> int:
    try:
        params = DuopolyParams(
            r=args.r,
            mu=args.mu,
            sigma=args.sigma,
            c=args.c,
            m=args.m,
            y0=args.y0,
            horizon=args.horizon,
            steps=args.steps,
        )
    except GameSpecError as exc:
        raise UsageError(str(exc)) from None
    cf = closed_form(params)
    summary = {
        "beta2": cf.beta2,
        "y_m": cf.y_m,
        "y_1": cf.y_1,
        "follower_premium": cf.follower_premium(0.0, params.y0),
        "leader_option": cf.leader_option(0.0, params.y0),
    }
    if not args.check:
        _emit(json.dumps(summary), args.summary)
        return 0
    try:
        schedule = [int(s) for s in args.schedule.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad --schedule {args.schedule!r}") from None
    if not schedule:
        raise UsageError("--schedule is empty")
    try:
        report = validate_closed_form(replace(params, steps=schedule[0]), schedule)
    except GameSpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _emit(report.csv(), args.csv)
    full = {**summary, **report.summary()}
    text = json.dumps(full)
    if args.summary in (None, "-"):
        print(text, file=sys.stderr)
    else:
        _emit(text, args.summary)
    return 0 if report.passed(args.final_tol) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="timing-games",
        description="Equilibria of symmetric stopping games on event trees.",
        epilog=SCHEMA_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--game", required=True, help="game JSON file")
        p.add_argument("--tol", type=float, default=None, help="comparison tolerance")
        if out:
            p.add_argument("--out", default=None, help="output file (default stdout)")

    p = sub.add_parser("solve-snell", help="Snell envelope of a role payoff")
    common(p)
    p.add_argument("--payoff", choices=("leader", "follower", "min"), default="leader")
    p.set_defaults(func=cmd_solve_snell)

    p = sub.add_parser("equilibrium", help="construct an equilibrium")
    common(p)
    p.add_argument("--mode", choices=("symmetric", "efficient", "pure"), default="symmetric")
    p.add_argument(
        "--hazards", choices=("exact_discrete", "paper_formula"), default="exact_discrete"
    )
    p.add_argument(
        "--role",
        choices=("leader", "follower"),
        default="leader",
        help="role of player 1 in a pure equilibrium",
    )
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("verify", help="check an equilibrium file")
    common(p, out=False)
    p.add_argument("--eq", required=True, help="equilibrium or strategy-pair JSON")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="Monte Carlo payoffs of a strategy pair")
    common(p)
    p.add_argument("--eq", required=True)
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("duopoly", help="closed forms and lattice convergence for the exit game")
    p.add_argument("--r", type=float, default=P0.r)
    p.add_argument("--mu", type=float, default=P0.mu)
    p.add_argument("--sigma", type=float, default=P0.sigma)
    p.add_argument("--c", type=float, default=P0.c)
    p.add_argument("--m", type=float, default=P0.m)
    p.add_argument("--y0", type=float, default=P0.y0)
    p.add_argument("--horizon", type=float, default=P0.horizon)
    p.add_argument("--steps", type=int, default=P0.steps)
    p.add_argument("--check", action="store_true", help="run the lattice convergence check")
    p.add_argument("--schedule", default="500,1000,2000,4000")
    p.add_argument("--final-tol", type=float, default=0.01)
    p.add_argument("--csv", default=None, help="CSV output (default stdout)")
    p.add_argument("--summary", default=None, help="JSON summary output")
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=cmd_duopoly)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.tol is None:
            args.tol = default_tol()
        if not (math.isfinite(args.tol) and args.tol >= 0):
            raise UsageError("--tol must be a non-negative number")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        print(SCHEMA_HELP, file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return run(argv)
