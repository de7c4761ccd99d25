"""War-of-attrition hazards and pure-strategy equilibria.

While following is worth more than leading, each player must be compensated
for the expected one-step loss of waiting by the chance that the opponent
quits first. The compensator of the leader payoff's Snell envelope measures
that loss. The attrition stops at the first node where leading, or a joint
stop, beats following. Such nodes are endpoints and preemption takes over
there.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import DEFAULT_TOL, TimingGame
from .snell import SnellSolution, snell_envelope
from .strategy import ExtendedStrategy

HAZARD_MODES = ("paper_formula", "exact_discrete")


class EndpointConditionError(ValueError):
    """Follower and leader payoffs tie with a loss from waiting but no joint-stop premium."""


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AttritionPlan:
    endpoint_flag: np.ndarray
    tilde_lump: np.ndarray
    snell: SnellSolution


def attrition_endpoint(
    game: TimingGame, include_ties: bool = False, tol: float = DEFAULT_TOL
) -> np.ndarray:
    """Nodes where leading or stopping jointly beats following.

    The flag is node-local, so the first flagged node on each path is the
    endpoint for every subgame through that path. With ``include_ties`` a
    joint stop that merely matches the follower payoff also counts.
    """
    p = game.pay
    flag = (p.leader > p.follower + tol) | (p.both > p.follower + tol)
    if include_ties:
        flag |= p.both >= p.follower - tol
    return flag & ~game.tree.is_terminal()


def attrition_plan(
    game: TimingGame, include_ties: bool = False, tol: float = DEFAULT_TOL
) -> AttritionPlan:
    """Leader process frozen at max(follower, both) on endpoint nodes, and its envelope."""
    flag = attrition_endpoint(game, include_ties=include_ties, tol=tol)
    p = game.pay
    lump = np.where(flag, np.maximum(p.follower, p.both), p.leader)
    sol = snell_envelope(game.tree, p.flow, lump, absorbing=flag, tol=tol)
    return AttritionPlan(flag, lump, sol)


def _paper_hazards(game: TimingGame, plan: AttritionPlan, tol: float) -> np.ndarray:
    p = game.pay
    dD = plan.snell.dD
    gap = p.follower - p.leader
    hazard = np.zeros(game.tree.n_nodes)
    live = ~plan.endpoint_flag & ~game.tree.is_terminal()
    spread = live & (gap > tol)
    # dD / (f - l) is the compensating intensity; the jump map turns it into a hazard
    hazard[spread] = dD[spread] / (gap[spread] + dD[spread])
    tie = live & ~spread & (dD > tol)
    coordinated = tie & (p.both >= p.follower - tol)
    hazard[coordinated] = 1.0
    broken = tie & ~coordinated
    if broken.any():
        k = int(np.argmax(broken))
        raise EndpointConditionError(
            f"endpoint condition violated at node {game.tree.labels[k]}: "
            "leader and follower payoffs tie with a loss from waiting, but a joint stop pays less"
        )
    return hazard


def _exact_attrition(
    game: TimingGame, endpoint: np.ndarray, endpoint_value: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-node indifference hazards solved jointly with the value recursion."""
    tree, p = game.tree, game.pay
    n = tree.n_nodes
    hazard = np.zeros(n)
    V = np.empty(n)
    sl = tree.stage_slice(tree.horizon)
    V[sl] = p.leader[sl]
    for t in range(tree.horizon - 1, -1, -1):
        sl = tree.stage_slice(t)
        ell, f, m = p.leader[sl], p.follower[sl], p.both[sl]
        cont = p.flow[sl] + tree.expect(V, t)
        loss = ell - cont
        binds = loss > 0.0
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.where(binds, loss / ((f - m) + loss), 0.0)
        g = np.clip(g, 0.0, 1.0)
        v = np.where(binds, g * m + (1.0 - g) * ell, cont)
        end = endpoint[sl]
        hazard[sl] = np.where(end, 1.0, g)
        V[sl] = np.where(end, endpoint_value[sl], v)
    return hazard, V


def attrition_solution(
    game: TimingGame, plan: AttritionPlan, mode: str, tol: float = DEFAULT_TOL
) -> tuple[np.ndarray, np.ndarray]:
    """Hazards and per-node values. Endpoint nodes carry hazard 1 and value max(f, m)."""
    if mode == "paper_formula":
        hazard = _paper_hazards(game, plan, tol)
        hazard[plan.endpoint_flag] = 1.0
        return hazard, plan.snell.U.copy()
    if mode == "exact_discrete":
        return _exact_attrition(game, plan.endpoint_flag, plan.tilde_lump)
    raise ValueError(f"unknown hazard mode {mode!r}; expected one of {HAZARD_MODES}")


def attrition_hazards(
    game: TimingGame, plan: AttritionPlan, mode: str = "exact_discrete", tol: float = DEFAULT_TOL
) -> ExtendedStrategy:
    """Symmetric attrition strategy; endpoints stop surely and carry no intensity yet."""
    hazard, _ = attrition_solution(game, plan, mode, tol=tol)
    return ExtendedStrategy(hazard, np.zeros_like(hazard), 1)


def _rule_mask(game: TimingGame, role_rule) -> np.ndarray:
    n = game.tree.n_nodes
    if isinstance(role_rule, (bool, np.bool_)):
        return np.full(n, bool(role_rule))
    if callable(role_rule):
        return np.array([bool(role_rule(k)) for k in range(n)])
    mask = np.asarray(role_rule, dtype=bool)
    if mask.shape != (n,):
        raise ValueError("role_rule mask needs one entry per node")
    return mask


def pure_equilibrium(
    game: TimingGame,
    start: int = 0,
    role_rule: bool | np.ndarray | Callable[[int], bool] = True,
    tol: float = DEFAULT_TOL,
) -> tuple[ExtendedStrategy, ExtendedStrategy]:
    """One player stops where leading is optimal, the other where following is worthless.

    Needs follower >= leader >= both and a follower payoff that is a
    supermartingale on the subgame from ``start``. At optimal leader-stop
    nodes where ``role_rule`` holds, player 1 takes the leader role and
    player 2 otherwise. Both players stop where follower equals both.
    """
    tree, p = game.tree, game.pay
    reach = tree.reachable(start)
    order = np.nonzero(reach)[0]
    inner = reach & ~tree.is_terminal()
    checks = [
        (p.follower < p.leader - tol, "follower payoff below leader payoff"),
        (p.leader < p.both - tol, "leader payoff below joint-stop payoff"),
    ]
    cont_f = tree.continuation(p.flow, p.follower)
    with np.errstate(invalid="ignore"):
        checks.append((inner & (p.follower < cont_f - tol), "follower payoff is not a supermartingale"))
    for bad, what in checks:
        bad = bad & reach
        if bad.any():
            k = int(order[np.argmax(bad[order])])
            raise PreconditionError(f"{what} at node {tree.labels[k]}")

    leader_sol = snell_envelope(tree, p.flow, p.leader, tol=tol)
    leads = leader_sol.stop_flag & ~tree.is_terminal()
    follows_done = (np.abs(p.follower - p.both) <= tol) & ~tree.is_terminal()
    rule = _rule_mask(game, role_rule)
    h1 = ((leads & rule) | follows_done).astype(float)
    h2 = ((leads & ~rule) | follows_done).astype(float)
    zero = np.zeros(tree.n_nodes)
    return ExtendedStrategy(h1, zero, 1), ExtendedStrategy(h2, zero.copy(), 2)


def expected_role_gap(game: TimingGame, tol: float = DEFAULT_TOL) -> np.ndarray:
    """E[follower - leader] at the earliest optimal leader stop, from every node."""
    from .snell import stopped_value

    tree, p = game.tree, game.pay
    region = snell_envelope(tree, p.flow, p.leader, tol=tol).stop_flag
    gap = p.follower - p.leader
    return stopped_value(tree, np.zeros(tree.n_nodes), gap, region)
