"""Payoff bound and the efficient payoff-symmetric equilibrium.

When a joint stop never beats either role (``both <= min(leader,
follower)``), no payoff-symmetric equilibrium pays more than the Snell
envelope of ``min(leader, follower)``. The efficient equilibrium comes close
to that bound by suppressing preemption wherever the leader payoff does not
exceed what the players can sustain by waiting. The frontier is the set of
nodes where preemption can no longer be held off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import DEFAULT_TOL, TimingGame
from .preemption import preemption_alphas, symmetric_preemption_payoff
from .snell import SnellSolution, snell_envelope
from .strategy import Equilibrium, ExtendedStrategy


class HypothesisError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FrontierResult:
    iterates: list[np.ndarray]
    tilde_tau: np.ndarray
    constrained_envelope: SnellSolution
    value_at: np.ndarray
    checks: dict = field(default_factory=dict)


def _check_competitive(game: TimingGame, tol: float) -> None:
    p = game.pay
    bad = p.both > np.minimum(p.leader, p.follower) + tol
    if bad.any():
        k = int(np.argmax(bad))
        raise HypothesisError(
            f"hypothesis M <= min(L,F) violated at node {game.tree.labels[k]}"
        )


def payoff_bound(game: TimingGame, tol: float = DEFAULT_TOL) -> SnellSolution:
    """Envelope of min(leader, follower) with the game's flow."""
    _check_competitive(game, tol)
    p = game.pay
    return snell_envelope(game.tree, p.flow, np.minimum(p.leader, p.follower), tol=tol)


def preemption_frontier(game: TimingGame, tol: float = DEFAULT_TOL) -> FrontierResult:
    """Grow the preemption region until the leader payoff is sustainable outside it.

    Each pass freezes the min-process on the current region, recomputes its
    envelope and adds every node where leading beats that envelope.
    """
    _check_competitive(game, tol)
    tree, p = game.tree, game.pay
    low = np.minimum(p.leader, p.follower)
    inner = ~tree.is_terminal()
    sol = snell_envelope(tree, p.flow, low, tol=tol)
    region = inner & (p.leader > sol.U + tol)
    iterates = [region]
    for _ in range(tree.n_nodes + 1):
        sol = snell_envelope(tree, p.flow, low, absorbing=region, tol=tol)
        grown = region | (inner & (p.leader > sol.U + tol))
        iterates.append(grown)
        if np.array_equal(grown, region):
            break
        region = grown
    else:  # pragma: no cover - the region grows by at least one node per pass
        raise RuntimeError("frontier did not stabilize")

    outside = inner & ~region
    checks = {
        "max_leader_excess_before": float(np.max(p.leader[outside] - sol.U[outside], initial=-np.inf)),
        "min_leader_minus_follower_at": float(
            np.min(p.leader[region] - p.follower[region], initial=np.inf)
        ),
        "iterations": len(iterates) - 1,
    }
    return FrontierResult(iterates, region, sol, sol.U.copy(), checks)


def _paper_efficient(game: TimingGame, tol: float):
    fr = preemption_frontier(game, tol=tol)
    tree, p = game.tree, game.pay
    dD = fr.constrained_envelope.dD
    region = fr.tilde_tau.copy()
    live = ~region & ~tree.is_terminal()
    gap = p.follower - p.leader
    hazard = np.zeros(tree.n_nodes)
    spread = live & (gap > tol)
    hazard[spread] = dD[spread] / (gap[spread] + dD[spread])
    # tied roles with a loss from waiting: stop jointly if that pays the follower
    # payoff, otherwise coordinate on an even split of the roles
    tie = live & (np.abs(gap) <= tol) & (dD > tol)
    hazard[tie] = 1.0
    region |= tie & (p.both < p.follower - tol)
    hazard[region] = 1.0
    alpha = np.where(region, preemption_alphas(p.leader, p.follower, p.both), 0.0)
    return hazard, alpha, fr.value_at, region, fr


def _exact_efficient(game: TimingGame, tol: float):
    """Backward pass: preempt only where waiting cannot match the leader payoff."""
    tree, p = game.tree, game.pay
    n = tree.n_nodes
    hazard = np.zeros(n)
    alpha = np.zeros(n)
    region = np.zeros(n, dtype=bool)
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
        preempt = binds & (ell >= f - tol)
        a = np.where(preempt, preemption_alphas(ell, f, m), 0.0)
        g = np.where(preempt, 1.0, g)
        v = np.where(preempt, symmetric_preemption_payoff(ell, f, m, a), v)
        hazard[sl] = g
        alpha[sl] = a
        V[sl] = v
        region[sl] = preempt
    return hazard, alpha, V, region


def efficient_equilibrium(
    game: TimingGame,
    mode: str = "exact_discrete",
    tol: float = DEFAULT_TOL,
    diagnose: bool = True,
) -> Equilibrium:
    """Symmetric strategies that suppress preemption before the frontier."""
    _check_competitive(game, tol)
    extras = {}
    if mode == "paper_formula":
        hazard, alpha, values, region, fr = _paper_efficient(game, tol)
        extras["frontier"] = fr
    elif mode == "exact_discrete":
        hazard, alpha, values, region = _exact_efficient(game, tol)
    else:
        raise ValueError(f"unknown hazard mode {mode!r}")
    extras["preemption_region"] = region
    eq = Equilibrium(
        kind="efficient",
        hazard_mode=mode,
        strategies=(
            ExtendedStrategy(hazard, alpha, 1, region),
            ExtendedStrategy(hazard.copy(), alpha.copy(), 2, region.copy()),
        ),
        values=(values, values.copy()),
        extras=extras,
    )
    if diagnose:
        from .verify import equilibrium_diagnostics

        eq.diagnostics = equilibrium_diagnostics(game, *eq.strategies, tol=tol)
    return eq
