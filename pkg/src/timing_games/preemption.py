"""Preemption intensities, coordination outcomes and the symmetric equilibrium.

When a node offers a first-mover advantage, both players stop with
probability one and an intensity ``alpha`` in ``[0, 1]`` decides who ends up
leading. Two intensities ``x`` and ``y`` produce a lead for the first player with
probability ``mu_leader(x, y)`` and a simultaneous stop with ``mu_both(x, y)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DEFAULT_TOL, TimingGame
from .strategy import Equilibrium, ExtendedStrategy


def mu_leader(x, y):
    """Probability that the player with intensity ``x`` leads against ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return x * (1.0 - y) / (x + y - x * y)


def mu_both(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return x * y / (x + y - x * y)


@dataclass(frozen=True)
class OutcomeDistribution:
    lambda_L_i: float
    lambda_L_j: float
    lambda_M: float
    survival: float

    def payoff(self, leader: float, follower: float, both: float) -> float:
        """Expected payoff to player i given the roles' lumps."""
        return self.lambda_L_i * leader + self.lambda_L_j * follower + self.lambda_M * both


def _unit(name: str, v: float) -> float:
    v = float(v)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name}={v} outside [0, 1]")
    return v


def outcome_distribution(
    alpha_i: float,
    alpha_j: float,
    g_i_pre: float = 0.0,
    g_j_pre: float = 0.0,
    jump_i: float = 0.0,
    jump_j: float = 0.0,
) -> OutcomeDistribution:
    """Outcome probabilities at the node where the stopping phase ends.

    ``g_*_pre`` are the stopping probabilities accumulated before the node.
    ``jump_*`` is the extra stopping mass a player without intensity puts
    on this node. It is ignored for a player whose intensity is positive,
    since that player stops surely. With both intensities zero the node is
    treated as a tie between leader and follower and split evenly.
    """
    ai, aj = _unit("alpha_i", alpha_i), _unit("alpha_j", alpha_j)
    gi, gj = _unit("g_i_pre", g_i_pre), _unit("g_j_pre", g_j_pre)
    ji, jj = _unit("jump_i", jump_i), _unit("jump_j", jump_j)
    si, sj = 1.0 - gi, 1.0 - gj
    if ji > si or jj > sj:
        raise ValueError("jump exceeds the remaining stopping mass")
    mass = si * sj
    if ai > 0.0 and aj > 0.0:
        li = mass * float(mu_leader(ai, aj))
        lj = mass * float(mu_leader(aj, ai))
        lm = mass * float(mu_both(ai, aj))
    elif ai > 0.0:
        li = si * (sj - jj)
        lm = si * ai * jj
        lj = si * (1.0 - ai) * jj
    elif aj > 0.0:
        lj = sj * (si - ji)
        lm = sj * aj * ji
        li = sj * (1.0 - aj) * ji
    else:
        li = lj = 0.5 * mass
        lm = 0.0
    return OutcomeDistribution(li, lj, lm, 1.0 - (li + lj + lm))


def outcome_weights(alpha_i, alpha_j, hazard_i, hazard_j, active_i=None, active_j=None):
    """Vectorized outcome probabilities at preemption nodes, given survival.

    ``active_*`` marks players who stop surely with their intensity; an
    active player with zero intensity uses the vanishing-intensity limit.
    Inactive players stop with their hazard. Defaults: active iff alpha > 0.
    """
    ai = np.asarray(alpha_i, dtype=float)
    aj = np.asarray(alpha_j, dtype=float)
    hi = np.asarray(hazard_i, dtype=float)
    hj = np.asarray(hazard_j, dtype=float)
    pi = ai > 0 if active_i is None else np.asarray(active_i, dtype=bool) | (ai > 0)
    pj = aj > 0 if active_j is None else np.asarray(active_j, dtype=bool) | (aj > 0)
    both = pi & pj
    with np.errstate(invalid="ignore", divide="ignore"):
        denom = ai + aj - ai * aj
        mli = ai * (1 - aj) / denom
        mlj = aj * (1 - ai) / denom
        mm = ai * aj / denom
    # vanishing intensities: the positive one leads surely, two of them split evenly
    zero_i, zero_j = ai == 0, aj == 0
    mli = np.where(zero_i & zero_j, 0.5, np.where(zero_j, 1.0, np.where(zero_i, 0.0, mli)))
    mlj = np.where(zero_i & zero_j, 0.5, np.where(zero_i, 1.0, np.where(zero_j, 0.0, mlj)))
    mm = np.where(zero_i | zero_j, 0.0, mm)
    only_i = pi & ~pj
    only_j = pj & ~pi
    li = np.where(both, mli, np.where(only_i, 1 - hj, np.where(only_j, (1 - aj) * hi, 0.0)))
    lj = np.where(both, mlj, np.where(only_j, 1 - hi, np.where(only_i, (1 - ai) * hj, 0.0)))
    lm = np.where(both, mm, np.where(only_i, ai * hj, np.where(only_j, aj * hi, 0.0)))
    return li, lj, lm


def preemption_alpha(leader: float, follower: float, both: float, at_boundary: bool = False) -> float:
    """Intensity that makes the opponent indifferent between leading and following."""
    ell, f, m = float(leader), float(follower), float(both)
    if m >= f and (at_boundary or ell > f):
        return 1.0
    if ell > f:
        # m < f < ell here, so the denominator is positive
        return (ell - f) / (ell - m)
    if ell == f == m:
        return 1.0
    return 0.0


def preemption_alphas(leader, follower, both, at_boundary: bool = True) -> np.ndarray:
    """Vectorized ``preemption_alpha``."""
    ell = np.asarray(leader, dtype=float)
    f = np.asarray(follower, dtype=float)
    m = np.asarray(both, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = (ell - f) / (ell - m)
    one = ((m >= f) & (at_boundary | (ell > f))) | ((ell == f) & (f == m))
    return np.where(one, 1.0, np.where(ell > f, ratio, 0.0))


def symmetric_preemption_payoff(leader, follower, both, alpha) -> np.ndarray:
    """Payoff when both players preempt with the same intensity (zero means the even split)."""
    a = np.asarray(alpha, dtype=float)
    ones = np.ones_like(a)
    li, lj, lm = outcome_weights(a, a, ones, ones, ones > 0, ones > 0)
    return li * leader + lj * follower + lm * both


def preemption_value(leader: float, follower: float, both: float, tol: float = DEFAULT_TOL) -> float:
    """Value of a preemption node, max(follower, both), cross-checked against the outcome map."""
    ell, f, m = float(leader), float(follower), float(both)
    if not (ell >= f - tol or m >= f - tol):
        raise ValueError("node has no first-mover advantage and no simultaneous-stop premium")
    a = preemption_alpha(ell, f, m, at_boundary=True)
    out = outcome_distribution(a, a)
    realized = out.payoff(ell, f, m)
    value = max(f, m)
    if abs(realized - value) > tol * (1.0 + abs(value)):
        raise ArithmeticError(f"outcome payoff {realized} differs from {value}")
    return value


def symmetric_equilibrium(
    game: TimingGame,
    mode: str = "exact_discrete",
    include_ties: bool = False,
    tol: float = DEFAULT_TOL,
) -> Equilibrium:
    """Attrition hazards before the first advantage node, preemption at it.

    At endpoint nodes both players stop with the intensity of
    ``preemption_alpha``. Elsewhere they use the attrition hazards for the
    chosen mode. Values are the envelope of the modified leader process
    (``paper_formula``) or the exact discrete values (``exact_discrete``).
    """
    from .attrition import attrition_plan, attrition_solution

    plan = attrition_plan(game, include_ties=include_ties, tol=tol)
    hazard, values = attrition_solution(game, plan, mode, tol=tol)
    pay = game.pay
    ends = plan.endpoint_flag
    alpha = np.where(ends, preemption_alphas(pay.leader, pay.follower, pay.both), 0.0)
    hazard = hazard.copy()
    hazard[ends] = 1.0
    s1 = ExtendedStrategy(hazard, alpha, 1)
    s2 = ExtendedStrategy(hazard.copy(), alpha.copy(), 2)
    return Equilibrium(
        kind="symmetric",
        hazard_mode=mode,
        strategies=(s1, s2),
        values=(values, values.copy()),
        extras={"endpoint_flag": plan.endpoint_flag, "plan": plan},
    )
