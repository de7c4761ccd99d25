"""Equilibrium checks: exact values, best replies, diagnostics and Monte Carlo."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .model import DEFAULT_TOL, TimingGame
from .preemption import outcome_weights
from .strategy import ExtendedStrategy

BLOCK_SIZE = 8192


@dataclass(frozen=True, eq=False)
class ValueField:
    """Values conditional on reaching each node with nobody stopped yet."""

    V1: np.ndarray
    V2: np.ndarray


@dataclass(frozen=True, eq=False)
class BestReplyField:
    best_value: np.ndarray
    stop_value: np.ndarray
    wait_value: np.ndarray
    gap: np.ndarray


@dataclass
class Diagnostics:
    max_payoff_asymmetry: float
    max_indifference_violation: float
    max_best_reply_gap: float
    bound_violation: float | None
    mc_value: tuple[float, float] | None = None
    mc_stderr: tuple[float, float] | None = None
    bound_checked: bool = False
    worst_node: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _alpha_nodes(s1: ExtendedStrategy, s2: ExtendedStrategy) -> np.ndarray:
    return s1.preempt | s2.preempt


def game_value(game: TimingGame, strat_i: ExtendedStrategy, strat_j: ExtendedStrategy) -> ValueField:
    """Backward recursion of both players' payoffs under a strategy pair."""
    tree, p = game.tree, game.pay
    strat_i.validate(tree)
    strat_j.validate(tree)
    n = tree.n_nodes
    V1 = np.empty(n)
    V2 = np.empty(n)
    sl = tree.stage_slice(tree.horizon)
    V1[sl] = V2[sl] = p.leader[sl]
    pre = _alpha_nodes(strat_i, strat_j)
    for t in range(tree.horizon - 1, -1, -1):
        sl = tree.stage_slice(t)
        ell, f, m = p.leader[sl], p.follower[sl], p.both[sl]
        h1, h2 = strat_i.hazard[sl], strat_j.hazard[sl]
        c1 = p.flow[sl] + tree.expect(V1, t)
        c2 = p.flow[sl] + tree.expect(V2, t)
        v1 = h1 * h2 * m + h1 * (1 - h2) * ell + (1 - h1) * h2 * f + (1 - h1) * (1 - h2) * c1
        v2 = h1 * h2 * m + h2 * (1 - h1) * ell + (1 - h2) * h1 * f + (1 - h1) * (1 - h2) * c2
        a = pre[sl]
        if a.any():
            li, lj, lm = outcome_weights(
                strat_i.alpha[sl][a], strat_j.alpha[sl][a], h1[a], h2[a],
                strat_i.preempt[sl][a], strat_j.preempt[sl][a],
            )
            v1[a] = li * ell[a] + lj * f[a] + lm * m[a]
            v2[a] = lj * ell[a] + li * f[a] + lm * m[a]
        V1[sl] = v1
        V2[sl] = v2
    return ValueField(V1, V2)


def best_reply_value(
    game: TimingGame, opponent: ExtendedStrategy, own: ExtendedStrategy | None = None
) -> BestReplyField:
    """Optimal stopping against a fixed opponent.

    Deviations range over stopping or waiting at each node. At nodes where
    the opponent preempts, the deviator may also stop with or without its own
    intensity. ``gap`` compares with ``own`` when given and is NaN otherwise.
    """
    tree, p = game.tree, game.pay
    opponent.validate(tree)
    n = tree.n_nodes
    W = np.empty(n)
    S = np.empty(n)
    C = np.empty(n)
    sl = tree.stage_slice(tree.horizon)
    W[sl] = S[sl] = C[sl] = p.leader[sl]
    for t in range(tree.horizon - 1, -1, -1):
        sl = tree.stage_slice(t)
        ell, f, m = p.leader[sl], p.follower[sl], p.both[sl]
        h, a = opponent.hazard[sl], opponent.alpha[sl]
        cont = p.flow[sl] + tree.expect(W, t)
        stop = h * m + (1 - h) * ell
        wait = h * f + (1 - h) * cont
        # against a preempting opponent, stopping with any own intensity pays at most this
        pre = opponent.preempt[sl]
        stop = np.where(pre, (1 - a) * ell + a * m, stop)
        wait = np.where(pre, f, wait)
        S[sl] = stop
        C[sl] = wait
        W[sl] = np.maximum(stop, wait)
    if own is None:
        gap = np.full(n, np.nan)
    else:
        gap = W - game_value(game, own, opponent).V1
    return BestReplyField(W, S, C, gap)


def _indifference(game: TimingGame, me: ExtendedStrategy, other: ExtendedStrategy, V: np.ndarray):
    tree, p = game.tree, game.pay
    cont = tree.continuation(p.flow, V)
    h = other.hazard
    stop = h * p.both + (1 - h) * p.leader
    wait = h * p.follower + (1 - h) * cont
    mixing = (me.hazard > 0) & (me.hazard < 1) & ~_alpha_nodes(me, other) & ~tree.is_terminal()
    return np.where(mixing, np.abs(stop - wait), 0.0)


def equilibrium_diagnostics(
    game: TimingGame,
    strat1: ExtendedStrategy,
    strat2: ExtendedStrategy,
    tol: float = DEFAULT_TOL,
) -> Diagnostics:
    vf = game_value(game, strat1, strat2)
    gap1 = best_reply_value(game, strat2).best_value - vf.V1
    gap2 = best_reply_value(game, strat1).best_value - vf.V2
    gap = np.maximum(gap1, gap2)
    ind = np.maximum(
        _indifference(game, strat1, strat2, vf.V1), _indifference(game, strat2, strat1, vf.V2)
    )
    p = game.pay
    bound = None
    checked = bool(np.all(p.both <= np.minimum(p.leader, p.follower) + tol))
    if checked:
        from .efficient import payoff_bound

        U = payoff_bound(game, tol=tol).U
        bound = float(np.max(np.maximum(vf.V1, vf.V2) - U))
    worst = int(np.argmax(gap))
    return Diagnostics(
        max_payoff_asymmetry=float(np.max(np.abs(vf.V1 - vf.V2))),
        max_indifference_violation=float(ind.max()),
        max_best_reply_gap=float(gap.max()),
        bound_violation=bound,
        bound_checked=checked,
        worst_node=int(game.tree.labels[worst]),
    )


@dataclass(frozen=True)
class SimulationResult:
    V1: float
    V2: float
    stderr1: float
    stderr2: float
    n_paths: int

    def to_dict(self) -> dict:
        return asdict(self)


def _simulate_block(game: TimingGame, s1, s2, size: int, seed_seq) -> np.ndarray:
    tree, p = game.tree, game.pay
    rng = np.random.default_rng(seed_seq)
    node = np.zeros(size, dtype=np.int64)
    alive = np.ones(size, dtype=bool)
    acc = np.zeros(size)
    out = np.zeros((size, 2))
    pre = _alpha_nodes(s1, s2)
    for t in range(tree.horizon + 1):
        u = rng.random((size, 3))
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        nd = node[idx]
        ell, f, m = p.leader[nd], p.follower[nd], p.both[nd]
        if t == tree.horizon:
            out[idx, 0] = acc[idx] + ell
            out[idx, 1] = acc[idx] + ell
            break
        h1, h2 = s1.hazard[nd], s2.hazard[nd]
        stop1 = u[idx, 0] < h1
        stop2 = u[idx, 1] < h2
        first1 = stop1 & ~stop2
        first2 = stop2 & ~stop1
        joint = stop1 & stop2
        a = pre[nd]
        if a.any():
            na = nd[a]
            li, lj, lm = outcome_weights(
                s1.alpha[na], s2.alpha[na], h1[a], h2[a], s1.preempt[na], s2.preempt[na]
            )
            r = u[idx[a], 0]
            first1[a] = r < li
            first2[a] = (r >= li) & (r < li + lj)
            joint[a] = r >= li + lj
        pay1 = np.where(joint, m, np.where(first1, ell, f))
        pay2 = np.where(joint, m, np.where(first2, ell, f))
        ended = first1 | first2 | joint
        done = idx[ended]
        out[done, 0] = acc[done] + pay1[ended]
        out[done, 1] = acc[done] + pay2[ended]
        alive[done] = False
        go = idx[~ended]
        if go.size == 0:
            break
        gnd = node[go]
        acc[go] += p.flow[gnd]
        layer = tree.layers[t]
        local = gnd - tree.stage_start[t]
        cum = np.cumsum(layer.prob[local], axis=1)
        pick = (u[go, 2][:, None] >= cum).sum(axis=1)
        pick = np.minimum(pick, layer.child.shape[1] - 1)
        node[go] = tree.stage_start[t + 1] + layer.child[local, pick]
    return out


def _block_stats(x: np.ndarray) -> tuple[int, np.ndarray, np.ndarray]:
    n = x.shape[0]
    mean = x.mean(axis=0)
    flat = np.all(x == x[0], axis=0)
    mean = np.where(flat, x[0], mean)
    m2 = ((x - mean) ** 2).sum(axis=0)
    return n, mean, np.where(flat, 0.0, m2)


def simulate(
    game: TimingGame,
    strat1: ExtendedStrategy,
    strat2: ExtendedStrategy,
    n_paths: int,
    seed: int,
    block_size: int = BLOCK_SIZE,
    threads: int | None = None,
) -> SimulationResult:
    """Monte Carlo payoffs from the root.

    Paths are split into fixed-size blocks, each with its own spawned seed,
    so results do not depend on how blocks are scheduled across threads.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    strat1.validate(game.tree)
    strat2.validate(game.tree)
    sizes = [block_size] * (n_paths // block_size)
    if n_paths % block_size:
        sizes.append(n_paths % block_size)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    if threads is None:
        threads = int(os.environ.get("TIMING_GAMES_THREADS", "1"))

    def run(k):
        return _block_stats(_simulate_block(game, strat1, strat2, sizes[k], seeds[k]))

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            stats = list(pool.map(run, range(len(sizes))))
    else:
        stats = [run(k) for k in range(len(sizes))]

    # pairwise merge of block means and squared deviations, in block order
    n, mean, m2 = stats[0]
    for nb, mb, m2b in stats[1:]:
        tot = n + nb
        delta = mb - mean
        mean = mean + delta * (nb / tot)
        m2 = m2 + m2b + delta**2 * (n * nb / tot)
        n = tot
    if n > 1:
        se = np.sqrt(m2 / (n - 1) / n)
    else:
        se = np.zeros(2)
    return SimulationResult(float(mean[0]), float(mean[1]), float(se[0]), float(se[1]), int(n))
