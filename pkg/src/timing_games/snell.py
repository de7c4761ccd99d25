"""Snell envelopes and discrete Doob decompositions on event trees.

Values follow the net-of-accumulated-flow convention: ``U[n]`` is the best
expected future flow plus stopped lump from node ``n`` on. The compensator
increment ``dD[n]`` is charged when leaving ``n`` and equals the expected
one-step loss from waiting there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DEFAULT_TOL, EventTree


@dataclass(frozen=True, eq=False)
class SnellSolution:
    tree: EventTree
    U: np.ndarray
    dD: np.ndarray
    stop_flag: np.ndarray
    absorbing: np.ndarray
    tol: float = DEFAULT_TOL

    @property
    def D_cum(self) -> np.ndarray:
        """Compensator accumulated from the root, excluding the node's own increment.

        Only defined when every node has a unique parent; on recombining
        lattices the sum depends on the path, so use ``compensator_along``.
        """
        par = self.tree.parents()
        out = np.zeros(self.tree.n_nodes)
        for t in range(1, self.tree.n_stages):
            sl = self.tree.stage_slice(t)
            p = par[sl]
            out[sl] = out[p] + self.dD[p]
        return out

    @property
    def MG(self) -> np.ndarray:
        return self.U + self.D_cum

    def compensator_along(self, path) -> np.ndarray:
        idx = np.asarray(path, dtype=np.int64)
        return np.concatenate([[0.0], np.cumsum(self.dD[idx[:-1]])])


@dataclass(frozen=True)
class StopTimes:
    """Earliest and latest optimal stopping times from ``start``.

    ``tau_min``/``tau_max`` list the nodes where they stop; the regions are
    the underlying node sets, entered for the first time along each path.
    """

    start: int
    tau_min: np.ndarray
    tau_max: np.ndarray
    region_min: np.ndarray
    region_max: np.ndarray


def snell_envelope(
    tree: EventTree,
    flow: np.ndarray,
    lump: np.ndarray,
    absorbing: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
) -> SnellSolution:
    """Backward induction U = max(lump, flow + E[U next]).

    Nodes in ``absorbing`` freeze the process: U = lump there and no
    compensator is charged, as at terminal nodes.
    """
    flow = np.asarray(flow, dtype=float)
    lump = np.asarray(lump, dtype=float)
    n = tree.n_nodes
    if flow.shape != (n,) or lump.shape != (n,):
        raise ValueError("flow and lump need one value per node")
    if not (np.all(np.isfinite(flow)) and np.all(np.isfinite(lump))):
        raise ValueError("flow and lump must be finite")
    absorbing = np.zeros(n, dtype=bool) if absorbing is None else np.asarray(absorbing, bool)

    U = np.empty(n)
    dD = np.zeros(n)
    sl = tree.stage_slice(tree.horizon)
    U[sl] = lump[sl]
    for t in range(tree.horizon - 1, -1, -1):
        sl = tree.stage_slice(t)
        cont = flow[sl] + tree.expect(U, t)
        u = np.maximum(lump[sl], cont)
        inc = u - cont
        frozen = absorbing[sl]
        u = np.where(frozen, lump[sl], u)
        inc = np.where(frozen, 0.0, inc)
        U[sl] = u
        dD[sl] = inc
    stop = (U - lump <= tol) | absorbing
    return SnellSolution(tree, U, dD, stop, absorbing | tree.is_terminal(), tol)


def optimal_stop_times(sol: SnellSolution, start: int = 0) -> StopTimes:
    tree = sol.tree
    tree.check_node(start)
    region_min = sol.stop_flag.copy()
    region_max = (sol.dD > sol.tol) | sol.absorbing
    tmin = tree.first_hit(region_min, start)
    tmax = tree.first_hit(region_max, start)
    return StopTimes(
        start=int(start),
        tau_min=np.nonzero(tmin)[0],
        tau_max=np.nonzero(tmax)[0],
        region_min=region_min,
        region_max=region_max,
    )


def stopped_value(
    tree: EventTree, flow: np.ndarray, lump: np.ndarray, region: np.ndarray
) -> np.ndarray:
    """Value of stopping on first entry into ``region`` (terminal nodes always stop)."""
    region = np.asarray(region, dtype=bool)
    V = np.empty(tree.n_nodes)
    sl = tree.stage_slice(tree.horizon)
    V[sl] = lump[sl]
    for t in range(tree.horizon - 1, -1, -1):
        sl = tree.stage_slice(t)
        cont = flow[sl] + tree.expect(V, t)
        V[sl] = np.where(region[sl], lump[sl], cont)
    return V


def doob_meyer_residuals(
    sol: SnellSolution, tree: EventTree, flow: np.ndarray, lump: np.ndarray
) -> dict[str, float]:
    """Checks of the decomposition U = MG - D_cum.

    The martingale residual is taken in the MG form when parents are unique
    and node-locally (U + dD - flow - E[U next]) otherwise; the two agree on
    trees. Absorbing nodes are skipped since the process is frozen there.
    """
    flow = np.asarray(flow, dtype=float)
    lump = np.asarray(lump, dtype=float)
    inner = ~sol.absorbing
    if tree.has_unique_parents():
        mg = sol.MG
        target = tree.continuation(flow, mg)
        resid = np.abs(mg - target)[inner]
    else:
        target = tree.continuation(flow, sol.U)
        resid = np.abs(sol.U + sol.dD - target)[inner]
    return {
        "max_martingale_residual": float(resid.max(initial=0.0)),
        "min_compensator_increment": float(sol.dD.min(initial=0.0)),
        "max_flat_off_contact_violation": float(np.max(sol.dD * np.abs(sol.U - lump), initial=0.0)),
    }
