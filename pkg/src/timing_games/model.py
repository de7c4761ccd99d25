"""Event trees and stopping-game payoff data.

A game lives on a finite event tree with stages ``0..T``. Nodes are stored in
canonical order (by stage, then by original id), so every stage occupies a
contiguous block of indices. All public functions take canonical indices;
the original ids are kept in ``EventTree.labels`` for I/O.

Payoffs use a common-flow plus role-lump layout: ``flow[n]`` is earned only
if the game continues past ``n``, and ``leader``/``follower``/``both`` are
the lumps paid when the game ends at ``n``. Along a path the cumulative
processes are ``L_t = sum(flow[s] for s < t) + leader[t]`` and likewise for
the follower and simultaneous-stop payoffs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Sequence

import numpy as np

PROB_TOL = 1e-12
DEFAULT_TOL = 1e-9


class GameSpecError(ValueError):
    """Malformed or inconsistent game description."""


@dataclass(frozen=True)
class Layer:
    """Transitions from one stage to the next.

    ``child[k, j]`` is the index (local to the next stage) of the j-th child of
    the k-th node of this stage and ``prob[k, j]`` its probability. Rows are
    zero-padded to the widest node of the stage.
    """

    child: np.ndarray
    prob: np.ndarray

    def expect(self, nxt: np.ndarray) -> np.ndarray:
        """Conditional expectation of a next-stage field for every node of this stage."""
        return (self.prob * nxt[self.child]).sum(axis=1)


@dataclass(frozen=True, eq=False)
class EventTree:
    labels: np.ndarray
    stage_start: np.ndarray
    layers: tuple[Layer, ...]
    state: np.ndarray
    recombining: bool = False
    _parent: list = field(default_factory=list, repr=False)

    @property
    def horizon(self) -> int:
        return len(self.stage_start) - 2

    @property
    def n_stages(self) -> int:
        return self.horizon + 1

    @property
    def n_nodes(self) -> int:
        return int(self.stage_start[-1])

    @property
    def root(self) -> int:
        return 0

    def stage_slice(self, t: int) -> slice:
        return slice(int(self.stage_start[t]), int(self.stage_start[t + 1]))

    def stage_size(self, t: int) -> int:
        return int(self.stage_start[t + 1] - self.stage_start[t])

    def stage_of(self, node: int) -> int:
        self.check_node(node)
        return int(np.searchsorted(self.stage_start, node, side="right") - 1)

    def stages(self) -> np.ndarray:
        """Stage index of every node."""
        sizes = np.diff(self.stage_start)
        return np.repeat(np.arange(self.n_stages), sizes)

    def is_terminal(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.stage_slice(self.horizon)] = True
        return mask

    def check_node(self, node: int) -> None:
        if not (0 <= int(node) < self.n_nodes):
            raise KeyError(f"unknown node {node}")

    def children(self, node: int) -> list[tuple[int, float]]:
        t = self.stage_of(node)
        if t == self.horizon:
            return []
        layer = self.layers[t]
        k = node - int(self.stage_start[t])
        base = int(self.stage_start[t + 1])
        return [
            (base + int(c), float(p))
            for c, p in zip(layer.child[k], layer.prob[k])
            if p > 0.0
        ]

    def expect(self, values: np.ndarray, t: int) -> np.ndarray:
        """E[values(children)] for every node of stage ``t < T``."""
        return self.layers[t].expect(values[self.stage_slice(t + 1)])

    def continuation(self, flow: np.ndarray, values: np.ndarray) -> np.ndarray:
        """flow + E[values(children)] at every node; NaN at terminal nodes."""
        out = np.full(self.n_nodes, np.nan)
        for t in range(self.horizon):
            sl = self.stage_slice(t)
            out[sl] = flow[sl] + self.expect(values, t)
        return out

    def parents(self) -> np.ndarray:
        """Unique parent of every node (-1 at the root).

        Raises on recombining trees, where a node can have several parents.
        """
        if self._parent:
            if isinstance(self._parent[0], Exception):
                raise self._parent[0]
            return self._parent[0]
        par = np.full(self.n_nodes, -1, dtype=np.int64)
        for t, layer in enumerate(self.layers):
            base = int(self.stage_start[t])
            rows, cols = np.nonzero(layer.prob > 0.0)
            kids = layer.child[rows, cols]
            counts = np.bincount(kids, minlength=self.stage_size(t + 1))
            if np.any(counts > 1):
                g = int(self.stage_start[t + 1]) + int(np.argmax(counts > 1))
                err = ValueError(f"node {g} has several parents")
                self._parent.append(err)
                raise err
            par[int(self.stage_start[t + 1]) + kids] = base + rows
        self._parent.append(par)
        return par

    def has_unique_parents(self) -> bool:
        try:
            self.parents()
        except ValueError:
            return False
        return True

    def reachable(self, start: int = 0) -> np.ndarray:
        """Mask of nodes reachable from ``start`` (inclusive)."""
        t0 = self.stage_of(start)
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[start] = True
        for t in range(t0, self.horizon):
            cur = mask[self.stage_slice(t)]
            if not cur.any():
                break
            layer = self.layers[t]
            nxt = np.zeros(self.stage_size(t + 1), dtype=bool)
            rows = np.nonzero(cur)[0]
            ch = layer.child[rows][layer.prob[rows] > 0.0]
            nxt[ch] = True
            mask[self.stage_slice(t + 1)] = nxt
        return mask

    def first_hit(self, region: np.ndarray, start: int = 0) -> np.ndarray:
        """Nodes where paths from ``start`` first enter ``region``.

        Terminal nodes always count as part of the region.
        """
        region = np.asarray(region, dtype=bool) | self.is_terminal()
        t0 = self.stage_of(start)
        live = np.zeros(self.n_nodes, dtype=bool)
        live[start] = True
        hit = np.zeros(self.n_nodes, dtype=bool)
        for t in range(t0, self.horizon + 1):
            sl = self.stage_slice(t)
            hit[sl] = live[sl] & region[sl]
            if t == self.horizon:
                break
            go = live[sl] & ~region[sl]
            if not go.any():
                break
            layer = self.layers[t]
            rows = np.nonzero(go)[0]
            nxt = np.zeros(self.stage_size(t + 1), dtype=bool)
            nxt[layer.child[rows][layer.prob[rows] > 0.0]] = True
            live[self.stage_slice(t + 1)] = nxt
        return hit

    def paths(self, start: int = 0) -> Iterator[tuple[list[int], float]]:
        """Enumerate (path, probability) from ``start`` to the terminal stage.

        Exponential in the horizon; meant for small trees and oracles.
        """
        stack = [([start], 1.0)]
        while stack:
            path, pr = stack.pop()
            kids = self.children(path[-1])
            if not kids:
                yield path, pr
                continue
            for c, p in reversed(kids):
                stack.append((path + [c], pr * p))

    def subtree(self, start: int) -> tuple["EventTree", np.ndarray]:
        """Tree of nodes reachable from ``start``, re-rooted at stage 0.

        Returns the new tree and, for each new node, its index in this tree.
        """
        mask = self.reachable(start)
        t0 = self.stage_of(start)
        keep = np.nonzero(mask)[0]
        new_index = np.full(self.n_nodes, -1, dtype=np.int64)
        new_index[keep] = np.arange(len(keep))
        starts = [0]
        layers = []
        for t in range(t0, self.horizon + 1):
            sl = self.stage_slice(t)
            idx = np.nonzero(mask[sl])[0]
            starts.append(starts[-1] + len(idx))
            if t == self.horizon:
                break
            layer = self.layers[t]
            nsl = self.stage_slice(t + 1)
            local = new_index[nsl]
            nbase = starts[-1]
            child = layer.child[idx]
            prob = layer.prob[idx]
            mapped = np.where(prob > 0.0, local[child] - nbase, 0)
            layers.append(Layer(mapped.astype(np.int64), np.array(prob, dtype=float)))
        tree = EventTree(
            labels=self.labels[keep].copy(),
            stage_start=np.array(starts, dtype=np.int64),
            layers=tuple(layers),
            state=self.state[keep].copy(),
            recombining=self.recombining,
        )
        return tree, keep


@dataclass(frozen=True, eq=False)
class GamePayoffs:
    flow: np.ndarray
    leader: np.ndarray
    follower: np.ndarray
    both: np.ndarray

    def restrict(self, nodes: np.ndarray) -> "GamePayoffs":
        return GamePayoffs(
            self.flow[nodes], self.leader[nodes], self.follower[nodes], self.both[nodes]
        )

    def scaled(self, factor: float) -> "GamePayoffs":
        return GamePayoffs(
            self.flow * factor, self.leader * factor, self.follower * factor, self.both * factor
        )


@dataclass(frozen=True, eq=False)
class TimingGame:
    """A symmetric stopping game: an event tree plus role payoffs."""

    tree: EventTree
    pay: GamePayoffs

    def __post_init__(self):
        n = self.tree.n_nodes
        for name in ("flow", "leader", "follower", "both"):
            arr = getattr(self.pay, name)
            if arr.shape != (n,):
                raise GameSpecError(f"{name} has shape {arr.shape}, expected ({n},)")
            if not np.all(np.isfinite(arr)):
                bad = int(np.nonzero(~np.isfinite(arr))[0][0])
                raise GameSpecError(f"non-finite {name} at node {self.tree.labels[bad]}")
        term = self.tree.stage_slice(self.tree.horizon)
        p = self.pay
        if not (
            np.array_equal(p.leader[term], p.follower[term])
            and np.array_equal(p.leader[term], p.both[term])
        ):
            raise GameSpecError("terminal nodes need leader = follower = both")

    @property
    def terminal_lump(self) -> np.ndarray:
        return self.pay.leader[self.tree.stage_slice(self.tree.horizon)]

    def subgame(self, start: int) -> tuple["TimingGame", np.ndarray]:
        tree, keep = self.tree.subtree(start)
        return TimingGame(tree, self.pay.restrict(keep)), keep


@dataclass(frozen=True)
class GameSpec:
    """Loaded game description: an explicit game or a duopoly parameter block."""

    kind: str
    explicit: TimingGame | None = None
    duopoly: Any = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.explicit is None) == (self.duopoly is None):
            raise GameSpecError("exactly one of an explicit tree or duopoly parameters is required")

    def game(self) -> TimingGame:
        if self.explicit is not None:
            return self.explicit
        from .duopoly import build_duopoly_game

        terminal = self.options.get("terminal", "analytic")
        return build_duopoly_game(self.duopoly, terminal=terminal).explicit


def build_tree(
    nodes: Sequence[dict],
    *,
    recombining: bool = False,
) -> tuple[EventTree, np.ndarray]:
    """Canonicalize and validate raw node records.

    Each record needs ``id``, ``stage`` and ``children`` (list of
    ``(child_id, prob)``); ``state`` is optional. Returns the tree and the
    permutation from canonical index to input position.
    """
    if not nodes:
        raise GameSpecError("tree has no nodes")
    ids = [int(n["id"]) for n in nodes]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise GameSpecError(f"duplicate node id {dup}")
    stage = {int(n["id"]): int(n["stage"]) for n in nodes}
    order = sorted(range(len(nodes)), key=lambda k: (stage[ids[k]], ids[k]))
    horizon = max(stage.values())
    roots = [i for i in ids if stage[i] == 0]
    if len(roots) != 1:
        raise GameSpecError(f"stage 0 must hold exactly one node, found {len(roots)}")
    if min(stage.values()) < 0:
        raise GameSpecError("negative stage")

    canon = [ids[k] for k in order]
    pos = {nid: j for j, nid in enumerate(canon)}
    counts = np.bincount([stage[i] for i in canon], minlength=horizon + 1)
    if np.any(counts == 0):
        raise GameSpecError(f"stage {int(np.argmin(counts))} has no nodes")
    stage_start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    layers = []
    for t in range(horizon):
        lo, hi = int(stage_start[t]), int(stage_start[t + 1])
        rows = []
        for j in range(lo, hi):
            rec = nodes[order[j]]
            nid = canon[j]
            kids = rec.get("children") or []
            if not kids:
                raise GameSpecError(f"non-terminal node {nid} at stage {t} has no children")
            row = []
            total = 0.0
            seen_kids = set()
            for item in kids:
                try:
                    cid, p = int(item[0]), float(item[1])
                except (TypeError, ValueError, IndexError):
                    raise GameSpecError(f"malformed child entry {item!r} at node {nid}") from None
                if cid not in pos:
                    raise GameSpecError(f"dangling child reference {cid} at node {nid}")
                if cid in seen_kids:
                    raise GameSpecError(f"child {cid} listed twice at node {nid}")
                seen_kids.add(cid)
                if stage[cid] != t + 1:
                    raise GameSpecError(f"child {cid} of node {nid} is not at stage {t + 1}")
                if not (p > 0.0) or not math.isfinite(p):
                    raise GameSpecError(f"non-positive probability {p} at node {nid}")
                row.append((pos[cid] - int(stage_start[t + 1]), p))
                total += p
            if abs(total - 1.0) > PROB_TOL:
                raise GameSpecError(f"probability sum {total:.15g} at node {nid}")
            rows.append(row)
        width = max(len(r) for r in rows)
        child = np.zeros((len(rows), width), dtype=np.int64)
        prob = np.zeros((len(rows), width))
        for k, row in enumerate(rows):
            for j, (c, p) in enumerate(row):
                child[k, j] = c
                prob[k, j] = p
        layers.append(Layer(child, prob))
    for j in range(int(stage_start[horizon]), len(canon)):
        if nodes[order[j]].get("children"):
            raise GameSpecError(f"terminal node {canon[j]} has children")

    state = np.array(
        [np.nan if nodes[k].get("state") is None else float(nodes[k]["state"]) for k in order]
    )
    tree = EventTree(
        labels=np.array(canon, dtype=np.int64),
        stage_start=stage_start,
        layers=tuple(layers),
        state=state,
        recombining=recombining,
    )
    reach = tree.reachable(0)
    if not reach.all():
        bad = int(np.nonzero(~reach)[0][0])
        raise GameSpecError(f"node {tree.labels[bad]} is not reachable from the root")
    return tree, np.array(order, dtype=np.int64)


_NODE_FIELDS = {"id": int, "stage": int}
_PAYOFF_FIELDS = ("flow", "leader", "follower", "both")

SCHEMA_HELP = """\
Game file schema (JSON):
  {"kind": "tree", "stages": T,
   "nodes": [{"id": 0, "stage": 0, "state": 1.0, "children": [[1, 0.5], [2, 0.5]],
              "flow": 0.0, "leader": 0.0, "follower": 2.0, "both": 0.0}, ...],
   "terminal_lump": {"<terminal id>": value, ...}}
  or
  {"kind": "gbm-duopoly", "r": .., "mu": .., "sigma": .., "c": .., "m": .., "y0": ..,
   "horizon": .., "steps": .., "terminal": "analytic" | "zero"}
"""


def _number(rec: dict, key: str, nid: Any, default: float | None = None) -> float:
    if key not in rec or rec[key] is None:
        if default is None:
            raise GameSpecError(f"missing field '{key}' at node {nid}")
        return default
    val = rec[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise GameSpecError(f"field '{key}' must be a number at node {nid}")
    return float(val)


def game_from_dict(doc: dict) -> TimingGame:
    """Explicit tree game from a parsed ``{"kind": "tree", ...}`` document."""
    raw = doc.get("nodes")
    if not isinstance(raw, list):
        raise GameSpecError("field 'nodes' must be a list")
    for rec in raw:
        if not isinstance(rec, dict):
            raise GameSpecError("each node must be an object")
        for key, typ in _NODE_FIELDS.items():
            if key not in rec:
                raise GameSpecError(f"missing field '{key}' at node {rec.get('id', '?')}")
            if isinstance(rec[key], bool) or not isinstance(rec[key], int):
                raise GameSpecError(f"field '{key}' must be an integer at node {rec.get('id')}")
    tree, order = build_tree(raw, recombining=bool(doc.get("recombining", False)))
    if "stages" in doc and int(doc["stages"]) != tree.horizon:
        raise GameSpecError(f"'stages' is {doc['stages']} but the last node stage is {tree.horizon}")

    terminal = doc.get("terminal_lump") or {}
    if not isinstance(terminal, dict):
        raise GameSpecError("field 'terminal_lump' must be an object")
    terminal = {int(k): v for k, v in terminal.items()}
    n = tree.n_nodes
    cols = {k: np.zeros(n) for k in _PAYOFF_FIELDS}
    is_term = tree.is_terminal()
    for j in range(n):
        rec = raw[order[j]]
        nid = int(tree.labels[j])
        if is_term[j]:
            if nid in terminal:
                val = terminal[nid]
                if isinstance(val, bool) or not isinstance(val, (int, float)):
                    raise GameSpecError(f"terminal lump must be a number at node {nid}")
                lump = float(val)
            else:
                lump = _number(rec, "both", nid, default=_number(rec, "leader", nid, default=0.0))
            for key in ("leader", "follower", "both"):
                if key in rec and float(rec[key]) != lump:
                    raise GameSpecError(
                        f"terminal node {nid} has {key}={rec[key]} but terminal lump {lump}"
                    )
                cols[key][j] = lump
            cols["flow"][j] = 0.0
        else:
            for key in _PAYOFF_FIELDS:
                cols[key][j] = _number(rec, key, nid, default=0.0 if key == "flow" else None)
    return TimingGame(tree, GamePayoffs(**cols))


def load_game(document: str | dict) -> GameSpec:
    """Parse and validate a game document (JSON text or an already-parsed dict)."""
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise GameSpecError(f"invalid JSON: {exc}") from None
    else:
        doc = document
    if not isinstance(doc, dict):
        raise GameSpecError("game document must be a JSON object")
    kind = doc.get("kind")
    options = dict(doc.get("options") or {})
    if kind == "tree":
        return GameSpec(kind="tree", explicit=game_from_dict(doc), options=options)
    if kind == "gbm-duopoly":
        from .duopoly import DuopolyParams

        params = DuopolyParams.from_dict(doc)
        if "terminal" in doc:
            options["terminal"] = doc["terminal"]
        return GameSpec(kind="gbm-duopoly", duopoly=params, options=options)
    raise GameSpecError(f"unknown kind {kind!r}; expected 'tree' or 'gbm-duopoly'")


def load_game_file(path: str) -> GameSpec:
    with open(path) as fh:
        return load_game(fh.read())


def game_to_dict(game: TimingGame) -> dict:
    tree, pay = game.tree, game.pay
    nodes = []
    stages = tree.stages()
    terminal = {}
    for j in range(tree.n_nodes):
        nid = int(tree.labels[j])
        rec: dict[str, Any] = {"id": nid, "stage": int(stages[j])}
        if not np.isnan(tree.state[j]):
            rec["state"] = float(tree.state[j])
        kids = tree.children(j)
        rec["children"] = [[int(tree.labels[c]), p] for c, p in kids]
        if kids:
            rec["flow"] = float(pay.flow[j])
            rec["leader"] = float(pay.leader[j])
            rec["follower"] = float(pay.follower[j])
            rec["both"] = float(pay.both[j])
        else:
            terminal[str(nid)] = float(pay.leader[j])
        nodes.append(rec)
    out = {"kind": "tree", "stages": tree.horizon, "nodes": nodes, "terminal_lump": terminal}
    if tree.recombining:
        out["recombining"] = True
    return out


def dump_game(spec: GameSpec | TimingGame) -> str:
    """Serialize to JSON; floats use shortest round-trip repr, so reloads are exact."""
    if isinstance(spec, TimingGame):
        doc = game_to_dict(spec)
    elif spec.explicit is not None:
        doc = game_to_dict(spec.explicit)
    else:
        doc = {"kind": "gbm-duopoly", **spec.duopoly.to_dict()}
        if "terminal" in spec.options:
            doc["terminal"] = spec.options["terminal"]
    if isinstance(spec, GameSpec) and spec.options:
        doc["options"] = {k: v for k, v in spec.options.items() if k != "terminal"} or None
        if doc["options"] is None:
            del doc["options"]
    return json.dumps(doc)


def cumulative_payoffs(
    tree: EventTree, pay: GamePayoffs, path: Sequence[int]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cumulative leader, follower and simultaneous payoffs along a root chain."""
    path = [int(p) for p in path]
    if not path or path[0] != tree.root:
        raise ValueError("path must start at the root")
    for a, b in zip(path, path[1:]):
        if b not in {c for c, _ in tree.children(a)}:
            raise ValueError(f"node {b} is not a child of node {a}")
    idx = np.array(path)
    acc = np.concatenate([[0.0], np.cumsum(pay.flow[idx[:-1]])])
    return acc + pay.leader[idx], acc + pay.follower[idx], acc + pay.both[idx]


def chain_tree(n_stages: int) -> EventTree:
    """Deterministic tree: one node per stage."""
    nodes = [
        {"id": t, "stage": t, "children": [[t + 1, 1.0]] if t + 1 < n_stages else []}
        for t in range(n_stages)
    ]
    return build_tree(nodes)[0]


def chain_game(
    leader: Iterable[float],
    follower: Iterable[float] | None = None,
    both: Iterable[float] | None = None,
    flow: Iterable[float] | None = None,
) -> TimingGame:
    """Deterministic game from per-stage lumps.

    The last entry is the terminal lump and must agree across roles.
    """
    ell = np.asarray(list(leader), dtype=float)
    n = len(ell)
    fol = ell.copy() if follower is None else np.asarray(list(follower), dtype=float)
    if both is None:
        bth = np.minimum(ell, fol)
    else:
        bth = np.asarray(list(both), dtype=float)
    flw = np.zeros(n) if flow is None else np.array(list(flow), dtype=float)
    flw[-1] = 0.0
    return TimingGame(chain_tree(n), GamePayoffs(flw, ell, fol, bth))


def lattice_tree(steps: int, p_up: float, state: np.ndarray | None = None) -> EventTree:
    """Recombining binomial lattice; node k of stage t has k up-moves."""
    starts = np.concatenate([[0], np.cumsum(np.arange(1, steps + 2))]).astype(np.int64)
    layers = []
    prob_row = np.array([[1.0 - p_up, p_up]])
    for t in range(steps):
        k = np.arange(t + 1)
        child = np.stack([k, k + 1], axis=1)
        prob = np.broadcast_to(prob_row, (t + 1, 2))
        layers.append(Layer(child, prob))
    n = int(starts[-1])
    return EventTree(
        labels=np.arange(n, dtype=np.int64),
        stage_start=starts,
        layers=tuple(layers),
        state=np.full(n, np.nan) if state is None else state,
        recombining=True,
    )
