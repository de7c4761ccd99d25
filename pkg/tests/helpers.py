"""Random game generators and brute-force oracles.

Generators emit raw game documents (the JSON layout) so that the oracles
below can work from the raw child lists without touching the solver's
tree representation.
"""

from __future__ import annotations

import itertools

import numpy as np

from timing_games.model import load_game

KINDS = ("generic", "competitive", "second_mover", "f_supermartingale")


def random_document(rng: np.random.Generator, kind: str = "generic", max_stages: int = 5,
                    max_children: int = 3, max_nodes: int = 60) -> dict:
    """Random non-recombining tree game with shuffled node ids."""
    n_stages = int(rng.integers(1, max_stages + 1))
    stage_of = [0]
    kids: list[list[tuple[int, float]]] = [[]]
    frontier = [0]
    for t in range(1, n_stages + 1):
        nxt = []
        for parent in frontier:
            k = int(rng.integers(1, max_children + 1))
            if len(stage_of) + k > max_nodes:
                k = 1
            w = rng.uniform(0.1, 1.0, size=k)
            w /= w.sum()
            for j in range(k):
                idx = len(stage_of)
                stage_of.append(t)
                kids.append([])
                kids[parent].append((idx, float(w[j])))
                nxt.append(idx)
        frontier = nxt
    n = len(stage_of)
    # fix rounding so the sums are exact to the validator's tolerance
    for rec in kids:
        if rec:
            s = sum(p for _, p in rec[:-1])
            rec[-1] = (rec[-1][0], 1.0 - s)

    leader, follower, both, flow = _payoffs(rng, kind, stage_of, kids)
    ids = rng.permutation(n) + 100
    nodes = []
    terminal = {}
    for k in range(n):
        rec = {
            "id": int(ids[k]),
            "stage": stage_of[k],
            "children": [[int(ids[c]), p] for c, p in kids[k]],
        }
        if kids[k]:
            rec.update(flow=flow[k], leader=leader[k], follower=follower[k], both=both[k])
        else:
            terminal[str(int(ids[k]))] = leader[k]
        nodes.append(rec)
    order = rng.permutation(n)
    return {
        "kind": "tree",
        "stages": max(stage_of),
        "nodes": [nodes[k] for k in order],
        "terminal_lump": terminal,
    }


def _payoffs(rng, kind, stage_of, kids):
    n = len(stage_of)
    flow = [float(x) for x in rng.uniform(-0.5, 0.5, n)]
    leader = [float(x) for x in rng.uniform(0.0, 4.0, n)]
    follower = [float(x) for x in rng.uniform(0.0, 4.0, n)]
    both = [float(x) for x in rng.uniform(0.0, 4.0, n)]
    if kind == "competitive":
        both = [min(l, f) - float(rng.uniform(0, 1)) * (rng.random() < 0.8) for l, f in zip(leader, follower)]
        # occasional exact ties between the roles
        for k in range(n):
            if rng.random() < 0.1:
                follower[k] = leader[k]
    elif kind == "second_mover":
        follower = [l + float(rng.uniform(0.0, 2.0)) for l in leader]
        both = [l - float(rng.uniform(0.0, 2.0)) for l in leader]
    elif kind == "f_supermartingale":
        # build the follower payoff backwards so it never rises in expectation
        follower = [0.0] * n
        for k in sorted(range(n), key=lambda j: -stage_of[j]):
            if kids[k]:
                cont = flow[k] + sum(p * follower[c] for c, p in kids[k])
                follower[k] = cont + float(rng.uniform(0.0, 1.0)) * (rng.random() < 0.7)
            else:
                follower[k] = float(rng.uniform(0.0, 4.0))
        leader = [f - float(rng.uniform(0.0, 2.0)) for f in follower]
        both = [l - float(rng.uniform(0.0, 1.0)) * (rng.random() < 0.7) for l in leader]
        for k in range(n):
            if kids[k] and rng.random() < 0.2:
                both[k] = leader[k] = follower[k]
    elif kind != "generic":
        raise ValueError(kind)
    for k in range(n):
        if not kids[k]:
            both[k] = follower[k] = leader[k]
            flow[k] = 0.0
    return leader, follower, both, flow


def random_game(seed: int, kind: str = "generic", **kw):
    rng = np.random.default_rng(seed)
    doc = random_document(rng, kind, **kw)
    return load_game(doc).game(), doc


# ---------------------------------------------------------------------------
# oracles on raw documents


class RawTree:
    """Child lists and payoffs keyed by original node id."""

    def __init__(self, doc: dict):
        self.nodes = {rec["id"]: rec for rec in doc["nodes"]}
        self.root = next(rec["id"] for rec in doc["nodes"] if rec["stage"] == 0)
        term = {int(k): float(v) for k, v in doc.get("terminal_lump", {}).items()}
        self.terminal = term

    def kids(self, nid):
        return [(int(c), float(p)) for c, p in self.nodes[nid]["children"]]

    def lump(self, nid, key):
        if not self.kids(nid):
            return self.terminal[nid]
        return float(self.nodes[nid][key])

    def flow(self, nid):
        return float(self.nodes[nid].get("flow", 0.0)) if self.kids(nid) else 0.0

    def paths(self, start=None):
        """All (path, probability) pairs from ``start`` to a terminal node."""
        start = self.root if start is None else start
        out = []
        stack = [([start], 1.0)]
        while stack:
            path, pr = stack.pop()
            ks = self.kids(path[-1])
            if not ks:
                out.append((path, pr))
            for c, p in ks:
                stack.append((path + [c], pr * p))
        return out

    def subtree_ids(self, start=None):
        start = self.root if start is None else start
        seen, todo = [], [start]
        while todo:
            k = todo.pop()
            seen.append(k)
            todo.extend(c for c, _ in self.kids(k))
        return seen


def stopped_reward(raw: RawTree, stop_set, key="leader", start=None) -> float:
    """Expected flow plus lump when stopping at the first node of ``stop_set`` (or the end)."""
    total = 0.0
    for path, pr in raw.paths(start):
        acc = 0.0
        for nid in path:
            if nid in stop_set or not raw.kids(nid):
                total += pr * (acc + raw.lump(nid, key))
                break
            acc += raw.flow(nid)
    return total


def brute_force_stopping_value(raw: RawTree, key="leader", start=None) -> float:
    """Maximum over every subset of nodes used as a stopping region."""
    ids = [k for k in raw.subtree_ids(start) if raw.kids(k)]
    best = -np.inf
    for r in range(len(ids) + 1):
        for subset in itertools.combinations(ids, r):
            best = max(best, stopped_reward(raw, set(subset), key, start))
    return best


def path_game_value(raw: RawTree, hazard1: dict, hazard2: dict, alpha1=None, alpha2=None,
                    start=None) -> tuple[float, float]:
    """Expected payoffs by summing over paths and first-stop stages.

    Hazards and intensities are dicts keyed by node id. At a node where a
    player has positive intensity both stop surely and the outcome map
    assigns the roles.
    """
    alpha1 = alpha1 or {}
    alpha2 = alpha2 or {}
    v1 = v2 = 0.0
    for path, pr in raw.paths(start):
        survive = 1.0
        acc = 0.0
        for nid in path:
            ell, f, m = raw.lump(nid, "leader"), raw.lump(nid, "follower"), raw.lump(nid, "both")
            if not raw.kids(nid):
                v1 += pr * survive * (acc + ell)
                v2 += pr * survive * (acc + ell)
                break
            a1, a2 = alpha1.get(nid, 0.0), alpha2.get(nid, 0.0)
            if a1 > 0 or a2 > 0:
                if a1 > 0 and a2 > 0:
                    den = a1 + a2 - a1 * a2
                    w1, w2, wm = a1 * (1 - a2) / den, a2 * (1 - a1) / den, a1 * a2 / den
                elif a1 > 0:
                    h2 = hazard2[nid]
                    w1, w2, wm = 1 - h2, (1 - a1) * h2, a1 * h2
                else:
                    h1 = hazard1[nid]
                    w1, w2, wm = (1 - a2) * h1, 1 - h1, a2 * h1
                v1 += pr * survive * (acc + w1 * ell + w2 * f + wm * m)
                v2 += pr * survive * (acc + w2 * ell + w1 * f + wm * m)
                break
            h1, h2 = hazard1[nid], hazard2[nid]
            ends = 1 - (1 - h1) * (1 - h2)
            v1 += pr * survive * (ends * acc + h1 * h2 * m + h1 * (1 - h2) * ell + (1 - h1) * h2 * f)
            v2 += pr * survive * (ends * acc + h1 * h2 * m + h2 * (1 - h1) * ell + (1 - h2) * h1 * f)
            survive *= (1 - h1) * (1 - h2)
            acc += raw.flow(nid)
    return v1, v2


def brute_force_best_reply(raw: RawTree, opp_hazard: dict, start=None) -> float:
    """Best pure stopping region against a hazard-only opponent."""
    ids = [k for k in raw.subtree_ids(start) if raw.kids(k)]
    best = -np.inf
    for r in range(len(ids) + 1):
        for subset in itertools.combinations(ids, r):
            own = {k: (1.0 if k in subset else 0.0) for k in raw.nodes}
            best = max(best, path_game_value(raw, own, opp_hazard, start=start)[0])
    return best


def by_label(tree, arr) -> dict:
    return {int(tree.labels[k]): float(arr[k]) for k in range(tree.n_nodes)}
