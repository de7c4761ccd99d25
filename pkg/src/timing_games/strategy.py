"""Per-node strategy representation shared by the equilibrium builders."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .model import EventTree


class InfeasibleStrategy(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ExtendedStrategy:
    """Stopping hazards plus preemption intensities, one value per node.

    ``hazard[n]`` is the probability of stopping at ``n`` given that nobody
    has stopped before. ``preempt[n]`` marks a node where the player stops
    surely with intensity ``alpha[n]``; it defaults to ``alpha > 0``. A marked
    node with ``alpha == 0`` stands for a vanishing intensity, the limit that
    splits roles evenly when both players use it. Hazards at terminal nodes
    are ignored.
    """

    hazard: np.ndarray
    alpha: np.ndarray
    player: int = 1
    preempt: np.ndarray | None = None

    def __post_init__(self):
        hazard = np.asarray(self.hazard, dtype=float)
        alpha = np.asarray(self.alpha, dtype=float)
        flag = alpha > 0.0
        if self.preempt is not None:
            flag = flag | np.asarray(self.preempt, dtype=bool)
        object.__setattr__(self, "hazard", hazard)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "preempt", flag)

    @classmethod
    def never(cls, n: int, player: int = 1) -> "ExtendedStrategy":
        return cls(np.zeros(n), np.zeros(n), player)

    def validate(self, tree: EventTree | None = None) -> None:
        h, a = self.hazard, self.alpha
        if h.shape != a.shape:
            raise InfeasibleStrategy("hazard and alpha lengths differ")
        if tree is not None and h.shape != (tree.n_nodes,):
            raise InfeasibleStrategy(f"strategy has {h.size} nodes, tree has {tree.n_nodes}")
        for name, arr in (("hazard", h), ("alpha", a)):
            bad = ~((arr >= 0.0) & (arr <= 1.0))
            if bad.any():
                k = int(np.argmax(bad))
                raise InfeasibleStrategy(f"{name} {arr[k]} outside [0, 1] at node {k}")
        bad = self.preempt & (h < 1.0)
        if tree is not None:
            bad &= ~tree.is_terminal()
        if bad.any():
            k = int(np.argmax(bad))
            raise InfeasibleStrategy(f"preemption without hazard 1 at node {k}")

    def with_player(self, player: int) -> "ExtendedStrategy":
        return ExtendedStrategy(self.hazard, self.alpha, player, self.preempt)

    def to_dict(self, tree: EventTree) -> dict:
        nodes = []
        for k in range(tree.n_nodes):
            rec = {"id": int(tree.labels[k]), "hazard": float(self.hazard[k]), "alpha": float(self.alpha[k])}
            if self.preempt[k] and self.alpha[k] == 0.0:
                rec["preempt"] = True
            nodes.append(rec)
        return {"player": self.player, "nodes": nodes}

    @classmethod
    def from_dict(cls, doc: dict, tree: EventTree) -> "ExtendedStrategy":
        index = {int(lbl): k for k, lbl in enumerate(tree.labels)}
        hazard = np.zeros(tree.n_nodes)
        alpha = np.zeros(tree.n_nodes)
        flag = np.zeros(tree.n_nodes, dtype=bool)
        seen = np.zeros(tree.n_nodes, dtype=bool)
        for rec in doc["nodes"]:
            nid = int(rec["id"])
            if nid not in index:
                raise InfeasibleStrategy(f"strategy refers to unknown node {nid}")
            k = index[nid]
            hazard[k] = float(rec.get("hazard", 0.0))
            alpha[k] = float(rec.get("alpha", 0.0))
            flag[k] = bool(rec.get("preempt", False))
            seen[k] = True
        if not seen.all():
            k = int(np.argmin(seen))
            raise InfeasibleStrategy(f"strategy misses node {tree.labels[k]}")
        out = cls(hazard, alpha, int(doc.get("player", 1)), flag)
        out.validate(tree)
        return out


@dataclass(eq=False)
class Equilibrium:
    """Strategy pair with the per-node values it was built to deliver."""

    kind: str
    hazard_mode: str | None
    strategies: tuple[ExtendedStrategy, ExtendedStrategy]
    values: tuple[np.ndarray, np.ndarray]
    extras: dict[str, Any] = field(default_factory=dict)
    diagnostics: Any = None

    def to_dict(self, tree: EventTree) -> dict:
        v1, v2 = self.values
        return {
            "kind": self.kind,
            "hazards": self.hazard_mode,
            "strategies": [s.to_dict(tree) for s in self.strategies],
            "values": [
                {"id": int(tree.labels[k]), "V1": float(v1[k]), "V2": float(v2[k])}
                for k in range(tree.n_nodes)
            ],
        }


def strategies_from_dict(doc: dict, tree: EventTree) -> tuple[ExtendedStrategy, ExtendedStrategy]:
    """Read the strategy pair from an equilibrium document or a bare two-element list."""
    items = doc["strategies"] if isinstance(doc, dict) else doc
    if len(items) != 2:
        raise InfeasibleStrategy("expected exactly two strategies")
    s1 = ExtendedStrategy.from_dict(items[0], tree)
    s2 = ExtendedStrategy.from_dict(items[1], tree)
    return s1.with_player(1), s2.with_player(2)
