"""Duopoly market exit under geometric Brownian revenue.

Each firm earns ``Y - c`` per unit time while both operate and ``m*Y - c``
as a monopolist. The closed forms give the follower's exit premium and the
leader's option value. The lattice builder turns the model into a tree game
so the numeric engine can be checked against them.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .model import GamePayoffs, GameSpec, GameSpecError, TimingGame, lattice_tree
from .snell import snell_envelope


@dataclass(frozen=True)
class DuopolyParams:
    r: float = 0.04
    mu: float = 0.0
    sigma: float = math.sqrt(0.08)
    c: float = 1.0
    m: float = 2.0
    y0: float = 1.0
    horizon: float = 30.0
    steps: int = 1000

    def __post_init__(self):
        if not self.r > max(self.mu, 0.0):
            raise GameSpecError(f"need r > max(mu, 0), got r={self.r}, mu={self.mu}")
        if not self.sigma > 0.0:
            raise GameSpecError("sigma must be positive")
        if not self.c > 0.0:
            raise GameSpecError("c must be positive")
        if not self.m > 1.0 - 1e-15:
            raise GameSpecError("m must be at least 1")
        if not self.y0 > 0.0:
            raise GameSpecError("y0 must be positive")
        if not self.horizon > 0.0:
            raise GameSpecError("horizon must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise GameSpecError("steps must be a positive integer")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @classmethod
    def from_dict(cls, doc: dict) -> "DuopolyParams":
        keys = ("r", "mu", "sigma", "c", "m", "y0", "horizon", "steps")
        missing = [k for k in keys if k not in doc]
        if missing:
            raise GameSpecError(f"missing duopoly field(s): {', '.join(missing)}")
        vals = {}
        for k in keys:
            v = doc[k]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise GameSpecError(f"duopoly field '{k}' must be a number")
            vals[k] = int(v) if k == "steps" else float(v)
        return cls(**vals)

    def to_dict(self) -> dict:
        return asdict(self)


P0 = DuopolyParams()


def beta2(params: DuopolyParams) -> float:
    """Negative root of 0.5*sigma^2*b*(b-1) + mu*b - r = 0."""
    a = 0.5 * params.sigma**2
    b = params.mu - a
    c = -params.r
    disc = math.sqrt(b * b - 4.0 * a * c)
    # c < 0 puts the roots on opposite sides of zero; pick the form without cancellation
    root = (-b - disc) / (2.0 * a) if b >= 0.0 else 2.0 * c / (disc - b)
    # one Newton step polishes the last ulp
    fval = a * root * root + b * root + c
    return root - fval / (2.0 * a * root + b)


@dataclass(frozen=True)
class ClosedForm:
    params: DuopolyParams
    beta2: float
    y_m: float
    y_1: float

    def follower_premium(self, t, y):
        return _premium(t, y, self.params.m, self.y_m, self.beta2, self.params)

    def leader_option(self, t, y):
        return _premium(t, y, 1.0, self.y_1, self.beta2, self.params)


def thresholds(params: DuopolyParams) -> tuple[float, float]:
    b = beta2(params)
    base = b / (b - 1.0) * (params.r - params.mu) / params.r * params.c
    return base / params.m, base


def closed_form(params: DuopolyParams) -> ClosedForm:
    y_m, y_1 = thresholds(params)
    return ClosedForm(params, beta2(params), y_m, y_1)


def _premium(t, y, mult, thr, b, params):
    r, mu, c = params.r, params.mu, params.c
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        bracket = mult * y / (r - mu) - c / r - (y / thr) ** b * (mult * thr / (r - mu) - c / r)
    out = np.exp(-r * t) * np.where(y > thr, bracket, 0.0)
    return out if out.ndim else float(out)


def follower_premium(t, y, params: DuopolyParams):
    """Discounted value of staying on as monopolist after the rival exits, above exiting now."""
    cf = closed_form(params)
    return cf.follower_premium(t, y)


def leader_option(t, y, params: DuopolyParams):
    """Discounted value of optimally delaying exit while the rival stays."""
    cf = closed_form(params)
    return cf.leader_option(t, y)


def lattice_probability(params: DuopolyParams) -> tuple[float, float]:
    """Up factor and up probability of the binomial lattice."""
    dt = params.dt
    u = math.exp(params.sigma * math.sqrt(dt))
    d = 1.0 / u
    p = (math.exp(params.mu * dt) - d) / (u - d)
    if not 0.0 < p < 1.0:
        need = math.floor(params.horizon * params.mu**2 / params.sigma**2) + 1
        raise GameSpecError(
            f"lattice probability {p:.6g} outside (0, 1); use at least {need} steps"
        )
    return u, p


def lattice_states(params: DuopolyParams, u: float) -> np.ndarray:
    steps = params.steps
    t = np.repeat(np.arange(steps + 1), np.arange(1, steps + 2))
    starts = np.concatenate([[0], np.cumsum(np.arange(1, steps + 2))])
    k = np.arange(len(t)) - starts[t]
    return params.y0 * np.exp((2 * k - t) * math.log(u))


def build_duopoly_game(params: DuopolyParams, terminal: str = "analytic") -> GameSpec:
    """Binomial-lattice version of the exit game.

    The follower lump is the numeric value of continuing as a monopolist
    with the option to exit. ``terminal="analytic"`` closes the horizon with
    the closed-form continuation values; ``"zero"`` forces exit at the horizon.
    """
    if terminal not in ("analytic", "zero"):
        raise GameSpecError(f"terminal must be 'analytic' or 'zero', got {terminal!r}")
    u, p = lattice_probability(params)
    Y = lattice_states(params, u)
    tree = lattice_tree(params.steps, p, state=Y)
    dt = params.dt
    stage = tree.stages()
    disc = np.exp(-params.r * stage * dt)
    term = tree.is_terminal()
    flow = np.where(term, 0.0, disc * (Y - params.c) * dt)
    mono_flow = np.where(term, 0.0, disc * (params.m * Y - params.c) * dt)

    cf = closed_form(params)
    T = params.horizon
    fol_end = np.zeros(tree.n_nodes)
    lead_end = np.zeros(tree.n_nodes)
    if terminal == "analytic":
        fol_end[term] = cf.follower_premium(T, Y[term])
        lead_end[term] = cf.leader_option(T, Y[term])
    follower = snell_envelope(tree, mono_flow, fol_end).U
    follower[term] = lead_end[term]
    leader = lead_end.copy()
    pay = GamePayoffs(flow=flow, leader=leader, follower=follower, both=leader.copy())
    game = TimingGame(tree, pay)
    return GameSpec(
        kind="tree",
        explicit=game,
        options={"source": "gbm-duopoly", "params": params.to_dict(), "terminal": terminal},
    )


@dataclass(frozen=True)
class ConvergenceRow:
    steps: int
    follower_numeric: float
    follower_exact: float
    leader_numeric: float
    leader_exact: float

    @staticmethod
    def _rel(num, ex):
        if ex == 0.0:
            return abs(num)
        return abs(num - ex) / abs(ex)

    @property
    def follower_err(self) -> float:
        return self._rel(self.follower_numeric, self.follower_exact)

    @property
    def leader_err(self) -> float:
        return self._rel(self.leader_numeric, self.leader_exact)


@dataclass(frozen=True)
class ConvergenceReport:
    rows: list[ConvergenceRow]
    beta2: float
    y_m: float
    y_1: float

    @property
    def monotone(self) -> bool:
        f = [r.follower_err for r in self.rows]
        l = [r.leader_err for r in self.rows]
        return all(b <= a for a, b in zip(f, f[1:])) and all(b <= a for a, b in zip(l, l[1:]))

    def passed(self, final_tol: float = 0.01) -> bool:
        last = self.rows[-1]
        return self.monotone and last.follower_err <= final_tol and last.leader_err <= final_tol

    def csv(self) -> str:
        lines = ["steps,follower_err,leader_err"]
        lines += [f"{r.steps},{r.follower_err:.17g},{r.leader_err:.17g}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "beta2": self.beta2,
            "y_m": self.y_m,
            "y_1": self.y_1,
            "monotone": self.monotone,
            "passed": self.passed(),
            "rows": [
                {**asdict(r), "follower_err": r.follower_err, "leader_err": r.leader_err}
                for r in self.rows
            ],
        }


def leader_envelope(game: TimingGame):
    p = game.pay
    return snell_envelope(game.tree, p.flow, p.leader)


def validate_closed_form(params: DuopolyParams, step_schedule) -> ConvergenceReport:
    """Numeric follower value and leader option against the closed forms."""
    cf = closed_form(params)
    rows = []
    for steps in step_schedule:
        prm = replace(params, steps=int(steps))
        game = build_duopoly_game(prm, terminal="analytic").explicit
        lead = leader_envelope(game).U[0] - game.pay.leader[0]
        rows.append(
            ConvergenceRow(
                steps=int(steps),
                follower_numeric=float(game.pay.follower[0]),
                follower_exact=float(cf.follower_premium(0.0, params.y0)),
                leader_numeric=float(lead),
                leader_exact=float(cf.leader_option(0.0, params.y0)),
            )
        )
        del game
    return ConvergenceReport(rows, cf.beta2, cf.y_m, cf.y_1)
