"""Equilibria of symmetric stopping games on finite event trees."""

from .attrition import (
    AttritionPlan,
    EndpointConditionError,
    PreconditionError,
    attrition_endpoint,
    attrition_hazards,
    attrition_plan,
    pure_equilibrium,
)
from .duopoly import (
    ClosedForm,
    DuopolyParams,
    beta2,
    build_duopoly_game,
    follower_premium,
    leader_option,
    thresholds,
    validate_closed_form,
)
from .efficient import (
    FrontierResult,
    HypothesisError,
    efficient_equilibrium,
    payoff_bound,
    preemption_frontier,
)
from .model import (
    EventTree,
    GamePayoffs,
    GameSpec,
    GameSpecError,
    TimingGame,
    chain_game,
    cumulative_payoffs,
    dump_game,
    load_game,
)
from .preemption import (
    OutcomeDistribution,
    mu_both,
    mu_leader,
    outcome_distribution,
    preemption_alpha,
    preemption_value,
    symmetric_equilibrium,
)
from .snell import SnellSolution, StopTimes, doob_meyer_residuals, optimal_stop_times, snell_envelope
from .strategy import Equilibrium, ExtendedStrategy
from .verify import (
    BestReplyField,
    Diagnostics,
    ValueField,
    best_reply_value,
    equilibrium_diagnostics,
    game_value,
    simulate,
)
