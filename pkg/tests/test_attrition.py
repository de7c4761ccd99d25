import numpy as np
import pytest

from timing_games.attrition import (
    EndpointConditionError,
    PreconditionError,
    attrition_endpoint,
    attrition_hazards,
    attrition_plan,
    expected_role_gap,
    pure_equilibrium,
)
from timing_games.duopoly import DuopolyParams, build_duopoly_game, closed_form, lattice_probability
from timing_games.model import chain_game
from timing_games.verify import equilibrium_diagnostics, game_value

from helpers import RawTree, by_label, path_game_value, random_game

SMALL = DuopolyParams(horizon=5.0, steps=200)


@pytest.fixture(scope="module")
def duopoly():
    return build_duopoly_game(SMALL).explicit


def hazards(game, mode, **kw):
    plan = attrition_plan(game, **kw)
    return attrition_hazards(game, plan, mode).hazard


class TestEndpoint:
    def test_no_endpoint_with_second_mover_advantage(self):
        game = chain_game([1, 2, 1, 0], [3, 3, 2, 0], [0, 0, 0, 0])
        assert not attrition_endpoint(game).any()

    def test_first_sign_change(self):
        game = chain_game([0, 0, 2, 0, 0], [1, 1, 1, 1, 0], [0, 0, 0, 0, 0])
        flag = attrition_endpoint(game)
        assert np.nonzero(flag)[0][0] == 2

    def test_duopoly_endpoints_are_below_exit_threshold(self, duopoly):
        flag = attrition_endpoint(duopoly, include_ties=True)
        u, _ = lattice_probability(SMALL)
        y_m = closed_form(SMALL).y_m
        Y = duopoly.tree.state
        inner = ~duopoly.tree.is_terminal()
        assert np.all(Y[flag] <= y_m * u)
        assert np.all(Y[inner & ~flag] > y_m / u)
        assert not attrition_endpoint(duopoly).any()


class TestHazards:
    def test_no_loss_no_hazard(self):
        game = chain_game([1, 2, 3, 3], [3, 4, 5, 3], [0, 0, 0, 3])
        assert hazards(game, "paper_formula")[0] == 0.0

    def test_jump_map(self):
        game = chain_game([2, 1, 1], [4, 3, 1], [0, 0, 1])
        plan = attrition_plan(game)
        assert plan.snell.dD[0] == 1.0
        assert hazards(game, "paper_formula")[0] == pytest.approx(1 / 3, abs=1e-15)

    def test_tie_with_joint_stop_coordinates(self):
        game = chain_game([2, 1, 1], [2, 3, 1], [2, 0, 1])
        assert hazards(game, "paper_formula")[0] == 1.0

    def test_tie_without_joint_stop_raises(self):
        game = chain_game([2, 1, 1], [2, 3, 1], [0, 0, 1])
        with pytest.raises(EndpointConditionError, match="endpoint condition violated at node 0"):
            hazards(game, "paper_formula")

    def test_exact_indifference_value(self):
        game = chain_game([2, 1, 1], [4, 3, 1], [0, 0, 1])
        g = hazards(game, "exact_discrete")[0]
        # stop: g*0 + (1-g)*2 ; wait: g*4 + (1-g)*1
        assert g * 0 + (1 - g) * 2 == pytest.approx(g * 4 + (1 - g) * 1, abs=1e-15)
        assert g == pytest.approx(1 / 5, abs=1e-15)

    def test_unknown_mode(self):
        game = chain_game([1, 1])
        with pytest.raises(ValueError, match="unknown hazard mode"):
            attrition_hazards(game, attrition_plan(game), "continuous")

    @pytest.mark.parametrize("seed", range(15))
    def test_hazards_stay_in_unit_interval(self, seed):
        game, _ = random_game(seed, "second_mover")
        for mode in ("paper_formula", "exact_discrete"):
            h = hazards(game, mode)
            assert np.all((h >= 0) & (h <= 1))

    @pytest.mark.parametrize("seed", range(10))
    def test_subgame_resolve_matches_restriction(self, seed):
        game, _ = random_game(seed, "second_mover")
        full = hazards(game, "exact_discrete")
        for start in range(1, min(game.tree.n_nodes, 6)):
            sub, keep = game.subgame(start)
            np.testing.assert_array_equal(hazards(sub, "exact_discrete"), full[keep])

    def test_duopoly_hazard_band(self, duopoly):
        h = hazards(duopoly, "exact_discrete", include_ties=True)
        cf = closed_form(SMALL)
        u, _ = lattice_probability(SMALL)
        tree = duopoly.tree
        Y = tree.state
        flag = attrition_endpoint(duopoly, include_ties=True)
        mixing = (h > 0) & ~flag & ~tree.is_terminal()
        assert mixing.any()
        assert np.all(Y[mixing] > cf.y_m / u)
        assert np.all(Y[mixing] < cf.y_1 * u)
        # within a stage, lower revenue never mixes less
        for t in range(tree.horizon):
            sl = tree.stage_slice(t)
            band = mixing[sl]
            hz = h[sl][band]
            assert np.all(np.diff(hz) <= 1e-15)


class TestPureEquilibrium:
    @pytest.mark.parametrize("seed", range(10))
    def test_values_match_path_oracle(self, seed):
        game, doc = random_game(seed, "f_supermartingale")
        raw = RawTree(doc)
        for rule in (True, False):
            s1, s2 = pure_equilibrium(game, role_rule=rule)
            v = path_game_value(raw, by_label(game.tree, s1.hazard), by_label(game.tree, s2.hazard))
            vf = game_value(game, s1, s2)
            assert vf.V1[0] == pytest.approx(v[0], abs=1e-10)
            assert vf.V2[0] == pytest.approx(v[1], abs=1e-10)

    @pytest.mark.parametrize("seed", range(10))
    def test_roles_swap(self, seed):
        game, _ = random_game(seed, "f_supermartingale")
        a = game_value(game, *pure_equilibrium(game, role_rule=True))
        b = game_value(game, *pure_equilibrium(game, role_rule=False))
        np.testing.assert_allclose(a.V1, b.V2, atol=1e-12)
        np.testing.assert_allclose(a.V2, b.V1, atol=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_asymmetry_is_expected_role_gap(self, seed):
        game, _ = random_game(seed, "f_supermartingale")
        s1, s2 = pure_equilibrium(game, role_rule=True)
        vf = game_value(game, s1, s2)
        assert vf.V2[0] - vf.V1[0] == pytest.approx(expected_role_gap(game)[0], abs=1e-12)
        d = equilibrium_diagnostics(game, s1, s2)
        assert d.max_best_reply_gap <= 1e-9

    def test_precondition_reports_node(self):
        game = chain_game([3, 1, 0], [1, 2, 0], [0, 0, 0])
        with pytest.raises(PreconditionError, match="follower payoff below leader payoff at node 0"):
            pure_equilibrium(game)

    def test_follower_supermartingale_required(self):
        game = chain_game([0, 0, 5], [1, 1, 5], [0, 0, 5])
        with pytest.raises(PreconditionError, match="supermartingale"):
            pure_equilibrium(game)

    def test_preconditions_only_on_reachable_part(self):
        game = chain_game([3, 1, 1, 0], [1, 2, 1, 0], [0, 0, 0, 0])
        pure_equilibrium(game, start=1)

    def test_duopoly_stop_regions(self, duopoly):
        s1, s2 = pure_equilibrium(duopoly, role_rule=True)
        cf = closed_form(SMALL)
        u, _ = lattice_probability(SMALL)
        Y = duopoly.tree.state
        inner = ~duopoly.tree.is_terminal()
        leads = (s1.hazard > 0) & inner
        both = (s2.hazard > 0) & inner
        assert np.all(Y[leads] <= cf.y_1 * u) and np.all(Y[inner & ~leads] > cf.y_1 / u)
        assert np.all(Y[both] <= cf.y_m * u) and np.all(Y[inner & ~both] > cf.y_m / u)
