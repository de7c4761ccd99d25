import numpy as np
import pytest

from timing_games.model import chain_game
from timing_games.preemption import (
    mu_both,
    mu_leader,
    outcome_distribution,
    outcome_weights,
    preemption_alpha,
    preemption_alphas,
    preemption_value,
    symmetric_equilibrium,
)
from timing_games.verify import equilibrium_diagnostics, game_value

from helpers import RawTree, by_label, path_game_value, random_game


class TestAlpha:
    def test_first_mover_advantage(self):
        assert preemption_alpha(3, 1, 0) == pytest.approx(2 / 3, abs=1e-15)

    def test_all_equal_interior(self):
        assert preemption_alpha(1, 1, 1) == 1.0

    def test_no_advantage(self):
        assert preemption_alpha(1, 2, 0) == 0.0

    def test_joint_stop_premium_at_boundary(self):
        assert preemption_alpha(1, 2, 3, at_boundary=True) == 1.0
        assert preemption_alpha(1, 2, 3) == 0.0

    def test_degenerate_ratio_is_unreachable(self):
        # leader = both > follower falls into the joint-stop branch before any division
        assert preemption_alpha(3, 1, 3) == 1.0

    def test_vectorized_agrees(self):
        rng = np.random.default_rng(0)
        trip = rng.integers(0, 4, size=(500, 3)).astype(float)
        for boundary in (False, True):
            vec = preemption_alphas(trip[:, 0], trip[:, 1], trip[:, 2], at_boundary=boundary)
            ref = [preemption_alpha(*row, at_boundary=boundary) for row in trip]
            np.testing.assert_array_equal(vec, ref)


class TestOutcomes:
    def test_one_sided(self):
        out = outcome_distribution(1.0, 0.0)
        assert (out.lambda_L_i, out.lambda_L_j, out.lambda_M) == (1.0, 0.0, 0.0)

    def test_equal_intensities(self):
        out = outcome_distribution(2 / 3, 2 / 3)
        assert out.lambda_M == pytest.approx(0.5, abs=1e-15)
        assert out.lambda_L_i == pytest.approx(0.25, abs=1e-15)
        assert out.lambda_L_j == pytest.approx(0.25, abs=1e-15)

    def test_vanishing_limit_split(self):
        out = outcome_distribution(0.0, 0.0)
        assert (out.lambda_L_i, out.lambda_L_j, out.lambda_M) == (0.5, 0.5, 0.0)
        assert float(mu_leader(1e-8, 1e-8)) == pytest.approx(0.5, abs=1e-6)

    def test_masses_scale_outcomes(self):
        out = outcome_distribution(0.5, 0.25, g_i_pre=0.2, g_j_pre=0.5)
        total = out.lambda_L_i + out.lambda_L_j + out.lambda_M
        assert total == pytest.approx(0.8 * 0.5, abs=1e-15)
        assert out.survival == pytest.approx(1 - total, abs=1e-15)

    def test_one_sided_with_opponent_jump(self):
        out = outcome_distribution(0.5, 0.0, jump_j=0.4)
        assert out.lambda_L_i == pytest.approx(0.6)
        assert out.lambda_M == pytest.approx(0.2)
        assert out.lambda_L_j == pytest.approx(0.2)

    @pytest.mark.parametrize("bad", [-0.1, 1.5])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(ValueError):
            outcome_distribution(bad, 0.5)

    def test_weights_match_scalar_map(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(0, 1, size=(200, 2))
        a[::7, 1] = 0.0
        li, lj, lm = outcome_weights(a[:, 0], a[:, 1], np.ones(200), np.ones(200))
        for k in range(200):
            out = outcome_distribution(a[k, 0], a[k, 1], jump_i=1.0, jump_j=1.0)
            assert (li[k], lj[k], lm[k]) == pytest.approx((out.lambda_L_i, out.lambda_L_j, out.lambda_M))

    def test_flagged_zero_intensity_splits(self):
        li, lj, lm = outcome_weights([0.0], [0.0], [1.0], [1.0], [True], [True])
        assert (li[0], lj[0], lm[0]) == (0.5, 0.5, 0.0)

    def test_flagged_zero_loses_to_positive(self):
        li, lj, lm = outcome_weights([0.3], [0.0], [1.0], [1.0], [True], [True])
        assert (li[0], lj[0], lm[0]) == (1.0, 0.0, 0.0)


class TestValue:
    def test_follower_payoff_by_indifference(self):
        assert preemption_value(3, 1, 0) == 1.0

    def test_tie_split(self):
        assert preemption_value(2, 2, 0) == 2.0

    def test_joint_stop_premium(self):
        assert preemption_value(1, 3, 4) == 4.0

    def test_rejects_attrition_node(self):
        with pytest.raises(ValueError):
            preemption_value(1, 3, 0)

    def test_mu_monotone_on_diagonal(self):
        a = np.linspace(1e-6, 1, 1000)
        assert np.all(np.diff(mu_both(a, a)) > 0)


class TestSymmetricEquilibrium:
    def test_preemption_at_first_advantage(self):
        game = chain_game([0, 3, 1, 0], [1, 1, 2, 0], [0, 0, 0, 0])
        eq = symmetric_equilibrium(game)
        s1, s2 = eq.strategies
        assert s1.alpha[1] == pytest.approx(2 / 3)
        assert s1.hazard[1] == 1.0
        vf = game_value(game, s1, s2)
        assert vf.V1[1] == pytest.approx(1.0)
        assert eq.values[0][1] == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(15))
    def test_exact_mode_is_an_equilibrium(self, seed):
        game, doc = random_game(seed, "generic")
        eq = symmetric_equilibrium(game, "exact_discrete")
        d = equilibrium_diagnostics(game, *eq.strategies)
        assert d.max_best_reply_gap <= 1e-9
        assert d.max_payoff_asymmetry <= 1e-9
        vf = game_value(game, *eq.strategies)
        np.testing.assert_allclose(vf.V1, eq.values[0], atol=1e-10)
        raw = RawTree(doc)
        s1, s2 = eq.strategies
        tree = game.tree
        v = path_game_value(raw, by_label(tree, s1.hazard), by_label(tree, s2.hazard),
                            by_label(tree, s1.alpha), by_label(tree, s2.alpha))
        assert v[0] == pytest.approx(vf.V1[0], abs=1e-10)
