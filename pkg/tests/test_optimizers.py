"""Selection rules: closed-form pmf values, dual optimality, resampling contracts."""
import math

import numpy as np
import pytest

from inhand.optimizers import (
    ExplorationConfig,
    OPTIMIZER_NAMES,
    PboConfig,
    RepsConfig,
    UpdatePlan,
    WrsConfig,
    costs_to_rewards,
    kl_from_uniform,
    make_optimizer,
    multinomial_sources,
    pbo_select,
    pmf_entropy,
    reps_dual,
    reps_dual_solve,
    reps_pmf,
    resample_and_perturb,
    wrs_pmf,
)


class TestWrsPmf:
    def test_equal_costs_uniform(self):
        pmf = wrs_pmf(np.full(8, 3.7), temperature=1.0)
        assert np.allclose(pmf, 1.0 / 8.0, rtol=0, atol=1e-15)

    def test_two_lane_closed_form(self):
        # weights exp(0)=1 and exp(-ln 3)=1/3 give exactly [3/4, 1/4]
        pmf = wrs_pmf(np.array([0.0, math.log(3.0)]), temperature=1.0)
        assert np.allclose(pmf, [0.75, 0.25], rtol=1e-12)

    def test_sharp_temperature_concentrates(self):
        pmf = wrs_pmf(np.array([0.0, 0.01, 0.02]), temperature=1e4)
        assert pmf[0] >= 0.999

    def test_flat_temperature_near_uniform(self):
        rng = np.random.default_rng(0)
        costs = rng.uniform(0.0, 5.0, size=40)
        pmf = wrs_pmf(costs, temperature=1e-8)
        assert np.max(np.abs(pmf - 1.0 / 40.0)) <= 1e-8 * 5.0

    def test_infinite_cost_gets_zero(self):
        pmf = wrs_pmf(np.array([1.0, np.inf, 3.0]), temperature=1.0)
        assert pmf[1] == 0.0
        assert np.isclose(pmf[0], 1.0 / (1.0 + math.exp(-2.0)), rtol=1e-12)
        assert np.isclose(pmf.sum(), 1.0, rtol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(1)
        costs = rng.uniform(0.0, 4.0, size=25)
        a = wrs_pmf(costs, temperature=1.3)
        b = wrs_pmf(costs + 7.25, temperature=1.3)
        assert np.allclose(a, b, atol=1e-12)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            wrs_pmf(np.array([np.inf, np.inf]), temperature=1.0)
        with pytest.raises(ValueError):
            wrs_pmf(np.array([1.0, np.nan]), temperature=1.0)
        with pytest.raises(ValueError):
            wrs_pmf(np.array([1.0, -np.inf]), temperature=1.0)
        with pytest.raises(ValueError):
            wrs_pmf(np.array([1.0, 2.0]), temperature=0.0)
        with pytest.raises(ValueError):
            wrs_pmf(np.array([]), temperature=1.0)

    def test_config_rejects_nonpositive_temperature(self):
        with pytest.raises(ValueError):
            WrsConfig(temperature=-1.0)


class TestCostsToRewards:
    def test_three_lane_exact(self):
        # hi + lo - c with hi=3, lo=1
        r = costs_to_rewards(np.array([1.0, 2.0, 3.0]))
        assert np.array_equal(r, [3.0, 2.0, 1.0])

    def test_reverses_ranking(self):
        rng = np.random.default_rng(2)
        costs = rng.uniform(0.0, 9.0, size=30)
        r = costs_to_rewards(costs)
        assert np.array_equal(np.argsort(costs), np.argsort(-r))

    def test_divergent_lane_maps_to_minus_inf(self):
        r = costs_to_rewards(np.array([1.0, np.inf, 3.0]))
        assert r[1] == -np.inf
        assert np.array_equal(r[[0, 2]], [3.0, 1.0])

    def test_all_infinite_raises(self):
        with pytest.raises(ValueError):
            costs_to_rewards(np.array([np.inf, np.inf]))


def _dual_raw(rewards, eta, epsilon):
    # direct formula without the max-shift, valid while exp stays in range
    return eta * epsilon + eta * math.log(
        sum(math.exp(r / eta) for r in rewards) / len(rewards))


class TestRepsDual:
    def test_matches_unshifted_formula(self):
        rewards = np.array([2.0, 1.0])
        for eta in (0.5, 1.0, 3.0, 10.0):
            assert np.isclose(reps_dual(rewards, eta, 0.1),
                              _dual_raw(rewards, eta, 0.1), rtol=1e-12)

    def test_solver_beats_dense_grid(self):
        rng = np.random.default_rng(3)
        grid = np.logspace(-3, 3, 20000)
        for _ in range(10):
            rewards = rng.uniform(-2.0, 2.0, size=12)
            eta_star = reps_dual_solve(rewards, epsilon=0.5)
            g_star = reps_dual(rewards, eta_star, 0.5)
            g_grid = min(reps_dual(rewards, float(e), 0.5) for e in grid)
            assert g_star <= g_grid + 1e-8

    def test_two_lane_grid_oracle(self):
        rewards = np.array([2.0, 1.0])
        eta_star = reps_dual_solve(rewards, epsilon=0.1)
        grid = np.logspace(-3, 3, 400000)
        vals = [reps_dual(rewards, float(e), 0.1) for e in grid]
        eta_grid = float(grid[int(np.argmin(vals))])
        assert math.isclose(eta_star, eta_grid, rel_tol=1e-3)

    def test_active_constraint_hits_kl_budget(self):
        # at an interior optimum dg/deta = eps - KL(pmf || uniform) = 0
        rng = np.random.default_rng(4)
        lo, hi = 1e-3, 1e3
        interior = 0
        for _ in range(25):
            rewards = rng.uniform(0.0, 3.0, size=40)
            eta = reps_dual_solve(rewards, epsilon=0.5)
            kl = kl_from_uniform(reps_pmf(rewards, eta))
            if lo * 1.01 < eta < hi * 0.99:
                interior += 1
                assert abs(kl - 0.5) < 1e-3
            else:
                assert kl <= 0.5 + 1e-6
        assert interior >= 10

    def test_degenerate_equal_rewards_returns_upper_bound(self):
        assert reps_dual_solve(np.full(6, 1.25), epsilon=0.5) == 1e3

    def test_huge_spread_still_meets_kl_budget(self):
        # a 1000-unit gap pushes eta way up so the pmf stays inside the budget
        eta = reps_dual_solve(np.array([0.0, 1000.0]), epsilon=0.5)
        assert abs(kl_from_uniform(reps_pmf(np.array([0.0, 1000.0]), eta)) - 0.5) < 1e-3

    def test_small_spread_pins_lower_bound(self):
        # KL stays far under budget across the whole interval, so the dual
        # decreases toward the left edge
        eta = reps_dual_solve(np.array([0.0, 1e-4]), epsilon=0.5)
        assert math.isclose(eta, 1e-3, rel_tol=5e-3)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            reps_dual_solve(np.array([1.0, 2.0]), epsilon=0.0)
        with pytest.raises(ValueError):
            reps_dual_solve(np.array([-np.inf, -np.inf]), epsilon=0.5)
        with pytest.raises(ValueError):
            reps_dual_solve(np.array([1.0, 2.0]), epsilon=0.5, eta_bounds=(1.0, 0.5))
        with pytest.raises(ValueError):
            RepsConfig(epsilon=-0.1)
        with pytest.raises(ValueError):
            RepsConfig(eta_bounds=(0.0, 1.0))


class TestRepsPmf:
    def test_two_lane_closed_form(self):
        pmf = reps_pmf(np.array([1.0, 0.0]), eta_star=1.0)
        e = math.e
        assert np.allclose(pmf, [e / (e + 1.0), 1.0 / (e + 1.0)], rtol=1e-12)

    def test_minus_inf_reward_gets_zero(self):
        pmf = reps_pmf(np.array([1.0, -np.inf, 0.5]), eta_star=2.0)
        assert pmf[1] == 0.0
        assert np.isclose(pmf.sum(), 1.0, rtol=1e-12)

    def test_rejects_nonpositive_eta(self):
        with pytest.raises(ValueError):
            reps_pmf(np.array([1.0, 0.0]), eta_star=0.0)


class TestPmfDiagnostics:
    def test_entropy_uniform_is_log_k(self):
        assert math.isclose(pmf_entropy(np.full(16, 1 / 16)), math.log(16.0),
                            rel_tol=1e-12)

    def test_entropy_delta_is_zero(self):
        assert pmf_entropy(np.array([0.0, 1.0, 0.0])) == 0.0

    def test_kl_uniform_is_zero(self):
        assert abs(kl_from_uniform(np.full(10, 0.1))) < 1e-12

    def test_kl_delta_is_log_k(self):
        assert math.isclose(kl_from_uniform(np.array([0.0, 0.0, 1.0, 0.0])),
                            math.log(4.0), rel_tol=1e-12)


class TestPboSelect:
    def test_survivors_map_to_themselves(self):
        rng = np.random.default_rng(5)
        sources = pbo_select(np.array([4.0, 1.0, 3.0, 2.0]), k_best=2, rng=rng)
        assert sources[1] == 1 and sources[3] == 3
        assert sources[0] in (1, 3) and sources[2] in (1, 3)

    def test_replacement_is_uniform_over_survivors(self):
        rng = np.random.default_rng(6)
        costs = np.array([4.0, 1.0, 3.0, 2.0])
        hits = sum(pbo_select(costs, 2, rng)[0] == 1 for _ in range(10000))
        # binomial(10000, 0.5): 3 sigma is 150
        assert abs(hits - 5000) <= 150

    def test_full_keep_is_identity(self):
        rng = np.random.default_rng(7)
        sources = pbo_select(np.array([3.0, 1.0, 2.0]), k_best=3, rng=rng)
        assert np.array_equal(sources, [0, 1, 2])

    def test_ties_break_by_lane_index(self):
        rng = np.random.default_rng(8)
        sources = pbo_select(np.array([1.0, 1.0, 1.0]), k_best=2, rng=rng)
        assert sources[0] == 0 and sources[1] == 1
        assert sources[2] in (0, 1)

    def test_divergent_lane_never_survives(self):
        rng = np.random.default_rng(9)
        sources = pbo_select(np.array([np.inf, 0.0]), k_best=1, rng=rng)
        assert np.array_equal(sources, [1, 1])

    def test_rejects_bad_k_best(self):
        rng = np.random.default_rng(10)
        with pytest.raises(ValueError):
            pbo_select(np.array([1.0, 2.0]), k_best=0, rng=rng)
        with pytest.raises(ValueError):
            pbo_select(np.array([1.0, 2.0]), k_best=3, rng=rng)


class TestMultinomialSources:
    def test_delta_pmf_selects_single_source(self):
        rng = np.random.default_rng(11)
        sources = multinomial_sources(np.array([0.0, 1.0, 0.0]), rng)
        assert np.array_equal(sources, [1, 1, 1])

    def test_draw_frequencies_match_pmf(self):
        rng = np.random.default_rng(12)
        pmf = np.array([0.2, 0.3, 0.5])
        draws = np.concatenate([multinomial_sources(pmf, rng) for _ in range(4000)])
        freq = np.bincount(draws, minlength=3) / draws.size
        sigma = np.sqrt(pmf * (1 - pmf) / draws.size)
        assert np.all(np.abs(freq - pmf) <= 3.0 * sigma + 1e-12)

    def test_rejects_unnormalized_pmf(self):
        rng = np.random.default_rng(13)
        with pytest.raises(ValueError):
            multinomial_sources(np.array([0.5, 0.6]), rng)
        with pytest.raises(ValueError):
            multinomial_sources(np.array([1.5, -0.5]), rng)


class TestRules:
    def test_factory_names(self):
        for name in OPTIMIZER_NAMES:
            assert make_optimizer(name).name == name
        with pytest.raises(ValueError):
            make_optimizer("sgd")

    def test_resampling_rules_produce_sources(self):
        costs = np.array([3.0, 1.0, 2.0, 5.0])
        rules = (make_optimizer("wrs"), make_optimizer("reps"),
                 make_optimizer("pbo", pbo=PboConfig(k_best=2)))
        for rule in rules:
            plan = rule.plan(costs, np.random.default_rng(14))
            assert not plan.is_noop
            assert plan.perturb
            assert plan.sources.shape == (4,)
            assert np.all((plan.sources >= 0) & (plan.sources < 4))

    def test_baselines_are_noops(self):
        costs = np.array([3.0, 1.0])
        for name in ("olp", "eye"):
            plan = make_optimizer(name).plan(costs, np.random.default_rng(15))
            assert plan.is_noop
            assert not plan.perturb

    def test_reps_plan_reports_eta(self):
        plan = make_optimizer("reps").plan(np.array([3.0, 1.0, 2.0]),
                                           np.random.default_rng(16))
        assert 1e-3 <= plan.eta_star <= 1e3

    def test_plans_are_seed_deterministic(self):
        costs = np.array([3.0, 1.0, 2.0, 5.0, 0.5])
        a = make_optimizer("wrs").plan(costs, np.random.default_rng(17))
        b = make_optimizer("wrs").plan(costs, np.random.default_rng(17))
        assert np.array_equal(a.sources, b.sources)


class FakeEnsemble:
    """Duck-typed lane store for exercising the resample contract."""

    def __init__(self, params, states):
        self.params = [np.array(p, dtype=float) for p in params]
        self.states = [np.array(s, dtype=float) for s in states]
        self.wrenches = []
        self.resets = []

    @property
    def size(self):
        return len(self.params)

    def snapshot_lane(self, i):
        return self.states[i].copy()

    def restore_lane(self, i, snap):
        self.states[i] = np.array(snap, dtype=float)

    def get_params(self, i):
        return self.params[i]

    def set_params(self, i, theta):
        self.params[i] = np.array(theta, dtype=float)

    def queue_wrench(self, i, force, torque):
        self.wrenches.append((i, np.array(force, dtype=float), float(torque)))

    def reset_cost(self, i):
        self.resets.append(i)


class TestResampleAndPerturb:
    def test_noop_plan_touches_nothing(self):
        ens = FakeEnsemble([[1.0], [2.0]], [[10.0], [20.0]])
        resample_and_perturb(ens, UpdatePlan(sources=None, perturb=False),
                             ExplorationConfig(np.zeros(1), 1.0, 1.0),
                             np.random.default_rng(18))
        assert ens.params[0][0] == 1.0 and ens.params[1][0] == 2.0
        assert ens.wrenches == [] and ens.resets == []

    def test_identity_plan_zero_sigma_only_resets_windows(self):
        ens = FakeEnsemble([[1.0], [2.0]], [[10.0], [20.0]])
        plan = UpdatePlan(sources=np.array([0, 1]))
        resample_and_perturb(ens, plan, ExplorationConfig(np.zeros(1), 0.0, 0.0),
                             np.random.default_rng(19))
        assert ens.params == [np.array([1.0]), np.array([2.0])]
        assert ens.states[0][0] == 10.0 and ens.states[1][0] == 20.0
        assert ens.wrenches == []
        assert ens.resets == [0, 1]

    def test_swap_does_not_alias(self):
        # both lanes copy from each other; staging must read before writing
        ens = FakeEnsemble([[1.0], [2.0]], [[10.0], [20.0]])
        plan = UpdatePlan(sources=np.array([1, 0]))
        resample_and_perturb(ens, plan, ExplorationConfig(np.zeros(1), 0.0, 0.0),
                             np.random.default_rng(20))
        assert ens.params[0][0] == 2.0 and ens.params[1][0] == 1.0
        assert ens.states[0][0] == 20.0 and ens.states[1][0] == 10.0

    def test_perturbation_replays_generator_stream(self):
        sigma = np.array([0.5, 0.1])
        explore = ExplorationConfig(sigma, sigma_force=0.3, sigma_torque=0.05)
        ens = FakeEnsemble([[1.0, 2.0], [3.0, 4.0]], [[0.0], [0.0]])
        plan = UpdatePlan(sources=np.array([1, 1]))
        resample_and_perturb(ens, plan, explore, np.random.default_rng(21))

        rng = np.random.default_rng(21)
        for i in range(2):
            theta = np.array([3.0, 4.0]) + rng.normal(0.0, 1.0, size=2) * sigma
            force = rng.normal(0.0, 1.0, size=2) * 0.3
            torque = rng.normal(0.0, 1.0) * 0.05
            assert np.array_equal(ens.params[i], theta)
            idx, got_force, got_torque = ens.wrenches[i]
            assert idx == i
            assert np.array_equal(got_force, force)
            assert got_torque == torque

    def test_source_count_mismatch_raises(self):
        ens = FakeEnsemble([[1.0], [2.0]], [[0.0], [0.0]])
        with pytest.raises(ValueError):
            resample_and_perturb(ens, UpdatePlan(sources=np.array([0])),
                                 ExplorationConfig(np.zeros(1), 0.0, 0.0),
                                 np.random.default_rng(22))

    def test_exploration_config_rejects_negative_sigma(self):
        with pytest.raises(ValueError):
            ExplorationConfig(np.array([-0.1]), 0.0, 0.0)
        with pytest.raises(ValueError):
            ExplorationConfig(np.zeros(1), -1.0, 0.0)

    def test_scaled_multiplies_every_sigma(self):
        cfg = ExplorationConfig(np.array([0.2, 0.4]), 0.6, 0.05).scaled(0.5)
        assert np.allclose(cfg.sigma_params, [0.1, 0.2])
        assert cfg.sigma_force == 0.3 and cfg.sigma_torque == 0.025
