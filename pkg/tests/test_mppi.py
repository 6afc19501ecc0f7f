"""Planner tests: softmax algebra, optimizer oracle, warm-start, scorer."""
import dataclasses
import math

import numpy as np
import pytest

from agiledrive.dynamics import VehicleParams, VehicleState, kbm_step, ControlCommand
from agiledrive.mppi import (MppiConfig, MppiPlan, RolloutScorer, init_plan,
                             plan, sample_action, shift_prior, softmax_weights)
from agiledrive.track import (FootprintConfig, LidarConfig, annular_track,
                              collision_indicator, raycast)


class QuadraticScorer:
    """1-step surrogate: reward -sum_i c_i (a_i - target_i)^2, no collisions.

    Per-channel curvature lets the test match the objective's width to the
    sampler's per-channel noise scale, so both channels resolve equally well.
    """

    def __init__(self, target, curvature=(1.0, 1.0), v_max=3.0,
                 delta_max=0.42):
        self.target = np.asarray(target, dtype=np.float64)
        self.curvature = np.asarray(curvature, dtype=np.float64)
        self.v_max = v_max
        self.delta_max = delta_max

    def evaluate(self, state, sequences, dt):
        seqs = np.asarray(sequences)
        scores = -np.sum(self.curvature * (seqs[:, 0, :] - self.target) ** 2,
                         axis=1)
        return scores, np.zeros(seqs.shape[0], dtype=bool)


class AlwaysCollidingScorer:
    v_max = 3.0
    delta_max = 0.42

    def evaluate(self, state, sequences, dt):
        k = np.asarray(sequences).shape[0]
        return np.full(k, -1.0), np.ones(k, dtype=bool)


class TestSoftmaxWeights:
    def test_sum_to_one(self):
        rng = np.random.default_rng(0)
        for temperature in (0.001, 0.1, 10.0):
            scores = rng.uniform(-50.0, 50.0, size=256)
            w = softmax_weights(scores, temperature)
            assert abs(float(np.sum(w)) - 1.0) < 1e-9
            assert np.all(w >= 0.0)

    def test_high_temperature_limit_uniform(self):
        rng = np.random.default_rng(1)
        scores = rng.uniform(-10.0, 10.0, size=128)
        w = softmax_weights(scores, 1e6)
        assert np.max(np.abs(w - 1.0 / 128)) < 1e-6

    def test_shift_invariance_bit_exact(self):
        # dyadic scores and shift: the additions are exact, so the
        # max-subtracted exponents are bitwise identical
        scores = np.array([1.5, 2.25, -3.75, 0.5, 2.25])
        for shift in (2.5, -8.0, 1024.0):
            a = softmax_weights(scores, 0.01)
            b = softmax_weights(scores + shift, 0.01)
            assert np.array_equal(a, b)

    def test_shift_invariance_generic(self):
        rng = np.random.default_rng(2)
        scores = rng.normal(size=64)
        a = softmax_weights(scores, 0.05)
        b = softmax_weights(scores + math.pi, 0.05)
        assert np.allclose(a, b, rtol=0, atol=1e-12)

    def test_low_temperature_never_overflows(self):
        scores = np.array([-1e6, 0.0, 1e6])
        w = softmax_weights(scores, 1e-9)
        assert np.all(np.isfinite(w))
        assert w[2] == pytest.approx(1.0)

    def test_entropy_nondecreasing_in_temperature(self):
        rng = np.random.default_rng(3)
        scores = rng.uniform(-5.0, 5.0, size=64)

        def entropy(w):
            pos = w[w > 0]
            return float(-np.sum(pos * np.log(pos)))

        temps = [0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0]
        values = [entropy(softmax_weights(scores, t)) for t in temps]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


class TestPlanAlgebra:
    def test_single_sample_passthrough(self):
        """K=1: the weighted blend is exactly the one perturbed sample."""
        config = MppiConfig(n_samples=1, horizon=10)
        scorer = QuadraticScorer((0.0, 0.0))
        prior = init_plan(config)
        out = plan(VehicleState(v=1.0), scorer, prior, config,
                   np.random.default_rng(42))
        # regenerate the identical draw
        rng = np.random.default_rng(42)
        noise = rng.standard_normal((1, 10, 2))
        noise[..., 0] *= config.noise_std_v
        noise[..., 1] *= config.noise_std_delta
        expected = prior.mean[None] + noise
        np.clip(expected[..., 0], -scorer.v_max, scorer.v_max,
                out=expected[..., 0])
        np.clip(expected[..., 1], -scorer.delta_max, scorer.delta_max,
                out=expected[..., 1])
        assert np.array_equal(out.mean, expected[0])
        assert out.weights.tolist() == [1.0]

    def test_quadratic_surrogate_optimum(self):
        """1-step planner lands on the brute-force optimum of -(a-a*)^2."""
        target = np.array([0.3, -0.03])
        config = MppiConfig(horizon=1, n_samples=10_000, temperature=0.002)
        ratio = config.noise_std_v / config.noise_std_delta
        curvature = (1.0, ratio * ratio)
        scorer = QuadraticScorer(target, curvature)
        prior = MppiPlan(mean=np.zeros((1, 2)),
                         std=np.tile(config.noise_std(), (1, 1)),
                         weights=np.full(10_000, 1e-4))
        out = plan(VehicleState(v=1.0), scorer, prior, config,
                   np.random.default_rng(7))

        # dense grid search over the clamped action box
        v_grid = np.linspace(-scorer.v_max, scorer.v_max, 1201)
        d_grid = np.linspace(-scorer.delta_max, scorer.delta_max, 841)
        vv, dd = np.meshgrid(v_grid, d_grid, indexing="ij")
        obj = -(curvature[0] * (vv - target[0]) ** 2
                + curvature[1] * (dd - target[1]) ** 2)
        best = np.unravel_index(np.argmax(obj), obj.shape)
        optimum = np.array([v_grid[best[0]], d_grid[best[1]]])

        tol = 2.0 * config.noise_std() / math.sqrt(config.n_samples)
        gap = np.abs(out.mean[0] - optimum)
        assert gap[0] < tol[0]
        assert gap[1] < tol[1]

    def test_all_immediate_collisions_flag_prior(self):
        config = MppiConfig(n_samples=64)
        prior = init_plan(config)
        prior = dataclasses.replace(prior, mean=prior.mean + 0.25)
        out = plan(VehicleState(v=1.0), AlwaysCollidingScorer(), prior,
                   config, np.random.default_rng(0))
        assert out.predicted_return == float("-inf")
        assert np.array_equal(out.mean, prior.mean)

    def test_output_mean_respects_clamps(self):
        config = MppiConfig(n_samples=128)
        scorer = QuadraticScorer((10.0, 2.0), v_max=3.0, delta_max=0.42)
        prior = init_plan(config)
        out = plan(VehicleState(v=0.0), scorer, prior, config,
                   np.random.default_rng(3))
        assert np.all(out.mean[:, 0] <= 3.0)
        assert np.all(out.mean[:, 0] >= -3.0)
        assert np.all(np.abs(out.mean[:, 1]) <= 0.42)

    def test_rejects_nonfinite_state(self):
        config = MppiConfig(n_samples=8)
        with pytest.raises(Exception):
            plan(VehicleState(v=float("nan")), QuadraticScorer((0, 0)),
                 init_plan(config), config, np.random.default_rng(0))


class TestShiftPrior:
    def test_pure_shift_with_zero_decay(self):
        config = MppiConfig(prior_decay=0.0)
        mean = np.arange(20, dtype=np.float64).reshape(10, 2)
        shifted = shift_prior(MppiPlan(mean=mean.copy(),
                                       std=np.ones((10, 2)),
                                       weights=np.ones(4) / 4), config)
        assert np.array_equal(shifted.mean[:-1], mean[1:])
        assert np.array_equal(shifted.mean[-1], np.zeros(2))

    def test_full_decay_repeats_terminal(self):
        config = MppiConfig(prior_decay=1.0)
        mean = np.arange(20, dtype=np.float64).reshape(10, 2)
        shifted = shift_prior(MppiPlan(mean=mean.copy(),
                                       std=np.ones((10, 2)),
                                       weights=np.ones(4) / 4), config)
        assert np.array_equal(shifted.mean[-1], mean[-1])

    def test_partial_decay_mixes_toward_zero(self):
        config = MppiConfig(prior_decay=0.25)
        mean = np.full((10, 2), 0.8)
        shifted = shift_prior(MppiPlan(mean=mean, std=np.ones((10, 2)),
                                       weights=np.ones(4) / 4), config)
        assert np.allclose(shifted.mean[-1], 0.2, atol=1e-15)

    def test_zero_plan_is_fixed_point(self):
        config = MppiConfig()
        zero = init_plan(config)
        shifted = shift_prior(zero, config)
        assert np.array_equal(shifted.mean, zero.mean)
        assert np.array_equal(shifted.weights, zero.weights)

    def test_weights_reset_uniform(self):
        config = MppiConfig(n_samples=10)
        spiky = MppiPlan(mean=np.zeros((10, 2)), std=np.ones((10, 2)),
                         weights=np.eye(10)[0])
        shifted = shift_prior(spiky, config)
        assert np.allclose(shifted.weights, 0.1, atol=1e-15)


class TestSampleAction:
    def test_zero_std_returns_mean(self):
        mean = np.tile([[1.25, -0.2]], (10, 1))
        plan_ = MppiPlan(mean=mean, std=np.zeros((10, 2)),
                         weights=np.ones(4) / 4)
        cmd = sample_action(plan_, np.random.default_rng(0), VehicleParams())
        assert cmd.v_cmd == 1.25
        assert cmd.delta_cmd == -0.2

    def test_law_of_large_numbers(self):
        config = MppiConfig()
        mean = np.tile([[0.8, 0.05]], (10, 1))
        plan_ = MppiPlan(mean=mean, std=np.tile(config.noise_std(), (10, 1)),
                         weights=np.ones(4) / 4)
        rng = np.random.default_rng(123)
        params = VehicleParams()
        n = 100_000
        draws = np.array([[c.v_cmd, c.delta_cmd] for c in
                          (sample_action(plan_, rng, params)
                           for _ in range(n))])
        tol = 4.0 * config.noise_std() / math.sqrt(n)
        # clamping is negligible here: mean is far from the bounds
        assert abs(float(np.mean(draws[:, 0])) - 0.8) < tol[0]
        assert abs(float(np.mean(draws[:, 1])) - 0.05) < tol[1]

    def test_clamped_at_speed_cap(self):
        params = VehicleParams()
        mean = np.tile([[params.v_max, 0.0]], (10, 1))
        plan_ = MppiPlan(mean=mean, std=np.full((10, 2), 0.5),
                         weights=np.ones(4) / 4)
        rng = np.random.default_rng(9)
        for _ in range(500):
            cmd = sample_action(plan_, rng, params)
            assert cmd.v_cmd <= params.v_max
            assert abs(cmd.delta_cmd) <= params.delta_max

    def test_executed_actions_disperse(self):
        """The executed command is a draw, not the mean: spread > 0."""
        plan_ = init_plan(MppiConfig())
        rng = np.random.default_rng(4)
        params = VehicleParams()
        steering = [sample_action(plan_, rng, params).delta_cmd
                    for _ in range(100)]
        assert float(np.std(steering)) > 0.0


@pytest.fixture(scope="module")
def world():
    track = annular_track(1.5, 2.5, 96)
    params = VehicleParams()
    lidar = LidarConfig()
    footprint = FootprintConfig()
    scorer = RolloutScorer(track, params, lidar, footprint)
    return track, params, lidar, footprint, scorer


class TestRolloutScorer:
    def test_pose_collision_parity_with_indicator(self, world):
        track, params, lidar, footprint, scorer = world
        rng = np.random.default_rng(21)
        disagreements = 0
        for _ in range(300):
            r = rng.uniform(1.4, 2.6)
            angle = rng.uniform(0, 2 * math.pi)
            pose = (r * math.cos(angle), r * math.sin(angle),
                    rng.uniform(-math.pi, math.pi))
            scan = raycast(pose, track, lidar)
            expected = collision_indicator(scan, footprint)
            if scorer.pose_collides(*pose) != expected:
                disagreements += 1
        assert disagreements == 0

    def test_rollout_scores_match_reference(self, world):
        """Kernel rollouts replicate kbm_step + indicator + reward."""
        track, params, lidar, footprint, scorer = world
        rng = np.random.default_rng(8)
        state = VehicleState(x=2.0, y=0.0, yaw=math.pi / 2, v=1.0)
        seqs = rng.uniform([-1.0, -0.4], [3.0, 0.4], size=(16, 10, 2))
        scores, immediate = scorer.evaluate(state, seqs, 0.01)

        for k in range(16):
            sim = state
            total = 0.0
            hit_first = False
            for t in range(10):
                cmd = ControlCommand(seqs[k, t, 0], seqs[k, t, 1])
                sim = kbm_step(sim, cmd, params, 0.01)
                scan = raycast(sim, track, lidar)
                col = collision_indicator(scan, footprint)
                total += 1.0 * sim.v - 1.0 * abs(sim.v) * col
                if col:
                    hit_first = t == 0
                    break
            assert scores[k] == pytest.approx(total, abs=1e-9)
            assert bool(immediate[k]) == hit_first

    def test_lane_keeping_beats_wall_ram(self, world):
        """At matched speed, a crash truncates the return: cruising wins."""
        track, params, lidar, footprint, scorer = world
        state = VehicleState(x=2.0, y=0.0, yaw=math.pi / 2, v=1.0)
        # steer along the r=2 centerline circle
        follow = math.atan(params.wheelbase / 2.0)
        cruise = np.tile([1.0, follow], (10, 1)).reshape(1, 10, 2)
        ram = np.tile([1.0, -0.42], (10, 1)).reshape(1, 10, 2)
        s_cruise, _ = scorer.evaluate(state, cruise, 0.08)
        s_ram, _ = scorer.evaluate(state, ram, 0.08)
        assert s_cruise[0] > s_ram[0] + 1.0

    def test_plan_determinism(self, world):
        track, params, lidar, footprint, scorer = world
        config = MppiConfig(n_samples=256)
        state = VehicleState(x=2.0, y=0.0, yaw=math.pi / 2, v=1.0)
        a = plan(state, scorer, init_plan(config), config,
                 np.random.default_rng(77))
        b = plan(state, scorer, init_plan(config), config,
                 np.random.default_rng(77))
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.weights, b.weights)
        assert a.predicted_return == b.predicted_return


class TestConfigValidation:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            MppiConfig(horizon=0)
        with pytest.raises(ValueError):
            MppiConfig(temperature=0.0)
        with pytest.raises(ValueError):
            MppiConfig(n_samples=0)
        with pytest.raises(ValueError):
            MppiConfig(prior_decay=1.5)
        with pytest.raises(ValueError):
            MppiConfig(model="oracle")

    def test_init_plan_shape(self):
        config = MppiConfig(horizon=7, n_samples=33)
        p = init_plan(config)
        assert p.mean.shape == (7, 2)
        assert np.all(p.mean == 0.0)
        assert np.allclose(p.std[:, 0], config.noise_std_v)
        assert np.allclose(p.std[:, 1], config.noise_std_delta)
        assert p.weights.shape == (33,)
        assert np.allclose(p.weights, 1.0 / 33)
