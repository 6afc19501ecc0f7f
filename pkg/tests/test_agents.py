"""Agent and evolution-strategy learner tests."""
import numpy as np
import pytest

from agiledrive.agents import (EsAgent, EsConfig, PolicyNet, RandomAgent,
                               ReplayAgent, ZeroAgent, es_update, make_agent,
                               perturbation, rank_normalize)


class TestPolicyNet:
    def test_parameter_count(self):
        net = PolicyNet((3, 4, 2))
        assert net.n_params == 3 * 4 + 4 + 4 * 2 + 2

    def test_zero_params_zero_output(self):
        net = PolicyNet((5, 3, 2))
        out = net.forward(net.init_params(), np.ones(5))
        assert np.array_equal(out, np.zeros(2))

    def test_forward_matches_manual_composition(self):
        net = PolicyNet((3, 4, 2))
        rng = np.random.default_rng(0)
        params = rng.normal(size=net.n_params)
        x = rng.normal(size=3)

        w1 = params[:12].reshape(3, 4)
        b1 = params[12:16]
        w2 = params[16:24].reshape(4, 2)
        b2 = params[24:26]
        expected = np.tanh(np.tanh(x @ w1 + b1) @ w2 + b2)
        assert np.allclose(net.forward(params, x), expected, atol=1e-12)

    def test_output_bounded(self):
        net = PolicyNet((6, 8, 2))
        rng = np.random.default_rng(1)
        for _ in range(50):
            params = rng.normal(scale=10.0, size=net.n_params)
            out = net.forward(params, rng.normal(size=6))
            assert np.all(np.abs(out) <= 1.0)

    def test_seeded_init_nonzero(self):
        net = PolicyNet((4, 2))
        params = net.init_params(np.random.default_rng(3), scale=0.1)
        assert params.shape == (net.n_params,)
        assert np.any(params != 0.0)

    def test_rejects_degenerate_sizes(self):
        with pytest.raises(ValueError):
            PolicyNet((5,))


class TestSimpleAgents:
    def test_zero_agent(self):
        agent = ZeroAgent()
        assert np.array_equal(agent.act(np.ones(96)), np.zeros(2))

    def test_es_agent_zero_params_is_zero_residual(self):
        net = PolicyNet((96, 64, 64, 2))
        agent = EsAgent(net)
        out = agent.act(np.random.default_rng(0).uniform(size=96))
        assert np.array_equal(out, np.zeros(2))

    def test_random_agent_bounded_and_seeded(self):
        a = RandomAgent(np.random.default_rng(5))
        b = RandomAgent(np.random.default_rng(5))
        for _ in range(20):
            act_a = a.act(None)
            act_b = b.act(None)
            assert np.array_equal(act_a, act_b)
            assert np.all(np.abs(act_a) <= 1.0)

    def test_replay_agent_plays_then_holds(self):
        agent = ReplayAgent([[0.1, 0.2], [0.3, 0.4]])
        assert np.allclose(agent.act(None), [0.1, 0.2])
        assert np.allclose(agent.act(None), [0.3, 0.4])
        assert np.array_equal(agent.act(None), np.zeros(2))

    def test_make_agent_kinds(self):
        rng = np.random.default_rng(0)
        assert isinstance(make_agent("zero", 96, rng), ZeroAgent)
        assert isinstance(make_agent("random", 96, rng), RandomAgent)
        es = make_agent("es", 96, rng)
        assert isinstance(es, EsAgent)
        assert es.net.sizes == (96, 64, 64, 2)
        with pytest.raises(ValueError):
            make_agent("oracle", 96, rng)

    def test_es_agent_param_length_checked(self):
        with pytest.raises(ValueError):
            EsAgent(PolicyNet((4, 2)), np.zeros(3))


class TestPerturbations:
    def test_deterministic_per_seed(self):
        a = perturbation(42, 100)
        b = perturbation(42, 100)
        c = perturbation(43, 100)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_perturbed_agent_offsets_params(self):
        net = PolicyNet((4, 2))
        base = EsAgent(net, np.full(net.n_params, 0.5))
        eps = perturbation(7, net.n_params)
        plus = base.perturbed(7, 1.0, 0.1)
        minus = base.perturbed(7, -1.0, 0.1)
        assert np.array_equal(plus.params, base.params + 0.1 * eps)
        assert np.array_equal(minus.params, base.params - 0.1 * eps)


class TestRankNormalize:
    def test_ordering(self):
        out = rank_normalize([10.0, 30.0, 20.0])
        assert np.allclose(out, [-0.5, 0.5, 0.0])

    def test_zero_centered(self):
        rng = np.random.default_rng(2)
        out = rank_normalize(rng.normal(size=17))
        assert abs(float(np.sum(out))) < 1e-12

    def test_ties_share_average_rank(self):
        out = rank_normalize([5.0, 5.0, 7.0, 7.0])
        assert np.allclose(out, [-1 / 3, -1 / 3, 1 / 3, 1 / 3])

    def test_all_equal_normalizes_to_zero(self):
        assert np.array_equal(rank_normalize([3.0] * 8), np.zeros(8))

    def test_scale_invariance(self):
        r = [1.0, 5.0, 2.0, 4.0]
        assert np.array_equal(rank_normalize(r),
                              rank_normalize([1e6 * v for v in r]))


class TestEsUpdate:
    def test_equal_returns_no_update(self):
        config = EsConfig(population=4)
        params = np.array([1.0, -2.0])
        out = es_update(params, [(1, 5.0), (1, 5.0), (2, 5.0), (2, 5.0)],
                        config)
        assert np.array_equal(out, params)

    def test_single_pair_moves_toward_better_arm(self):
        config = EsConfig(population=2, noise_sigma=0.1, learning_rate=0.2)
        params = np.zeros(3)
        eps = perturbation(9, 3)
        # +sigma arm scored higher: step along +eps
        out = es_update(params, [(9, 1.0), (9, 0.0)], config)
        scale = 0.2 / (2 * 0.1)
        assert np.allclose(out, scale * 1.0 * eps, atol=1e-15)
        # arms swapped: step along -eps
        out = es_update(params, [(9, 0.0), (9, 1.0)], config)
        assert np.allclose(out, -scale * 1.0 * eps, atol=1e-15)

    def test_validation(self):
        config = EsConfig(population=4)
        with pytest.raises(ValueError):
            es_update(np.zeros(2), [(1, 0.0), (1, 0.0)], config)
        with pytest.raises(ValueError):
            es_update(np.zeros(2),
                      [(1, 0.0), (2, 0.0), (3, 0.0), (3, 0.0)], config)
        with pytest.raises(ValueError):
            es_update(np.zeros(2),
                      [(1, 0.0), (1, float("nan")), (2, 0.0), (2, 0.0)],
                      config)

    def test_quadratic_bandit_convergence(self):
        """ES climbs a 2-parameter quadratic to near its maximum.

        Rank-based updates do not shrink with the fitness gap, so the
        iterate settles into a random walk of radius about
        learning_rate / noise_sigma around the optimum; the threshold
        reflects that plateau, not exact convergence.
        """
        target = np.array([0.7, -0.3])
        config = EsConfig(population=8, noise_sigma=0.1, learning_rate=0.05)
        params = np.zeros(2)
        for it in range(200):
            evals = []
            for j in range(4):
                seed = it * 4 + j + 1
                eps = perturbation(seed, 2)
                for sign in (1.0, -1.0):
                    theta = params + sign * config.noise_sigma * eps
                    evals.append((seed, -float(np.sum((theta - target) ** 2))))
            params = es_update(params, evals, config)
        assert float(np.linalg.norm(params - target)) < 0.15

    def test_update_determinism(self):
        config = EsConfig(population=4, noise_sigma=0.2, learning_rate=0.3)
        evals = [(11, 2.0), (11, 1.0), (12, -1.0), (12, 4.0)]
        a = es_update(np.ones(50), evals, config)
        b = es_update(np.ones(50), evals, config)
        assert np.array_equal(a, b)


class TestEsConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            EsConfig(population=3)
        with pytest.raises(ValueError):
            EsConfig(population=0)
        with pytest.raises(ValueError):
            EsConfig(noise_sigma=0.0)
        with pytest.raises(ValueError):
            EsConfig(learning_rate=-0.1)
        with pytest.raises(ValueError):
            EsConfig(episodes_per_eval=0)
