"""Forward-policy agents and the evolution-strategies learner.

Agents map a flat normalized observation vector to a two-value action
in [-1, 1].  The learner is a plain antithetic evolution strategy on
the parameters of a small tanh network: perturbations are regenerated
from integer seeds, fitness is rank-normalized, and the update is the
usual scaled sum of perturbations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class EsConfig:
    """Evolution-strategies hyperparameters.

    ``population`` counts antithetic arms and must be even: arms 2j
    and 2j+1 share a perturbation seed with opposite signs.  Rank-based
    updates never shrink with the fitness gap, so without annealing the
    iterate random-walks with step size learning_rate / noise_sigma;
    the per-update decay factors trade early exploration for a stable
    late-run policy.  Both default to 1.0 (no annealing).
    """

    population: int = 8
    noise_sigma: float = 0.05
    learning_rate: float = 0.2
    episodes_per_eval: int = 1
    lr_decay: float = 1.0
    sigma_decay: float = 1.0

    def __post_init__(self):
        if self.population < 2 or self.population % 2 != 0:
            raise ValueError("population must be even and >= 2")
        if self.noise_sigma <= 0.0 or self.learning_rate <= 0.0:
            raise ValueError("noise_sigma and learning_rate must be positive")
        if self.episodes_per_eval < 1:
            raise ValueError("episodes_per_eval must be >= 1")
        for name in ("lr_decay", "sigma_decay"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")

    def at_update(self, update_index: int) -> "EsConfig":
        """Annealed copy for the given 0-based update index."""
        if self.lr_decay == 1.0 and self.sigma_decay == 1.0:
            return self
        return replace(
            self,
            learning_rate=self.learning_rate * self.lr_decay ** update_index,
            noise_sigma=self.noise_sigma * self.sigma_decay ** update_index)


class PolicyNet:
    """Fully connected tanh network with a flat parameter vector."""

    def __init__(self, sizes=(96, 64, 64, 2)):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.n_params = sum(i * o + o for i, o in zip(self.sizes, self.sizes[1:]))

    def init_params(self, rng: np.random.Generator = None,
                    scale: float = 0.0) -> np.ndarray:
        """Zero by default, so the policy starts as the identity residual."""
        if scale == 0.0 or rng is None:
            return np.zeros(self.n_params)
        return scale * rng.standard_normal(self.n_params)

    def forward(self, params: np.ndarray, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        offset = 0
        for i, o in zip(self.sizes, self.sizes[1:]):
            w = params[offset:offset + i * o].reshape(i, o)
            offset += i * o
            b = params[offset:offset + o]
            offset += o
            h = np.tanh(h @ w + b)
        return h


class ZeroAgent:
    """Pure base-policy mode: contributes nothing to the composition."""

    def __init__(self, action_dim: int = 2):
        self.action_dim = action_dim

    def act(self, obs_vector) -> np.ndarray:
        return np.zeros(self.action_dim)


class RandomAgent:
    """Uniform actions, mostly useful for smoke tests."""

    def __init__(self, rng: np.random.Generator, action_dim: int = 2):
        self.rng = rng
        self.action_dim = action_dim

    def act(self, obs_vector) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, size=self.action_dim)


class ReplayAgent:
    """Plays back a fixed action sequence, then holds zeros."""

    def __init__(self, actions):
        self.actions = [np.asarray(a, dtype=np.float64) for a in actions]
        self.cursor = 0

    def act(self, obs_vector) -> np.ndarray:
        if self.cursor >= len(self.actions):
            return np.zeros(2)
        action = self.actions[self.cursor]
        self.cursor += 1
        return action


class EsAgent:
    """Policy-network agent whose parameters the ES learner evolves."""

    def __init__(self, net: PolicyNet, params: np.ndarray = None):
        self.net = net
        self.params = np.zeros(net.n_params) if params is None else \
            np.asarray(params, dtype=np.float64).copy()
        if self.params.shape[0] != net.n_params:
            raise ValueError("parameter vector does not match the network")

    def act(self, obs_vector) -> np.ndarray:
        return self.net.forward(self.params, obs_vector)

    def perturbed(self, seed: int, sign: float, sigma: float) -> "EsAgent":
        eps = perturbation(seed, self.net.n_params)
        return EsAgent(self.net, self.params + sign * sigma * eps)


def perturbation(seed: int, n_params: int) -> np.ndarray:
    """Deterministic unit-variance perturbation for a seed."""
    return np.random.default_rng(int(seed)).standard_normal(n_params)


def rank_normalize(returns) -> np.ndarray:
    """Map returns to centered average ranks in [-0.5, 0.5].

    Ties share their averaged rank, so a population with identical
    returns normalizes to all zeros and produces no update.
    """
    r = np.asarray(returns, dtype=np.float64)
    n = r.shape[0]
    if n < 2:
        return np.zeros(n)
    sorter = np.argsort(r, kind="stable")
    ranks = np.empty(n)
    ranks[sorter] = np.arange(n, dtype=np.float64)
    values, inverse = np.unique(r, return_inverse=True)
    sums = np.bincount(inverse, weights=ranks)
    counts = np.bincount(inverse)
    ranks = (sums / counts)[inverse]
    return ranks / (n - 1) - 0.5


def es_update(params: np.ndarray, evaluations, config: EsConfig) -> np.ndarray:
    """One ES step from a full population of (seed, return) pairs.

    ``evaluations`` lists antithetic pairs in order: entries 2j and
    2j+1 carry the same seed and are treated as the +sigma and -sigma
    arms respectively.
    """
    if len(evaluations) != config.population:
        raise ValueError("evaluations must cover the whole population")
    seeds = [int(s) for s, _ in evaluations]
    returns = np.asarray([float(ret) for _, ret in evaluations])
    if not np.all(np.isfinite(returns)):
        raise ValueError("returns must be finite")
    for j in range(0, len(seeds), 2):
        if seeds[j] != seeds[j + 1]:
            raise ValueError("antithetic pairs must share a seed")

    u = rank_normalize(returns)
    grad = np.zeros_like(params)
    for j in range(0, len(seeds), 2):
        eps = perturbation(seeds[j], params.shape[0])
        grad += (u[j] - u[j + 1]) * eps
    scale = config.learning_rate / (config.population * config.noise_sigma)
    return params + scale * grad


def make_agent(kind: str, obs_dim: int, rng: np.random.Generator,
               hidden=(64, 64)):
    if kind == "zero":
        return ZeroAgent()
    if kind == "random":
        return RandomAgent(rng)
    if kind == "es":
        net = PolicyNet((obs_dim, *hidden, 2))
        return EsAgent(net, net.init_params())
    raise ValueError(f"unknown agent kind {kind!r}")
