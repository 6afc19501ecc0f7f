"""Sampling-based model-predictive planner.

Each call draws K command sequences around a warm-started prior mean,
rolls them through a predictive vehicle model, scores cumulative
predicted reward and blends the samples with exponential weights.  The
temperature controls how sharply the blend concentrates on the best
samples; the update is the information-theoretic MPC rule penalizing
divergence from the previous plan.

The executed command is a Gaussian draw from the first slot of the
updated plan rather than the mean itself, which gives the policy the
exploration spread the rest of the stack relies on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .dynamics import ControlCommand, VehicleParams, VehicleState
from .track import FootprintConfig, LidarConfig, TrackGeometry

PREDICTIVE_MODELS = ("kbm", "ground_truth")


@dataclass(frozen=True)
class MppiConfig:
    """Planner hyperparameters.

    ``horizon`` steps of ``dt`` seconds each, ``n_samples`` rollouts
    per plan, softmax ``temperature``, per-channel exploration noise
    and the warm-start ``prior_decay`` that scales the freshly exposed
    terminal slot (0 recenters it on the zero command, 1 repeats the
    previous terminal command).
    """

    horizon: int = 10
    dt: float = 0.01
    n_samples: int = 1024
    temperature: float = 0.001
    noise_std_v: float = 0.5
    noise_std_delta: float = 0.15
    prior_decay: float = 1.0
    model: str = "kbm"

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError("dt must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not (math.isfinite(self.temperature) and self.temperature > 0.0):
            raise ValueError("temperature must be positive")
        if self.noise_std_v <= 0.0 or self.noise_std_delta <= 0.0:
            raise ValueError("noise stds must be positive")
        if not 0.0 <= self.prior_decay <= 1.0:
            raise ValueError("prior_decay must lie in [0, 1]")
        if self.model not in PREDICTIVE_MODELS:
            raise ValueError(f"model must be one of {PREDICTIVE_MODELS}")

    def noise_std(self) -> np.ndarray:
        return np.array([self.noise_std_v, self.noise_std_delta])


@dataclass(frozen=True)
class MppiPlan:
    """Planner state carried between control steps.

    ``mean`` is the (T, 2) command-sequence mean, ``std`` the per-slot
    sampling spread, ``weights`` the most recent normalized sample
    weights and ``predicted_return`` the score of the mean sequence.
    A ``predicted_return`` of -inf flags a plan whose every sample
    collided immediately; callers use it to trigger recovery behavior.
    """

    mean: np.ndarray
    std: np.ndarray
    weights: np.ndarray
    predicted_return: float = 0.0


def init_plan(config: MppiConfig) -> MppiPlan:
    """Zero-command plan with uniform weights."""
    mean = np.zeros((config.horizon, 2))
    std = np.tile(config.noise_std(), (config.horizon, 1))
    weights = np.full(config.n_samples, 1.0 / config.n_samples)
    return MppiPlan(mean=mean, std=std, weights=weights, predicted_return=0.0)


def shift_prior(plan: MppiPlan, config: MppiConfig) -> MppiPlan:
    """Warm start for the next step: drop the consumed first slot.

    The newly exposed terminal slot is the previous terminal command
    scaled by ``prior_decay``; weights reset to uniform.
    """
    mean = np.empty_like(plan.mean)
    mean[:-1] = plan.mean[1:]
    mean[-1] = config.prior_decay * plan.mean[-1]
    weights = np.full(plan.weights.shape[0], 1.0 / plan.weights.shape[0])
    return MppiPlan(mean=mean, std=plan.std.copy(), weights=weights,
                    predicted_return=plan.predicted_return)


def softmax_weights(scores: np.ndarray, temperature: float) -> np.ndarray:
    """Exponential weights, numerically anchored at the best score.

    Subtracting the maximum before exponentiating is mandatory: the
    weights are algebraically unchanged and the largest exponent is
    exactly zero, so low temperatures cannot overflow.
    """
    scores = np.asarray(scores, dtype=np.float64)
    shifted = (scores - np.max(scores)) / temperature
    w = np.exp(shifted)
    return w / np.sum(w)


def plan(state: VehicleState, scorer, prior: MppiPlan,
         config: MppiConfig, rng: np.random.Generator) -> MppiPlan:
    """One planning cycle.

    ``scorer`` must expose ``v_max``, ``delta_max`` and
    ``evaluate(state, sequences, dt) -> (scores, immediate)``.  When
    every sample collides on its first predicted step there is nothing
    to rank, so the prior is returned unchanged except for a
    ``predicted_return`` of -inf.
    """
    state.require_finite()
    K = config.n_samples
    noise = rng.standard_normal((K, config.horizon, 2))
    noise[..., 0] *= config.noise_std_v
    noise[..., 1] *= config.noise_std_delta
    seqs = prior.mean[None, :, :] + noise
    np.clip(seqs[..., 0], -scorer.v_max, scorer.v_max, out=seqs[..., 0])
    np.clip(seqs[..., 1], -scorer.delta_max, scorer.delta_max, out=seqs[..., 1])

    scores, immediate = scorer.evaluate(state, seqs, config.dt)
    if bool(np.all(immediate)):
        return replace(prior, predicted_return=float("-inf"))

    weights = softmax_weights(scores, config.temperature)
    mean = np.einsum("k,ktc->tc", weights, seqs)
    np.clip(mean[:, 0], -scorer.v_max, scorer.v_max, out=mean[:, 0])
    np.clip(mean[:, 1], -scorer.delta_max, scorer.delta_max, out=mean[:, 1])

    mean_score, _ = scorer.evaluate(state, mean[None, :, :], config.dt)
    return MppiPlan(mean=mean, std=prior.std.copy(), weights=weights,
                    predicted_return=float(mean_score[0]))


def sample_action(plan_: MppiPlan, rng: np.random.Generator,
                  params: VehicleParams) -> ControlCommand:
    """Stochastic executed command: Gaussian draw from the first slot."""
    draw = plan_.mean[0] + plan_.std[0] * rng.standard_normal(2)
    return ControlCommand(
        v_cmd=float(min(max(draw[0], -params.v_max), params.v_max)),
        delta_cmd=float(min(max(draw[1], -params.delta_max), params.delta_max)),
    )


class RolloutScorer:
    """Scores command sequences against the track with a jitted kernel.

    The predictive model is either the planner's kinematic bicycle or
    the full ground-truth single track; collision tests match the
    environment's indicator decision exactly.
    """

    def __init__(self, track: TrackGeometry, params: VehicleParams,
                 lidar: LidarConfig, footprint: FootprintConfig,
                 w_v: float = 1.0, w_c: float = 1.0, model: str = "kbm"):
        if model not in PREDICTIVE_MODELS:
            raise ValueError(f"model must be one of {PREDICTIVE_MODELS}")
        self.track = track
        self.params = params
        self.v_max = params.v_max
        self.delta_max = params.delta_max
        self.w_v = float(w_v)
        self.w_c = float(w_c)
        self.model_flag = 0 if model == "kbm" else 1
        self.beam_body = np.ascontiguousarray(lidar.beam_angles())
        self.thresholds = np.ascontiguousarray(footprint.beam_thresholds(lidar))
        self.cull_radius = float(np.max(self.thresholds))
        self.grid = _kernels.build_segment_grid(track, 2.0 * self.cull_radius)
        self._params_arr = params.as_array()

    def evaluate(self, state: VehicleState, sequences, dt: float):
        seqs = np.ascontiguousarray(sequences, dtype=np.float64)
        if seqs.ndim != 3 or seqs.shape[2] != 2:
            raise ValueError("sequences must have shape (K, T, 2)")
        scores = np.empty(seqs.shape[0])
        immediate = np.zeros(seqs.shape[0], dtype=np.uint8)
        g = self.grid
        _kernels.rollout_returns(
            state.as_array(), seqs, dt, self.model_flag, self._params_arr,
            self.w_v, self.w_c, self.beam_body, self.thresholds,
            self.cull_radius, g.origin_x, g.origin_y, g.cell_size,
            g.nx, g.ny, g.cell_start, g.cell_items,
            g.seg_px, g.seg_py, g.seg_sx, g.seg_sy,
            scores, immediate)
        return scores, immediate.astype(bool)

    def pose_collides(self, x: float, y: float, yaw: float) -> int:
        """Indicator decision for a single pose, same math as rollouts."""
        g = self.grid
        scratch = np.empty(g.seg_px.shape[0] * 4 + 8, dtype=np.int64)
        return int(_kernels._pose_collides(
            float(x), float(y), float(yaw), self.beam_body, self.thresholds,
            self.cull_radius, g.origin_x, g.origin_y, g.cell_size,
            g.nx, g.ny, g.cell_start, g.cell_items,
            g.seg_px, g.seg_py, g.seg_sx, g.seg_sy, scratch))
