"""Experiment runners: training, baseline, evaluation, sweep matrix.

Every run writes the same artifact set into its output directory:

* ``train_log.csv`` -- one row per episode, floats via ``repr`` so
  seed-matched runs are comparable byte for byte,
* ``records.jsonl`` -- full step-level records for replay,
* ``summary.json`` -- aggregates and provenance (seed, digest),
* ``checkpoint.npz`` -- learner parameters, when a learner is used.
"""
from __future__ import annotations

import dataclasses
import json
import time
from pathlib import Path

import numpy as np

from .agents import (EsAgent, PolicyNet, RandomAgent, ZeroAgent, es_update,
                     perturbation)
from .config import ExperimentConfig, config_digest
from .env import (EnvConfig, ResetFreeEnv, ResetTimeoutError,
                  normalized_to_command)
from .mppi import MppiConfig
from .records import RecordWriter
from .seeding import spawn_seed, substream


def build_env(config: ExperimentConfig, mppi_config: MppiConfig = None,
              env_config: EnvConfig = None, recorder=None,
              seed: int = None) -> ResetFreeEnv:
    return ResetFreeEnv(
        track=config.track.build(),
        params=config.vehicle,
        lidar=config.lidar,
        footprint=config.footprint,
        mppi_config=mppi_config or config.mppi_base,
        reward_config=config.reward,
        env_config=env_config or config.env,
        seed=config.run.seed if seed is None else seed,
        recorder=recorder,
    )


def play_episode(env: ResetFreeEnv, agent, obs):
    """Drive one episode to termination or truncation."""
    total = 0.0
    steps = 0
    while True:
        action = agent.act(obs.vector())
        outcome = env.step(normalized_to_command(action, env.params))
        total += outcome.reward
        steps += 1
        obs = outcome.observation
        if outcome.terminated or outcome.truncated:
            return total, steps, outcome.terminated


class _LifecycleTracker:
    """Advances the env between episodes and counts recovery outcomes."""

    def __init__(self, env: ResetFreeEnv):
        self.env = env
        self.reset_timeouts = 0
        self.last_reset_steps = 0

    def next_episode(self, terminated: bool):
        if terminated:
            try:
                obs = self.env.run_reset()
                self.last_reset_steps = self.env.last_reset_steps
            except ResetTimeoutError:
                self.reset_timeouts += 1
                self.last_reset_steps = self.env.env_config.reset_timeout_steps
                self.env.respawn()
                obs = self.env.begin_episode()
        else:
            obs = self.env.begin_episode()
            self.last_reset_steps = 0
        return obs


def _write_outputs(out_dir: Path, rows, summary: dict):
    with open(out_dir / "train_log.csv", "w") as fh:
        fh.write("episode,return,steps,collided,reset_steps\n")
        for episode, ret, steps, collided, reset_steps in rows:
            fh.write(f"{episode},{ret!r},{steps},{collided},{reset_steps}\n")
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)


def _summarize(rows, extra: dict) -> dict:
    returns = [r[1] for r in rows]
    final = returns[-20:]
    summary = {
        "episodes": len(rows),
        "mean_return": float(np.mean(returns)) if returns else 0.0,
        "final20_mean_return": float(np.mean(final)) if final else 0.0,
        "final20_std_return": float(np.std(final)) if final else 0.0,
        "total_steps": int(sum(r[2] for r in rows)),
        "collisions": int(sum(r[3] for r in rows)),
        "mean_reset_steps": float(np.mean([r[4] for r in rows])) if rows else 0.0,
    }
    summary.update(extra)
    return summary


def _run_plain(config: ExperimentConfig, out_dir: Path, agent,
               mppi_config: MppiConfig, env_config: EnvConfig,
               episodes: int, label: str) -> dict:
    digest = config_digest(config)
    seed = config.run.seed
    start = time.perf_counter()
    recorder = RecordWriter(out_dir / "records.jsonl",
                            header={"digest": digest, "seed": seed,
                                    "label": label})
    env = build_env(config, mppi_config, env_config, recorder)
    tracker = _LifecycleTracker(env)
    rows = []
    obs = env.begin_episode()
    for episode in range(episodes):
        ret, steps, terminated = play_episode(env, agent, obs)
        obs = tracker.next_episode(terminated)
        rows.append((episode, ret, steps, int(terminated),
                     tracker.last_reset_steps))
    recorder.close()
    summary = _summarize(rows, {
        "label": label, "seed": seed, "digest": digest,
        "agent": label, "w_b": env_config.w_b,
        "reset_timeouts": tracker.reset_timeouts,
        "wall_clock_s": time.perf_counter() - start,
    })
    _write_outputs(out_dir, rows, summary)
    return summary


def _run_es(config: ExperimentConfig, out_dir: Path,
            mppi_config: MppiConfig, env_config: EnvConfig,
            episodes: int) -> dict:
    digest = config_digest(config)
    seed = config.run.seed
    es_cfg = config.es
    start = time.perf_counter()
    recorder = RecordWriter(out_dir / "records.jsonl",
                            header={"digest": digest, "seed": seed,
                                    "label": "es"})
    env = build_env(config, mppi_config, env_config, recorder)
    tracker = _LifecycleTracker(env)
    net = PolicyNet((env.observation_dim, 64, 64, 2))
    theta = net.init_params()
    es_rng = substream(seed, "es")

    rows = []
    updates = 0
    block = es_cfg.population * es_cfg.episodes_per_eval
    obs = env.begin_episode()
    episode = 0
    while episode < episodes:
        if episodes - episode >= block:
            stage_cfg = es_cfg.at_update(updates)
            arms = []
            for _ in range(es_cfg.population // 2):
                pert_seed = spawn_seed(es_rng)
                for sign in (1.0, -1.0):
                    candidate = EsAgent(net, theta + sign * stage_cfg.noise_sigma
                                        * perturbation(pert_seed, net.n_params))
                    arm_returns = []
                    for _ in range(es_cfg.episodes_per_eval):
                        ret, steps, terminated = play_episode(env, candidate, obs)
                        obs = tracker.next_episode(terminated)
                        rows.append((episode, ret, steps, int(terminated),
                                     tracker.last_reset_steps))
                        episode += 1
                        arm_returns.append(ret)
                    arms.append((pert_seed, float(np.mean(arm_returns))))
            # learner update happens between episodes, never inside one
            theta = es_update(theta, arms, stage_cfg)
            updates += 1
        else:
            ret, steps, terminated = play_episode(env, EsAgent(net, theta), obs)
            obs = tracker.next_episode(terminated)
            rows.append((episode, ret, steps, int(terminated),
                         tracker.last_reset_steps))
            episode += 1
    recorder.close()

    np.savez(out_dir / "checkpoint.npz", theta=theta,
             sizes=np.asarray(net.sizes), updates=updates)
    summary = _summarize(rows, {
        "label": "es", "seed": seed, "digest": digest,
        "agent": "es", "w_b": env_config.w_b,
        "reset_timeouts": tracker.reset_timeouts,
        "es_updates": updates,
        "wall_clock_s": time.perf_counter() - start,
    })
    _write_outputs(out_dir, rows, summary)
    return summary


def run_training(config: ExperimentConfig, out_dir) -> dict:
    """Train or roll out the configured agent with the base planner."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    episodes = config.run.episodes
    if config.run.agent == "external":
        raise ValueError("agent 'external' acts over the wire; start the "
                         "control server and connect a remote client")
    if config.run.agent == "es":
        return _run_es(config, out, config.mppi_base, config.env, episodes)
    if config.run.agent == "random":
        agent = RandomAgent(substream(config.run.seed, "agent"))
    else:
        agent = ZeroAgent()
    return _run_plain(config, out, agent, config.mppi_base, config.env,
                      episodes, label=config.run.agent)


def run_baseline(config: ExperimentConfig, out_dir,
                 episodes: int = None) -> dict:
    """Reference run: zero agent riding the comparison planner alone."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    env_config = dataclasses.replace(config.env, w_b=1.0)
    return _run_plain(config, out, ZeroAgent(), config.mppi_baseline,
                      env_config, episodes or config.run.episodes,
                      label="baseline")


def evaluate_policy(config: ExperimentConfig, checkpoint_path, out_dir,
                    episodes: int = None) -> dict:
    """Roll out stored learner parameters without any updates."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = np.load(checkpoint_path)
    net = PolicyNet(tuple(int(s) for s in payload["sizes"]))
    agent = EsAgent(net, payload["theta"])
    return _run_plain(config, out, agent, config.mppi_base, config.env,
                      episodes or config.run.episodes, label="eval")


def run_matrix(config: ExperimentConfig, out_dir) -> dict:
    """The five-run comparison grid: {zero, es} x {w_b 0, 1} + baseline."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summaries = {}
    for agent in ("zero", "es"):
        for w_b in (0.0, 1.0):
            name = f"{agent}_wb{int(w_b)}"
            sub_cfg = dataclasses.replace(
                config,
                run=dataclasses.replace(config.run, agent=agent),
                env=dataclasses.replace(config.env, w_b=w_b),
            )
            summaries[name] = run_training(sub_cfg, out / name)
    summaries["baseline"] = run_baseline(config, out / "baseline")
    with open(out / "matrix_summary.json", "w") as fh:
        json.dump(summaries, fh, indent=2, sort_keys=True)
    return summaries
