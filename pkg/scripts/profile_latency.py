"""Measure per-call planner latency at the default sampling budget.

Times plan() on states taken from a driven trajectory, after a warmup
that absorbs kernel compilation. Reports median and p99.
"""
import argparse
import dataclasses
import time

import numpy as np

from agiledrive.config import ExperimentConfig
from agiledrive.env import ControlCommand
from agiledrive.harness import build_env
from agiledrive.mppi import RolloutScorer, init_plan, plan, shift_prior


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=1024)
    parser.add_argument("--horizon", type=int, default=10)
    parser.add_argument("--steps", type=int, default=400)
    parser.add_argument("--warmup", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    config = ExperimentConfig()
    mppi = dataclasses.replace(config.mppi_base, n_samples=args.samples,
                               horizon=args.horizon)
    env = build_env(config, mppi_config=mppi, seed=args.seed)
    scorer = RolloutScorer(config.track.build(), config.vehicle,
                           config.lidar, config.footprint,
                           w_v=config.reward.w_v, w_c=config.reward.w_c)
    rng = np.random.default_rng(args.seed)
    prior = init_plan(mppi)
    env.begin_episode()

    times = []
    for step in range(args.warmup + args.steps):
        prior = shift_prior(prior, mppi)
        t0 = time.perf_counter()
        prior = plan(env.state, scorer, prior, mppi, rng)
        elapsed = time.perf_counter() - t0
        if step >= args.warmup:
            times.append(elapsed)
        outcome = env.step(ControlCommand(0.0, 0.0))
        if outcome.terminated:
            env.run_reset()
        elif outcome.truncated:
            env.begin_episode()

    ms = np.asarray(times) * 1e3
    print(f"plan() over {len(ms)} calls at K={args.samples} T={args.horizon}:")
    print(f"  median {np.median(ms):.2f} ms")
    print(f"  p99    {np.percentile(ms, 99):.2f} ms")
    print(f"  max    {ms.max():.2f} ms")


if __name__ == "__main__":
    main()
