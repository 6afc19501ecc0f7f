"""Compare planner predictive models across ground friction levels.

Three evaluation cells, zero residual throughout, identical fixed
starts per cell:

  kinematic previews on slippery ground   (model=kbm,          mu=0.25)
  slip-aware previews on slippery ground  (model=ground_truth, mu=0.25)
  kinematic previews with full grip       (model=kbm,          mu=1.0)

The scenario uses a fast steering servo and a moderate speed cap so
that executed maneuvers actually cross the slippery traction limit;
with the default sluggish servo the two grounds behave identically and
the comparison degenerates.
"""
import argparse
import dataclasses

import numpy as np

from agiledrive.config import ExperimentConfig
from agiledrive.env import ControlCommand
from agiledrive.harness import build_env


def scenario_config():
    config = ExperimentConfig()
    return dataclasses.replace(
        config,
        vehicle=dataclasses.replace(config.vehicle, v_max=2.2,
                                    steer_time_constant=0.03),
        footprint=dataclasses.replace(config.footprint, margin=0.15),
    )


def evaluate_cell(config, mu, model, episodes, seed):
    cfg = dataclasses.replace(
        config,
        vehicle=dataclasses.replace(config.vehicle, mu=mu),
        mppi_base=dataclasses.replace(config.mppi_baseline, model=model),
    )
    env = build_env(cfg, seed=seed)
    returns = []
    for _ in range(episodes):
        env.respawn()
        env.begin_episode()
        total = 0.0
        while True:
            outcome = env.step(ControlCommand(0.0, 0.0))
            total += outcome.reward
            if outcome.terminated or outcome.truncated:
                break
        returns.append(total)
    return float(np.mean(returns))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--episodes", type=int, default=20)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    config = scenario_config()
    print(f"{args.episodes} episodes per cell, seed {args.seed}")
    cells = [("kbm", 0.25), ("ground_truth", 0.25), ("kbm", 1.0)]
    results = {}
    for model, mu in cells:
        mean = evaluate_cell(config, mu, model, args.episodes, args.seed)
        results[(model, mu)] = mean
        print(f"  model={model:<12} mu={mu:<5} mean return {mean:8.2f}")
    gap = results[("ground_truth", 0.25)] - results[("kbm", 0.25)]
    grip = results[("kbm", 1.0)] - results[("kbm", 0.25)]
    print(f"slip-aware preview advantage on slippery ground: {gap:+.2f}")
    print(f"full-grip advantage under kinematic previews:    {grip:+.2f}")


if __name__ == "__main__":
    main()
