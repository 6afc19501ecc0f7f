"""Run the five-cell comparison grid and print the summary table.

Cells: {zero, es} agents x {w_b 0, 1}, plus the standalone baseline
planner. Writes per-run artifacts under the output directory and a
combined matrix_summary.json.
"""
import argparse

from agiledrive.config import ExperimentConfig, load_config
from agiledrive.harness import run_matrix


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", help="INI file; defaults used if omitted")
    parser.add_argument("--out", default="runs/matrix")
    args = parser.parse_args()

    config = load_config(args.config) if args.config else ExperimentConfig()
    summaries = run_matrix(config, args.out)
    width = max(len(k) for k in summaries)
    print(f"{'cell':<{width}}  {'mean':>9}  {'final20':>9}  collisions")
    for name, s in sorted(summaries.items()):
        print(f"{name:<{width}}  {s['mean_return']:9.2f}  "
              f"{s['final20_mean_return']:9.2f}  {s['collisions']:>10}")


if __name__ == "__main__":
    main()
