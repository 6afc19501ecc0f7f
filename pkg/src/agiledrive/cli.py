"""Command line entry points for experiments and the control server."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .config import ExperimentConfig, load_config
from .harness import (evaluate_policy, run_baseline, run_matrix, run_training)
from .records import export_steps, export_traces


def _load(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    run = config.run
    if getattr(args, "seed", None) is not None:
        run = dataclasses.replace(run, seed=args.seed)
    if getattr(args, "episodes", None) is not None:
        run = dataclasses.replace(run, episodes=args.episodes)
    if getattr(args, "agent", None) is not None:
        run = dataclasses.replace(run, agent=args.agent)
    config = dataclasses.replace(config, run=run)
    if getattr(args, "w_b", None) is not None:
        config = dataclasses.replace(
            config, env=dataclasses.replace(config.env, w_b=args.w_b))
    return config


def _add_common(p):
    p.add_argument("--config", help="experiment INI file (defaults built in)")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--episodes", type=int, help="override the episode count")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="agiledrive",
        description="reset-free agile driving experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the configured agent")
    _add_common(p_train)
    p_train.add_argument("--agent",
                         choices=("zero", "random", "es", "external"))
    p_train.add_argument("--w-b", dest="w_b", type=float,
                         help="base-action weight in the composition")
    p_train.add_argument("--out", required=True, help="output directory")

    p_base = sub.add_parser("baseline", help="zero agent on the comparison planner")
    _add_common(p_base)
    p_base.add_argument("--out", required=True)

    p_matrix = sub.add_parser("matrix", help="the five-run comparison grid")
    _add_common(p_matrix)
    p_matrix.add_argument("--out", required=True)

    p_eval = sub.add_parser("eval", help="roll out stored learner parameters")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--out", required=True)

    p_serve = sub.add_parser("serve", help="expose the environment over TCP")
    _add_common(p_serve)
    p_serve.add_argument("--addr", help="host:port, overrides --host/--port")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8787)
    p_serve.add_argument("--max-sessions", type=int, default=None)

    p_export = sub.add_parser("export", help="flatten or plot step records")
    p_export.add_argument("--records", required=True, help="records.jsonl path")
    p_export.add_argument("--format", choices=("csv", "svg", "npz"),
                          default="csv")
    p_export.add_argument("--config", help="experiment INI, for track geometry")
    p_export.add_argument("--out", required=True,
                          help="output file (csv/npz) or directory (svg)")

    args = parser.parse_args(argv)

    if args.command == "train":
        summary = run_training(_load(args), args.out)
    elif args.command == "baseline":
        summary = run_baseline(_load(args), args.out)
    elif args.command == "matrix":
        summary = run_matrix(_load(args), args.out)
    elif args.command == "eval":
        summary = evaluate_policy(_load(args), args.checkpoint, args.out)
    elif args.command == "serve":
        from .harness import build_env
        from .server import serve
        config = _load(args)
        env = build_env(config)
        host, port = args.host, args.port
        if args.addr:
            host, _, port_text = args.addr.rpartition(":")
            port = int(port_text)

        def announce(addr):
            print(f"listening on {addr[0]}:{addr[1]}", flush=True)

        serve(env, host=host, port=port,
              max_sessions=args.max_sessions, ready_callback=announce)
        return 0
    elif args.command == "export":
        if args.format == "svg":
            config = load_config(args.config) if args.config \
                else ExperimentConfig()
            count = export_traces(args.records, config.track.build(), args.out)
            print(f"exported {count} episode traces to {args.out}")
        else:
            count = export_steps(args.records, args.format, args.out)
            print(f"exported {count} steps to {args.out}")
        return 0
    else:  # pragma: no cover
        parser.error(f"unknown command {args.command}")

    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
