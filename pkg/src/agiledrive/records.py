"""Episode records: JSONL logging and bit-exact replay.

Every environment step, forward and recovery alike, is one JSON line;
each episode starts with a meta line carrying the initial state.  JSON
floats round-trip exactly, so replaying the applied commands through
the same physics reproduces the logged trajectory bit for bit.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .dynamics import ControlCommand, VehicleParams, VehicleState
from .env import EnvConfig, RewardConfig, advance_with_contact, compute_reward
from .track import (FootprintConfig, LidarConfig, TrackGeometry,
                    collision_indicator, raycast)


class RecordWriter:
    """Appends meta and step lines to a JSONL stream."""

    def __init__(self, path, header: dict = None):
        self._fh = open(path, "w")
        if header:
            self._fh.write(json.dumps({"type": "header", **header}) + "\n")

    def write_meta(self, episode: int, init_state, extra: dict = None):
        row = {"type": "meta", "episode": episode, "init_state": init_state}
        if extra:
            row.update(extra)
        self._fh.write(json.dumps(row) + "\n")

    def write_step(self, fields: dict):
        self._fh.write(json.dumps({"type": "step", **fields}) + "\n")

    def flush(self):
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class EpisodeRecord:
    episode: int
    init_state: np.ndarray
    steps: list


def read_records(path):
    """Group a JSONL record stream into per-episode records."""
    episodes = []
    current = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            kind = row.get("type")
            if kind == "meta":
                current = EpisodeRecord(
                    episode=row["episode"],
                    init_state=np.asarray(row["init_state"], dtype=np.float64),
                    steps=[])
                episodes.append(current)
            elif kind == "step":
                if current is None or row["episode"] != current.episode:
                    # recovery lines belong to the episode they follow
                    matches = [e for e in episodes if e.episode == row["episode"]]
                    if not matches:
                        raise ValueError(f"step row for unknown episode "
                                         f"{row['episode']}")
                    current = matches[-1]
                current.steps.append(row)
    return episodes


def replay_episode(record: EpisodeRecord, track: TrackGeometry,
                   params: VehicleParams, lidar: LidarConfig,
                   footprint: FootprintConfig, env_config: EnvConfig,
                   reward_config: RewardConfig) -> float:
    """Re-integrate the logged applied commands; return max deviation.

    Deviation is the largest absolute difference between recomputed
    and logged state entries and rewards across the whole episode;
    deterministic physics makes it exactly zero.
    """
    state = VehicleState.from_array(record.init_state)
    worst = 0.0
    for row in record.steps:
        applied = ControlCommand(*row["applied"])
        state, _, _ = advance_with_contact(
            state, applied, params, track, footprint,
            env_config.substep_dt, env_config.substeps)
        logged = np.asarray(row["state"], dtype=np.float64)
        worst = max(worst, float(np.max(np.abs(state.as_array() - logged))))
        if row["mode"] == "FORWARD":
            scan = raycast(state, track, lidar)
            indicator = collision_indicator(scan, footprint)
            reward = compute_reward(state.v, indicator, reward_config)
            worst = max(worst, abs(reward - row["reward"]))
    return worst


def _svg_polyline(points, stroke: str, width: float) -> str:
    coords = " ".join(f"{x:.4f},{y:.4f}" for x, y in points)
    return (f'<polyline points="{coords}" fill="none" '
            f'stroke="{stroke}" stroke-width="{width}" />')


def export_traces(path, track: TrackGeometry, out_dir) -> int:
    """Write per-episode x/y polylines and the track outline.

    Produces ``traces.csv`` (episode, step, mode, x, y), ``track.csv``
    (ring, x, y) and ``traces.svg`` in ``out_dir``; returns the number
    of episodes exported.
    """
    episodes = read_records(path)
    os.makedirs(out_dir, exist_ok=True)

    with open(os.path.join(out_dir, "traces.csv"), "w") as fh:
        fh.write("episode,step,forward_mode,x,y\n")
        for rec in episodes:
            for row in rec.steps:
                forward = 1 if row["mode"] == "FORWARD" else 0
                fh.write(f"{rec.episode},{row['step']},{forward},"
                         f"{row['state'][0]!r},{row['state'][1]!r}\n")

    with open(os.path.join(out_dir, "track.csv"), "w") as fh:
        fh.write("ring,x,y\n")
        for name, ring in (("outer", track.outer), ("inner", track.inner)):
            for x, y in ring:
                fh.write(f"{name},{x!r},{y!r}\n")

    all_x = np.concatenate([track.outer[:, 0], track.inner[:, 0]])
    all_y = np.concatenate([track.outer[:, 1], track.inner[:, 1]])
    pad = 0.5
    x0, y0 = all_x.min() - pad, all_y.min() - pad
    w, h = all_x.max() + pad - x0, all_y.max() + pad - y0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="{x0:.3f} {y0:.3f} {w:.3f} {h:.3f}" '
        f'width="600" height="600">',
        # y axis flipped so world +y points up on screen
        f'<g transform="translate(0,{2 * y0 + h:.3f}) scale(1,-1)">',
    ]
    for ring in (track.outer, track.inner):
        closed = np.vstack([ring, ring[:1]])
        parts.append(_svg_polyline(closed, "#222222", 0.03))
    palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
    for idx, rec in enumerate(episodes):
        pts = [(row["state"][0], row["state"][1]) for row in rec.steps
               if row["mode"] == "FORWARD"]
        if len(pts) > 1:
            parts.append(_svg_polyline(pts, palette[idx % len(palette)], 0.015))
    parts.append("</g></svg>")
    with open(os.path.join(out_dir, "traces.svg"), "w") as fh:
        fh.write("\n".join(parts) + "\n")
    return len(episodes)


def export_steps(path, fmt: str, out_path):
    """Flatten a record stream to CSV or NPZ for external analysis."""
    episodes = read_records(path)
    rows = []
    for rec in episodes:
        for row in rec.steps:
            action = row["action"] if row["action"] is not None else [float("nan")] * 2
            rows.append([
                rec.episode, row["step"], 1.0 if row["mode"] == "FORWARD" else 0.0,
                *row["state"], *action, *row["base"], *row["applied"],
                row["reward"], row["collided"],
            ])
    columns = ["episode", "step", "forward_mode",
               "x", "y", "yaw", "v", "v_lat", "yaw_rate", "delta",
               "action_v", "action_delta", "base_v", "base_delta",
               "applied_v", "applied_delta", "reward", "collided"]
    data = np.asarray(rows, dtype=np.float64) if rows else np.zeros((0, len(columns)))
    if fmt == "csv":
        with open(out_path, "w") as fh:
            fh.write(",".join(columns) + "\n")
            for row in data:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    elif fmt == "npz":
        np.savez(out_path, data=data, columns=np.asarray(columns))
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    return len(rows)
