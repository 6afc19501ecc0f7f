"""Experiment configuration: INI loading, validation and digests.

A run is fully described by one INI file.  Unknown sections or keys
are hard errors, since silently ignored typos in physics parameters
make results unreproducible.  The digest hashes everything that
defines the physical setup, so two runs can be compared safely.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace

from .agents import EsConfig
from .dynamics import VehicleParams
from .env import EnvConfig, RewardConfig
from .mppi import MppiConfig
from .track import (FootprintConfig, LidarConfig, TrackGeometry,
                    annular_track, load_track)

AGENT_KINDS = ("zero", "random", "es", "external")


@dataclass(frozen=True)
class TrackSpec:
    """Either a generated annulus or a track file on disk."""

    r_inner: float = 1.5
    r_outer: float = 2.5
    n_vertices: int = 96
    file: str = ""

    def build(self) -> TrackGeometry:
        if self.file:
            return load_track(self.file)
        return annular_track(self.r_inner, self.r_outer, self.n_vertices)


@dataclass(frozen=True)
class RunConfig:
    agent: str = "zero"
    episodes: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.agent not in AGENT_KINDS:
            raise ValueError(f"agent must be one of {AGENT_KINDS}")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunConfig = field(default_factory=RunConfig)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    track: TrackSpec = field(default_factory=TrackSpec)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    footprint: FootprintConfig = field(default_factory=FootprintConfig)
    mppi_base: MppiConfig = field(default_factory=MppiConfig)
    mppi_baseline: MppiConfig = field(default_factory=lambda: MppiConfig(temperature=0.1))
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    es: EsConfig = field(default_factory=EsConfig)


_SECTION_TYPES = {
    "run": (RunConfig, "run"),
    "vehicle": (VehicleParams, "vehicle"),
    "track": (TrackSpec, "track"),
    "lidar": (LidarConfig, "lidar"),
    "footprint": (FootprintConfig, "footprint"),
    "mppi.base": (MppiConfig, "mppi_base"),
    "mppi.baseline": (MppiConfig, "mppi_baseline"),
    "env": (EnvConfig, "env"),
    "reward": (RewardConfig, "reward"),
    "es": (EsConfig, "es"),
}


def _coerce(raw: str, target_type):
    if target_type is float:
        return float(raw)
    if target_type is int:
        return int(raw)
    if target_type is bool:
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return raw


def load_config(path) -> ExperimentConfig:
    """Parse an INI experiment file; unknown names are errors."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)

    overrides = {}
    for section in parser.sections():
        if section not in _SECTION_TYPES:
            raise ValueError(f"unknown config section [{section}]")
        cls, attr = _SECTION_TYPES[section]
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ValueError(f"unknown key {key!r} in section [{section}]")
            declared = known[key]
            if isinstance(declared, str):
                declared = {"float": float, "int": int, "str": str,
                            "bool": bool}.get(declared, str)
            kwargs[key] = _coerce(raw, declared)
        overrides[attr] = cls(**kwargs)

    base = ExperimentConfig()
    merged = {}
    for attr in (f.name for f in fields(ExperimentConfig)):
        if attr in overrides:
            merged[attr] = overrides[attr]
        else:
            merged[attr] = getattr(base, attr)
    return ExperimentConfig(**merged)


def config_digest(config: ExperimentConfig) -> str:
    """SHA-256 over the physical setup: vehicle, track, sensing, footprint."""
    track = config.track.build()
    payload = {
        "vehicle": dataclasses.asdict(config.vehicle),
        "lidar": dataclasses.asdict(config.lidar),
        "footprint": dataclasses.asdict(config.footprint),
        "track": {
            "name": track.name,
            "outer": track.outer.tolist(),
            "inner": track.inner.tolist(),
            "spawn_pose": list(track.spawn_pose),
        },
    }
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def with_overrides(config: ExperimentConfig, **kwargs) -> ExperimentConfig:
    """Functional update helper for tests and the command line."""
    return replace(config, **kwargs)
