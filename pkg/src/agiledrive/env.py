"""Reset-free driving environment.

The environment composes an external forward action with an internal
sampling-based base policy, advances slip-aware ground-truth physics
at a finer substep than the control period, and senses through the
planar range scanner.  Episodes end on collision or a step cap; after
a collision the same base policy drives the car back to a restartable
state instead of teleporting it, so the physical process never
discontinues.

Composition contract: while the collision indicator is clear the
applied command is the clamped sum of the forward command and the
weighted base command; the moment the indicator is set the base
command is applied verbatim.  Recovery steps are logged with the same
applied-equals-base guarantee.
"""
from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (ControlCommand, VehicleParams, VehicleState,
                       clamp_command, dynamic_step)
from .mppi import (MppiConfig, MppiPlan, RolloutScorer, init_plan, plan,
                   sample_action, shift_prior)
from .seeding import substream
from .track import (FootprintConfig, LidarConfig, TrackGeometry,
                    collision_indicator, footprint_touches_boundary, raycast)

MODE_FORWARD = "FORWARD"
MODE_RESETTING = "RESETTING"


@dataclass(frozen=True)
class RewardConfig:
    """Speed-seeking reward with a collision penalty.

    Per step: ``w_v * v - w_c * |v| * collided`` evaluated on the
    post-step speed and indicator.  ``gamma`` is the discount exposed
    to learners; the environment itself reports undiscounted sums.
    """

    w_v: float = 1.0
    w_c: float = 1.0
    gamma: float = 0.99

    def __post_init__(self):
        if self.w_v < 0.0 or self.w_c < 0.0:
            raise ValueError("reward weights must be >= 0")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")


@dataclass(frozen=True)
class EnvConfig:
    """Lifecycle, composition and recovery parameters."""

    w_b: float = 1.0
    max_steps: int = 500
    control_dt: float = 0.02
    substeps: int = 4
    history: int = 3
    omega_bound: float = 6.0
    accel_bound: float = 15.0
    restart_clearance: float = 0.4
    restart_speed: float = 0.1
    restart_quiet_steps: int = 10
    reset_timeout_steps: int = 1500
    escape_speed: float = 0.5
    reset_cruise_speed: float = 0.8
    settle_front_range: float = 1.0

    def __post_init__(self):
        if self.w_b not in (0.0, 1.0):
            warnings.warn(f"w_b={self.w_b} is outside {{0, 1}}; the "
                          "composition is defined but untypical",
                          stacklevel=3)
        if self.max_steps < 1 or self.substeps < 1 or self.history < 0:
            raise ValueError("max_steps, substeps must be >= 1; history >= 0")
        if self.control_dt <= 0.0:
            raise ValueError("control_dt must be positive")
        for name in ("restart_clearance", "restart_speed", "escape_speed",
                     "reset_cruise_speed", "settle_front_range",
                     "omega_bound", "accel_bound"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.restart_quiet_steps < 1 or self.reset_timeout_steps < 1:
            raise ValueError("quiet/timeout step counts must be >= 1")

    @property
    def substep_dt(self) -> float:
        return self.control_dt / self.substeps


class ResetTimeoutError(RuntimeError):
    """Recovery did not reach a restartable state within the budget.

    Carries the recovery step rows for post-mortem diagnosis.
    """

    def __init__(self, steps: int, record=None):
        super().__init__(f"recovery exceeded {steps} steps")
        self.steps = steps
        self.record = record or []


def compute_reward(v: float, collided: int, config: RewardConfig) -> float:
    """``w_v * v - w_c * |v| * collided``; collided must be 0 or 1."""
    if collided not in (0, 1):
        raise ValueError("collided must be 0 or 1")
    return config.w_v * v - config.w_c * abs(v) * collided


def compose_action(forward_cmd: ControlCommand, base_cmd: ControlCommand,
                   collided: int, w_b: float,
                   params: VehicleParams) -> ControlCommand:
    """Blend forward and base commands, overriding on collision.

    Indicator clear: clamp(forward + w_b * base).  Indicator set: the
    base command verbatim, bit for bit, regardless of ``w_b``.
    """
    if collided not in (0, 1):
        raise ValueError("collided must be 0 or 1")
    if collided:
        return base_cmd
    return clamp_command(
        ControlCommand(
            v_cmd=forward_cmd.v_cmd + w_b * base_cmd.v_cmd,
            delta_cmd=forward_cmd.delta_cmd + w_b * base_cmd.delta_cmd,
        ),
        params,
    )


def advance_with_contact(state: VehicleState, cmd: ControlCommand,
                         params: VehicleParams, track: TrackGeometry,
                         footprint: FootprintConfig, sub_dt: float,
                         substeps: int):
    """Integrate ground-truth physics with inelastic wall contact.

    Each substep that would push the footprint into a boundary is
    rejected and the body velocities zeroed, mirroring a bumper hitting
    a rigid wall; steering and pose are kept.  Returns the new state,
    whether the final substep was blocked (still pressed on the wall)
    and whether any substep touched at all.
    """
    touching = False
    touched_any = False
    for _ in range(substeps):
        candidate = dynamic_step(state, cmd, params, sub_dt)
        if footprint_touches_boundary(candidate, track, footprint):
            state = replace(state, v=0.0, v_lat=0.0, yaw_rate=0.0)
            touching = True
            touched_any = True
        else:
            state = candidate
            touching = False
    return state, touching, touched_any


@dataclass(frozen=True)
class Observation:
    """Stacked normalized sensor history, oldest slot first.

    Each slot holds (v, yaw rate, accel, steering, per-beam ranges,
    base command) affinely mapped to [0, 1].  ``vector()`` flattens
    slot-major for consumption by function approximators.
    """

    slots: np.ndarray

    def vector(self) -> np.ndarray:
        return self.slots.reshape(-1).copy()

    @property
    def newest(self) -> np.ndarray:
        return self.slots[-1]


@dataclass
class StepOutcome:
    observation: Observation
    reward: float
    terminated: bool
    truncated: bool
    mode: str
    info: dict = field(default_factory=dict)


def _unit_interval(value, lo, hi):
    return float(min(max((value - lo) / (hi - lo), 0.0), 1.0))


def normalized_to_command(action, params: VehicleParams) -> ControlCommand:
    """Map a [-1, 1]^2 action vector onto the actuator bounds."""
    act = np.asarray(action, dtype=np.float64).reshape(-1)
    if act.shape[0] != 2 or not np.all(np.isfinite(act)):
        raise ValueError("action must be two finite values")
    act = np.clip(act, -1.0, 1.0)
    return ControlCommand(v_cmd=float(act[0] * params.v_max),
                          delta_cmd=float(act[1] * params.delta_max))


class ResetFreeEnv:
    """Driving MDP with built-in base policy and recovery behavior.

    Lifecycle: ``begin_episode`` -> repeated ``step`` until terminated
    (collision) or truncated (step cap); collision terminations require
    ``run_reset``, which drives back to a restartable state and starts
    the next episode.  ``respawn`` exists only as a hard fallback after
    a recovery timeout.
    """

    def __init__(self, track: TrackGeometry, params: VehicleParams,
                 lidar: LidarConfig, footprint: FootprintConfig,
                 mppi_config: MppiConfig, reward_config: RewardConfig = None,
                 env_config: EnvConfig = None, seed: int = 0, recorder=None):
        self.track = track
        self.params = params
        self.lidar = lidar
        self.footprint = footprint
        self.mppi_config = mppi_config
        self.reward_config = reward_config or RewardConfig()
        self.env_config = env_config or EnvConfig()
        self.recorder = recorder

        rc = self.reward_config
        self.scorer = RolloutScorer(track, params, lidar, footprint,
                                    w_v=rc.w_v, w_c=rc.w_c,
                                    model=mppi_config.model)
        self._rng_mppi = substream(seed, "mppi")
        self._rng_reset = substream(seed, "reset")
        self._rng_lidar = substream(seed, "lidar")

        x, y, yaw = track.spawn_pose
        self._state = VehicleState(x=x, y=y, yaw=yaw)
        self._plan = init_plan(mppi_config)
        self._thresholds = footprint.beam_thresholds(lidar)
        self._n_beams = lidar.n_beams
        self._episode = -1
        self._step_count = 0
        self._terminated = False
        self._episode_active = False
        self._in_contact = False
        self._quiet = 0
        self._mode = MODE_FORWARD
        self.last_reset_steps = 0
        self._history = deque(maxlen=self.env_config.history + 1)
        self._refresh_scan()

    # ------------------------------------------------------------------
    # observation plumbing

    @property
    def observation_dim(self) -> int:
        return (self.env_config.history + 1) * (4 + self._n_beams + 2)

    @property
    def action_dim(self) -> int:
        return 2

    @property
    def state(self) -> VehicleState:
        return self._state

    @property
    def episode_index(self) -> int:
        return self._episode

    def _slot(self, accel: float, base_cmd: ControlCommand) -> np.ndarray:
        p = self.params
        ec = self.env_config
        s = self._state
        out = np.empty(4 + self._n_beams + 2)
        out[0] = _unit_interval(s.v, -p.v_max, p.v_max)
        out[1] = _unit_interval(s.yaw_rate, -ec.omega_bound, ec.omega_bound)
        out[2] = _unit_interval(accel, -ec.accel_bound, ec.accel_bound)
        out[3] = _unit_interval(s.delta, -p.delta_max, p.delta_max)
        out[4:4 + self._n_beams] = np.clip(
            self._scan.ranges / self.lidar.max_range, 0.0, 1.0)
        out[4 + self._n_beams] = _unit_interval(base_cmd.v_cmd, -p.v_max, p.v_max)
        out[5 + self._n_beams] = _unit_interval(base_cmd.delta_cmd,
                                                -p.delta_max, p.delta_max)
        return out

    def _observation(self) -> Observation:
        return Observation(slots=np.stack(list(self._history)))

    def _refresh_scan(self):
        rng = self._rng_lidar if self.lidar.noise_amplitude > 0.0 else None
        self._scan = raycast(self._state, self.track, self.lidar, rng)
        self._indicator = collision_indicator(self._scan, self.footprint)

    def min_clearance(self) -> float:
        """Smallest raw beam range at the current pose."""
        return self._scan.min_range()

    # ------------------------------------------------------------------
    # lifecycle

    def begin_episode(self) -> Observation:
        if self._terminated:
            raise RuntimeError("collision termination requires run_reset() "
                               "before a new episode")
        self._episode += 1
        self._step_count = 0
        self._episode_active = True
        self._mode = MODE_FORWARD
        self._plan = init_plan(self.mppi_config)
        self._refresh_scan()
        snapshot = self._slot(accel=0.0, base_cmd=ControlCommand())
        self._history.clear()
        for _ in range(self.env_config.history + 1):
            self._history.append(snapshot.copy())
        if self.recorder is not None:
            self.recorder.write_meta(self._episode,
                                     self._state.as_array().tolist())
        return self._observation()

    def _plan_base(self) -> MppiPlan:
        prior = shift_prior(self._plan, self.mppi_config)
        new_plan = plan(self._state, self.scorer, prior, self.mppi_config,
                        self._rng_mppi)
        self._plan = new_plan
        return new_plan

    def step(self, forward: ControlCommand) -> StepOutcome:
        """Advance one control period under the composed action.

        ``forward`` is the external policy's command in physical units
        (use ``normalized_to_command`` for [-1, 1] policy outputs).
        Termination is a collision: the scan indicator firing, or the
        footprint physically touching a boundary the sparse scan
        cannot see (the rear cone is outside the field of view).
        """
        if not self._episode_active:
            raise RuntimeError("no active episode; call begin_episode() or "
                               "run_reset() first")
        if not isinstance(forward, ControlCommand):
            raise TypeError("step expects a ControlCommand; see "
                            "normalized_to_command")
        if not (math.isfinite(forward.v_cmd) and math.isfinite(forward.delta_cmd)):
            raise ValueError("forward command must be finite")

        self._plan_base()
        base_cmd = sample_action(self._plan, self._rng_mppi, self.params)
        collided_pre = self._indicator
        applied = compose_action(forward, base_cmd, collided_pre,
                                 self.env_config.w_b, self.params)

        v_start = self._state.v
        ec = self.env_config
        self._state, self._in_contact, touched = advance_with_contact(
            self._state, applied, self.params, self.track, self.footprint,
            ec.substep_dt, ec.substeps)
        self._refresh_scan()

        reward = compute_reward(self._state.v, self._indicator,
                                self.reward_config)
        self._step_count += 1
        collision_event = self._indicator == 1 or touched
        self._quiet = 0 if collision_event else self._quiet + 1
        terminated = collision_event
        truncated = (not terminated) and self._step_count >= ec.max_steps
        if terminated:
            self._terminated = True
        if terminated or truncated:
            self._episode_active = False

        accel = (self._state.v - v_start) / ec.control_dt
        self._history.append(self._slot(accel=accel, base_cmd=base_cmd))

        if self.recorder is not None:
            self.recorder.write_step({
                "episode": self._episode,
                "step": self._step_count - 1,
                "mode": MODE_FORWARD,
                "state": self._state.as_array().tolist(),
                "action": [forward.v_cmd, forward.delta_cmd],
                "base": [base_cmd.v_cmd, base_cmd.delta_cmd],
                "applied": [applied.v_cmd, applied.delta_cmd],
                "reward": reward,
                "collided": collided_pre,
            })

        info = {
            "base_action": [base_cmd.v_cmd, base_cmd.delta_cmd],
            "applied_action": [applied.v_cmd, applied.delta_cmd],
            "collision": self._indicator,
            "contact": int(touched),
            "predicted_return": self._plan.predicted_return,
        }
        return StepOutcome(observation=self._observation(), reward=reward,
                           terminated=terminated, truncated=truncated,
                           mode=MODE_FORWARD, info=info)

    # ------------------------------------------------------------------
    # recovery

    def _restartable(self) -> bool:
        ec = self.env_config
        return (self._indicator == 0
                and not self._in_contact
                and self.min_clearance() >= ec.restart_clearance
                and abs(self._state.v) <= ec.restart_speed
                and self._quiet >= ec.restart_quiet_steps)

    def _jitter_steer(self) -> float:
        return float(self._rng_reset.uniform(-0.75, 0.75) * self.params.delta_max)

    def _front_range(self) -> float:
        """Raw range straight ahead: min over the two most central beams."""
        order = np.argsort(np.abs(self._scan.beam_angles))
        picked = order[:2] if order.shape[0] >= 2 else order
        return float(np.min(self._scan.ranges[picked]))

    def _open_side_steer(self) -> float:
        """Escape steering that swings the nose toward the most open beam.

        Returns sign(open-side angle) * magnitude; the caller multiplies
        by the travel direction so the yaw rate v*tan(delta)/L points
        toward the open side whether escaping forward or in reverse.  A
        seeded jitter keeps repeated recoveries from one state from
        collapsing onto a single exit pose.
        """
        best = float(self._scan.beam_angles[int(np.argmax(self._scan.ranges))])
        if abs(best) < 1e-9:
            sign = 1.0 if self._rng_reset.random() < 0.5 else -1.0
        else:
            sign = math.copysign(1.0, best)
        return sign * 0.8 * self.params.delta_max + 0.25 * self._jitter_steer()

    def mark_terminated(self):
        """Force collision-termination bookkeeping from outside.

        Exists so callers (and tests) can require a recovery pass from
        an arbitrary state without staging a physical crash.
        """
        self._terminated = True
        self._episode_active = False

    def run_reset(self) -> Observation:
        """Drive back to a restartable state, then begin the next episode.

        The base policy does the free-space driving; a reversing escape
        handles poses where the planner has no collision-free sample.
        Raises ``ResetTimeoutError`` if the budget runs out.
        """
        if not self._terminated:
            raise RuntimeError("run_reset() requires a collision-terminated "
                               "episode")
        ec = self.env_config
        self._mode = MODE_RESETTING
        reset_steps = 0
        escape_dir = -1.0
        escape_steer = 0.0
        escape_steps = 0
        drive_steps = 0
        phase = "drive"
        trail = deque(maxlen=30)
        reset_rows = []
        # seeded distance carried past the first admissible stop, so
        # repeated recoveries from one state exit at varied poses; an
        # already-admissible state keeps its zero-step reset
        settle_delay = int(self._rng_reset.integers(0, 80))
        if self._restartable():
            settle_delay = 0

        def enter_escape():
            nonlocal phase, escape_steps
            phase = "escape"
            escape_steps = 0
            trail.clear()
            return self._open_side_steer()

        while True:
            if self._restartable():
                if settle_delay <= 0:
                    break
                # admissible already, but the seeded overshoot is not
                # spent: resume cruising so repeat recoveries from one
                # crash state exit at varied poses
                phase = "drive"
            if reset_steps >= ec.reset_timeout_steps:
                raise ResetTimeoutError(reset_steps, reset_rows)

            clearance = self.min_clearance()
            front = self._front_range()
            speed = self._state.v
            blocked = self._indicator == 1 or self._in_contact
            if blocked and phase != "escape":
                # escape is sticky: the short-horizon planner lunges at
                # nearby walls, so hand control back only once clear
                escape_steer = enter_escape()
            elif (phase == "escape" and not blocked
                  and clearance >= ec.restart_clearance and front >= 0.6):
                phase = "drive"
                escape_steps = 0
                trail.clear()

            if phase == "escape":
                escape_steps += 1
                trail.append((self._state.x, self._state.y))
                wedged = False
                if len(trail) == trail.maxlen:
                    xs = [p[0] for p in trail]
                    ys = [p[1] for p in trail]
                    wedged = math.hypot(max(xs) - min(xs),
                                        max(ys) - min(ys)) < 0.02
                if wedged or escape_steps >= 150:
                    escape_dir = -escape_dir
                    escape_steps = 0
                    trail.clear()
                    if wedged:
                        # contact jams the scan-chosen arc in both
                        # directions; rock free with a fresh random arc
                        escape_steer = (float(self._rng_reset.uniform(-1.0, 1.0))
                                        * self.params.delta_max)
                    else:
                        # moving but not gaining clearance; try the other way
                        escape_steer = self._open_side_steer()
                # held arc steering swings the nose toward open space
                # while backing off the wall (two-point turn)
                cmd = ControlCommand(escape_dir * ec.escape_speed,
                                     escape_dir * escape_steer)
            elif phase == "settle":
                if (abs(speed) <= ec.restart_speed + 0.05
                        and clearance < ec.restart_clearance):
                    # stopped short of the clearance band: re-approach
                    phase = "drive"
                base_plan = self._plan_base()
                drawn = sample_action(base_plan, self._rng_mppi, self.params)
                if phase == "settle":
                    cmd = ControlCommand(0.0, drawn.delta_cmd)
                else:
                    cmd = ControlCommand(min(drawn.v_cmd, ec.reset_cruise_speed),
                                         drawn.delta_cmd)
            else:
                base_plan = self._plan_base()
                in_band = (clearance >= ec.restart_clearance
                           and front >= ec.settle_front_range)
                if base_plan.predicted_return == float("-inf"):
                    escape_steer = enter_escape()
                    cmd = ControlCommand(escape_dir * ec.escape_speed,
                                         escape_dir * escape_steer)
                elif in_band and settle_delay <= 0:
                    # in the clearance band with open road ahead: stop
                    # here so the next episode starts driveable
                    phase = "settle"
                    drawn = sample_action(base_plan, self._rng_mppi, self.params)
                    cmd = ControlCommand(0.0, drawn.delta_cmd)
                else:
                    settle_delay -= 1
                    drawn = sample_action(base_plan, self._rng_mppi, self.params)
                    drive_steps += 1
                    if drive_steps > 250:
                        # orbiting without gaining clearance; break the
                        # pattern with a sustained reverse
                        drive_steps = 0
                        escape_steer = enter_escape()
                        cmd = ControlCommand(escape_dir * ec.escape_speed,
                                             escape_dir * escape_steer)
                    else:
                        # creep while inside the clearance band so the
                        # short-horizon planner cannot lunge into a wall
                        cruise_cap = (ec.reset_cruise_speed
                                      if clearance >= ec.restart_clearance
                                      else ec.escape_speed)
                        capped = min(max(drawn.v_cmd, -ec.escape_speed),
                                     cruise_cap)
                        cmd = ControlCommand(capped, drawn.delta_cmd)

            cmd = clamp_command(cmd, self.params)
            collided_pre = self._indicator
            self._state, self._in_contact, touched = advance_with_contact(
                self._state, cmd, self.params, self.track, self.footprint,
                ec.substep_dt, ec.substeps)
            self._refresh_scan()
            collision_event = self._indicator == 1 or touched
            self._quiet = 0 if collision_event else self._quiet + 1
            reset_steps += 1

            row = {
                "episode": self._episode,
                "step": reset_steps - 1,
                "mode": MODE_RESETTING,
                "state": self._state.as_array().tolist(),
                "action": None,
                "base": [cmd.v_cmd, cmd.delta_cmd],
                "applied": [cmd.v_cmd, cmd.delta_cmd],
                "reward": 0.0,
                "collided": collided_pre,
            }
            reset_rows.append(row)
            if self.recorder is not None:
                self.recorder.write_step(row)

        self.last_reset_steps = reset_steps
        self._terminated = False
        self._mode = MODE_FORWARD
        return self.begin_episode()

    def respawn(self) -> None:
        """Teleport to the spawn pose; hard fallback outside the normal
        lifecycle, intended for recovery-timeout handling only."""
        x, y, yaw = self.track.spawn_pose
        self._state = VehicleState(x=x, y=y, yaw=yaw)
        self._plan = init_plan(self.mppi_config)
        self._terminated = False
        self._episode_active = False
        self._in_contact = False
        self._quiet = 0
        self._mode = MODE_FORWARD
        self._refresh_scan()
