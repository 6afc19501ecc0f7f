"""Vehicle models for a small high-agility car.

Two single-track models share a common state layout and actuator model:

* ``kbm_step`` -- kinematic bicycle, the planner's predictive model.
* ``dynamic_step`` -- linear-tire single track with per-axle force
  saturation, used as the simulation ground truth.

Both integrate with classical RK4 and realize commands through
first-order lags, so at low lateral excitation they agree closely and
the planner's model mismatch is dominated by tire saturation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

GRAVITY = 9.81

# Floor for the longitudinal speed appearing in slip-angle denominators.
# Keeps tire forces finite and smoothly damped near standstill.
SLIP_SPEED_FLOOR = 0.05


class CorruptedStateError(RuntimeError):
    """Raised when a vehicle state contains non-finite entries."""


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    two_pi = 2.0 * math.pi
    wrapped = angle - two_pi * np.rint(angle / two_pi)
    if wrapped > math.pi:
        wrapped -= two_pi
    elif wrapped <= -math.pi:
        wrapped += two_pi
    return float(wrapped)


@dataclass(frozen=True)
class VehicleParams:
    """Physical and actuator parameters of the car.

    Lengths in meters, masses in kg, angles in radians, times in
    seconds.  ``mu`` scales the per-axle lateral force budget
    ``mu * mass * g / 2`` (mass split evenly over both axles).
    Time constants of zero mean ideal, instantaneous actuation.
    """

    wheelbase: float = 0.33
    mass: float = 3.5
    yaw_inertia: float = 0.0478
    cornering_stiffness_front: float = 28.0
    cornering_stiffness_rear: float = 28.0
    mu: float = 1.0
    v_max: float = 3.0
    delta_max: float = 0.42
    accel_time_constant: float = 0.15
    steer_time_constant: float = 0.10

    def __post_init__(self):
        for name in ("wheelbase", "mass", "yaw_inertia",
                     "cornering_stiffness_front", "cornering_stiffness_rear",
                     "mu", "v_max", "delta_max"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be finite and positive, got {value!r}")
        for name in ("accel_time_constant", "steer_time_constant"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
        if self.delta_max >= math.pi / 2:
            raise ValueError("delta_max must stay below pi/2")

    @property
    def axle_force_limit(self) -> float:
        return 0.5 * self.mu * self.mass * GRAVITY

    @property
    def half_wheelbase(self) -> float:
        return 0.5 * self.wheelbase

    def as_array(self) -> np.ndarray:
        """Flat float64 layout consumed by the numba rollout kernel."""
        return np.array([
            self.wheelbase, self.mass, self.yaw_inertia,
            self.cornering_stiffness_front, self.cornering_stiffness_rear,
            self.mu, self.v_max, self.delta_max,
            self.accel_time_constant, self.steer_time_constant,
        ], dtype=np.float64)


@dataclass(frozen=True)
class VehicleState:
    """Pose, body-frame velocities and realized steering angle.

    ``v`` is the longitudinal body-frame speed (signed, reverse is
    negative), ``v_lat`` the lateral body-frame speed and ``yaw_rate``
    the angular rate.  The kinematic model keeps ``v_lat`` at zero.
    """

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0
    v: float = 0.0
    v_lat: float = 0.0
    yaw_rate: float = 0.0
    delta: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.yaw, self.v,
                         self.v_lat, self.yaw_rate, self.delta], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "VehicleState":
        x, y, yaw, v, v_lat, yaw_rate, delta = (float(a) for a in arr)
        return cls(x=x, y=y, yaw=yaw, v=v, v_lat=v_lat,
                   yaw_rate=yaw_rate, delta=delta)

    def require_finite(self):
        values = (self.x, self.y, self.yaw, self.v,
                  self.v_lat, self.yaw_rate, self.delta)
        if not all(math.isfinite(v) for v in values):
            raise CorruptedStateError(f"non-finite vehicle state: {self}")


@dataclass(frozen=True)
class ControlCommand:
    """Speed and steering setpoints handed to the actuators."""

    v_cmd: float = 0.0
    delta_cmd: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.v_cmd, self.delta_cmd], dtype=np.float64)


def clamp_command(cmd: ControlCommand, params: VehicleParams) -> ControlCommand:
    return ControlCommand(
        v_cmd=min(max(cmd.v_cmd, -params.v_max), params.v_max),
        delta_cmd=min(max(cmd.delta_cmd, -params.delta_max), params.delta_max),
    )


def _actuator_rates(v, delta, cmd: ControlCommand, params: VehicleParams):
    """First-order lag rates; zero time constant means the setpoint is
    already realized by the caller and the rate is zero."""
    if params.accel_time_constant > 0.0:
        dv = (cmd.v_cmd - v) / params.accel_time_constant
    else:
        dv = 0.0
    if params.steer_time_constant > 0.0:
        ddelta = (cmd.delta_cmd - delta) / params.steer_time_constant
    else:
        ddelta = 0.0
    return dv, ddelta


def _prepare(state: VehicleState, cmd: ControlCommand, params: VehicleParams,
             dt: float):
    state.require_finite()
    if not (math.isfinite(dt) and dt > 0.0):
        raise ValueError(f"dt must be finite and positive, got {dt!r}")
    cmd = clamp_command(cmd, params)
    v = state.v
    delta = state.delta
    if params.accel_time_constant == 0.0:
        v = cmd.v_cmd
    if params.steer_time_constant == 0.0:
        delta = cmd.delta_cmd
    return cmd, v, delta


def kbm_step(state: VehicleState, cmd: ControlCommand,
             params: VehicleParams, dt: float) -> VehicleState:
    """Advance the kinematic bicycle by one RK4 step of length ``dt``.

    State derivative: x' = v cos(yaw), y' = v sin(yaw),
    yaw' = v tan(delta) / wheelbase, with v and delta following
    first-order lags toward the clamped command.
    """
    cmd, v0, delta0 = _prepare(state, cmd, params, dt)
    L = params.wheelbase

    def f(y):
        x, yy, yaw, v, delta = y
        dv, ddelta = _actuator_rates(v, delta, cmd, params)
        return np.array([
            v * math.cos(yaw),
            v * math.sin(yaw),
            v * math.tan(delta) / L,
            dv,
            ddelta,
        ])

    y0 = np.array([state.x, state.y, state.yaw, v0, delta0])
    k1 = f(y0)
    k2 = f(y0 + 0.5 * dt * k1)
    k3 = f(y0 + 0.5 * dt * k2)
    k4 = f(y0 + dt * k3)
    y1 = y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    v1 = min(max(float(y1[3]), -params.v_max), params.v_max)
    delta1 = min(max(float(y1[4]), -params.delta_max), params.delta_max)
    return VehicleState(
        x=float(y1[0]), y=float(y1[1]), yaw=wrap_angle(float(y1[2])),
        v=v1, v_lat=0.0, yaw_rate=v1 * math.tan(delta1) / L, delta=delta1,
    )


def _axle_lateral_force(v_long, v_side, steer, stiffness, force_limit):
    """Lateral tire force in the body frame for one axle.

    The slip angle is measured in the wheel frame against the magnitude
    of the rolling speed, which keeps the force direction correct when
    the car reverses: the force always opposes the lateral velocity of
    the contact patch.
    """
    cos_s = math.cos(steer)
    sin_s = math.sin(steer)
    wheel_long = v_long * cos_s + v_side * sin_s
    wheel_side = -v_long * sin_s + v_side * cos_s
    slip = math.atan2(wheel_side, max(abs(wheel_long), SLIP_SPEED_FLOOR))
    force = -stiffness * slip
    force = min(max(force, -force_limit), force_limit)
    # rotate the wheel-frame lateral force back into the body frame
    return force * cos_s


def dynamic_step(state: VehicleState, cmd: ControlCommand,
                 params: VehicleParams, dt: float) -> VehicleState:
    """Advance the slip-aware single track by one RK4 step.

    Adds lateral velocity and yaw-rate states driven by linear-tire
    axle forces saturated at ``mu * mass * g / 2`` per axle.  With zero
    steering and zero lateral motion it reduces exactly to the
    kinematic bicycle going straight.
    """
    cmd, v0, delta0 = _prepare(state, cmd, params, dt)
    a = params.half_wheelbase
    b = params.half_wheelbase
    m = params.mass
    iz = params.yaw_inertia
    limit = params.axle_force_limit

    def f(y):
        x, yy, yaw, v, v_lat, r, delta = y
        dv, ddelta = _actuator_rates(v, delta, cmd, params)
        f_front = _axle_lateral_force(
            v, v_lat + a * r, delta,
            params.cornering_stiffness_front, limit)
        f_rear = _axle_lateral_force(
            v, v_lat - b * r, 0.0,
            params.cornering_stiffness_rear, limit)
        return np.array([
            v * math.cos(yaw) - v_lat * math.sin(yaw),
            v * math.sin(yaw) + v_lat * math.cos(yaw),
            r,
            dv,
            (f_front + f_rear) / m - v * r,
            (a * f_front - b * f_rear) / iz,
            ddelta,
        ])

    y0 = np.array([state.x, state.y, state.yaw, v0,
                   state.v_lat, state.yaw_rate, delta0])
    k1 = f(y0)
    k2 = f(y0 + 0.5 * dt * k1)
    k3 = f(y0 + 0.5 * dt * k2)
    k4 = f(y0 + dt * k3)
    y1 = y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    v1 = min(max(float(y1[3]), -params.v_max), params.v_max)
    delta1 = min(max(float(y1[6]), -params.delta_max), params.delta_max)
    out = VehicleState(
        x=float(y1[0]), y=float(y1[1]), yaw=wrap_angle(float(y1[2])),
        v=v1, v_lat=float(y1[4]), yaw_rate=float(y1[5]), delta=delta1,
    )
    out.require_finite()
    return out


def steady_turn_radius(params: VehicleParams, delta: float) -> float:
    """Turning radius of the kinematic bicycle at constant steering."""
    if delta == 0.0:
        return math.inf
    return params.wheelbase / math.tan(abs(delta))
