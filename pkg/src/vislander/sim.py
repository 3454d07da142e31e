"""Multirotor rigid-body model with a first-order low-level controller.

The vehicle is commanded with absolute roll/pitch/yaw angles and a collective
thrust. The inner loop is not modelled at motor level: attitude converges to
the commanded attitude with time constant ``attitude_time_constant`` and the
realized thrust lags the command with ``thrust_time_constant``. Both lags use
the exact discrete decay ``exp(-dt / tau)`` so a step response sampled after
one time constant lands exactly on ``1 - 1/e``.

All state arrays may carry leading batch axes; the same code steps one
vehicle or a whole vector of environments.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import geometry as geo

GRAVITY = 9.81
ANGLE_LIMIT = np.pi / 4
YAW_LIMIT = np.pi


class NumericDivergence(FloatingPointError):
    """Raised when the simulator is handed (or produces) non-finite values."""


@dataclass
class VehicleParams:
    mass: float = 1.0
    inertia_diag: tuple[float, float, float] = (0.01, 0.01, 0.02)
    attitude_time_constant: float = 0.15
    thrust_time_constant: float = 0.05
    arm_clearance: float = 0.1
    max_thrust: float = 4.0 * 1.0 * GRAVITY
    contact_stiffness: float = 500.0
    contact_damping: float = 10.0

    def __post_init__(self):
        scalars = [self.mass, self.attitude_time_constant, self.thrust_time_constant,
                   self.arm_clearance, self.max_thrust, self.contact_stiffness,
                   self.contact_damping, *self.inertia_diag]
        if min(scalars) <= 0:
            raise ValueError("vehicle parameters must be strictly positive")
        if self.max_thrust <= self.mass * GRAVITY:
            raise ValueError("max_thrust must exceed the vehicle weight")

    @property
    def hover_thrust(self) -> float:
        return self.mass * GRAVITY


@dataclass
class MultirotorState:
    """Vehicle state. ``thrust`` is the realized collective thrust of the lagged inner loop."""

    position: np.ndarray
    attitude: np.ndarray
    lin_vel: np.ndarray
    ang_vel: np.ndarray
    thrust: np.ndarray

    @classmethod
    def hover(cls, params: VehicleParams, position=(0.0, 0.0, 0.0)) -> "MultirotorState":
        return cls(
            position=np.array(position, dtype=float),
            attitude=geo.IDENTITY_QUAT.copy(),
            lin_vel=np.zeros(3),
            ang_vel=np.zeros(3),
            thrust=np.array(params.hover_thrust),
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, f.name))) for f in fields(self))

    def copy(self) -> "MultirotorState":
        return MultirotorState(*(np.array(getattr(self, f.name), copy=True) for f in fields(self)))


@dataclass
class Action:
    """Commanded attitude (rad) and collective thrust (N)."""

    roll: np.ndarray
    pitch: np.ndarray
    yaw: np.ndarray
    thrust: np.ndarray

    @classmethod
    def hover(cls, params: VehicleParams, batch_shape=()) -> "Action":
        z = np.zeros(batch_shape)
        return cls(z, z.copy(), z.copy(), np.full(batch_shape, params.hover_thrust))

    @classmethod
    def from_unit(cls, unit: np.ndarray, params: VehicleParams) -> "Action":
        """Map ``(..., 4)`` values in [-1, 1] onto physical command ranges."""
        unit = np.asarray(unit, dtype=float)
        return cls(
            roll=unit[..., 0] * ANGLE_LIMIT,
            pitch=unit[..., 1] * ANGLE_LIMIT,
            yaw=unit[..., 2] * YAW_LIMIT,
            thrust=(unit[..., 3] + 1.0) * 0.5 * params.max_thrust,
        )

    def to_unit(self, params: VehicleParams) -> np.ndarray:
        """Per-component normalization to [-1, 1]; inverse of :meth:`from_unit`."""
        return np.stack(
            [
                np.asarray(self.roll) / ANGLE_LIMIT,
                np.asarray(self.pitch) / ANGLE_LIMIT,
                np.asarray(self.yaw) / YAW_LIMIT,
                2.0 * np.asarray(self.thrust) / params.max_thrust - 1.0,
            ],
            axis=-1,
        )

    def to_array(self) -> np.ndarray:
        return np.stack([np.asarray(self.roll), np.asarray(self.pitch),
                         np.asarray(self.yaw), np.asarray(self.thrust)], axis=-1).astype(float)

    def validate(self, params: VehicleParams) -> None:
        tol = 1e-12
        ok = (
            np.all(np.abs(self.roll) <= ANGLE_LIMIT + tol)
            and np.all(np.abs(self.pitch) <= ANGLE_LIMIT + tol)
            and np.all(np.abs(self.yaw) <= YAW_LIMIT + tol)
            and np.all(np.asarray(self.thrust) >= -tol)
            and np.all(np.asarray(self.thrust) <= params.max_thrust * (1 + tol))
        )
        if not ok:
            raise ValueError("action outside command bounds")


@dataclass
class ContactEvent:
    occurred: np.ndarray
    normal_force: np.ndarray
    contact_point: np.ndarray = field(default_factory=lambda: np.zeros(3))


def _lag_factor(dt: float, tau: float) -> float:
    return float(np.exp(-dt / tau)) if tau > 0 else 0.0


def step_dynamics(
    state: MultirotorState,
    action: Action,
    params: VehicleParams,
    dt: float,
    external_force: np.ndarray | None = None,
) -> MultirotorState:
    """Advance the vehicle by ``dt`` with semi-implicit Euler.

    ``external_force`` (world frame, N) carries the platform contact reaction.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not state.is_finite():
        raise NumericDivergence("numeric divergence: non-finite vehicle state")
    action.validate(params)

    keep_t = _lag_factor(dt, params.thrust_time_constant)
    thrust = np.asarray(action.thrust) + (state.thrust - np.asarray(action.thrust)) * keep_t

    target = geo.quat_from_euler(action.roll, action.pitch, action.yaw)
    err = geo.quat_log(geo.quat_mul(geo.quat_conj(state.attitude), target))
    delta = err * (1.0 - _lag_factor(dt, params.attitude_time_constant))
    attitude = geo.quat_normalize(geo.quat_mul(state.attitude, geo.quat_exp(delta)))
    ang_vel = delta / dt

    body_z = geo.quat_rotate(attitude, np.array([0.0, 0.0, 1.0]))
    acc = body_z * (thrust / params.mass)[..., None]
    acc = acc - np.array([0.0, 0.0, GRAVITY])
    if external_force is not None:
        acc = acc + external_force / params.mass

    lin_vel = state.lin_vel + acc * dt
    position = state.position + lin_vel * dt
    out = MultirotorState(position, attitude, lin_vel, ang_vel, thrust)
    if not out.is_finite():
        raise NumericDivergence("numeric divergence: non-finite state after step")
    return out


def detect_contact(state: MultirotorState, platform, params: VehicleParams) -> ContactEvent:
    """Spring-damper penalty contact between the vehicle's lowest point and the pad.

    ``platform`` is a :class:`vislander.platform.PlatformPose`.
    """
    rel = geo.quat_rotate_inv(platform.orientation, state.position - platform.position)
    lowest = rel[..., 2] - params.arm_clearance
    half = platform.pad_half_extent
    inside = (np.abs(rel[..., 0]) <= half) & (np.abs(rel[..., 1]) <= half)
    occurred = inside & (lowest < 0.0)
    penetration = np.where(occurred, -lowest, 0.0)

    contact_point = np.stack([rel[..., 0], rel[..., 1], np.zeros_like(rel[..., 0])], axis=-1)
    lever = geo.quat_rotate(platform.orientation, contact_point)
    surface_vel = platform.lin_vel + geo.cross(platform.ang_vel, lever)
    normal_speed = geo.dot(state.lin_vel - surface_vel, platform.surface_normal)
    closing = np.maximum(0.0, -normal_speed)

    force = params.contact_stiffness * penetration + params.contact_damping * closing
    force = np.where(occurred, force, 0.0)
    return ContactEvent(occurred=occurred, normal_force=force, contact_point=contact_point)


def contact_force_vector(contact: ContactEvent, platform) -> np.ndarray:
    """World-frame reaction force pushing the vehicle out along the pad normal."""
    return platform.surface_normal * np.asarray(contact.normal_force)[..., None]
