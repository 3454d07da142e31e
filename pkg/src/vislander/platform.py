"""Sinusoidally articulating landing platform.

Heave, roll, pitch and yaw each follow ``A_i * sin(2*pi*f*t + phi_i)`` with a
single shared frequency. Surge and sway are never excited. Rotations are
composed as intrinsic yaw-pitch-roll, the same convention the vehicle uses
for its attitude commands.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import rng as rnd

AXES = ("heave", "roll", "pitch", "yaw")
HEAVE, ROLL, PITCH, YAW = range(4)

MAX_TILT_AMPLITUDE = np.pi / 6
MAX_YAW_AMPLITUDE = np.pi / 16
MAX_HEAVE_AMPLITUDE = 5.0
MAX_FREQUENCY = 0.5


@dataclass
class PlatformLimits:
    tilt_amplitude: float = MAX_TILT_AMPLITUDE
    yaw_amplitude: float = MAX_YAW_AMPLITUDE
    heave_amplitude: float = MAX_HEAVE_AMPLITUDE
    max_frequency: float = MAX_FREQUENCY
    pad_half_extent: float = 0.75
    nominal_position: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass
class PlatformMotionParams:
    """Per-episode excitation. ``amplitudes`` and ``phases`` are ordered heave, roll, pitch, yaw."""

    amplitudes: np.ndarray
    frequency: np.ndarray
    phases: np.ndarray
    nominal_position: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def static(cls, nominal_position=(0.0, 0.0, 0.0), batch_shape=()) -> "PlatformMotionParams":
        return cls(
            amplitudes=np.zeros(batch_shape + (4,)),
            frequency=np.zeros(batch_shape),
            phases=np.zeros(batch_shape + (4,)),
            nominal_position=np.broadcast_to(np.asarray(nominal_position, float), batch_shape + (3,)).copy(),
        )

    def check(self, limits: PlatformLimits | None = None) -> None:
        lim = limits or PlatformLimits()
        a = np.asarray(self.amplitudes)
        f = np.asarray(self.frequency)
        ok = (
            np.all((f >= 0) & (f <= lim.max_frequency))
            and np.all(np.abs(a[..., ROLL]) <= lim.tilt_amplitude)
            and np.all(np.abs(a[..., PITCH]) <= lim.tilt_amplitude)
            and np.all(np.abs(a[..., YAW]) <= lim.yaw_amplitude)
            and np.all((a[..., HEAVE] >= 0) & (a[..., HEAVE] <= lim.heave_amplitude))
        )
        if not ok:
            raise ValueError("platform motion parameters outside allowed ranges")


@dataclass
class PlatformPose:
    """Platform pose at one instant. ``ang_vel`` is expressed in the world frame."""

    position: np.ndarray
    orientation: np.ndarray
    surface_normal: np.ndarray
    lin_vel: np.ndarray
    ang_vel: np.ndarray
    pad_half_extent: float = 0.75


def sample_motion_params(
    rngs: rnd.Rngs,
    stage: str,
    heave_cap: float,
    limits: PlatformLimits | None = None,
    frequency: float | None = None,
) -> PlatformMotionParams:
    """Draw one episode's motion given the curriculum stage and heave cap.

    ``stage`` is ``"static"``, ``"angular"`` or ``"heave"``. ``frequency``
    pins the shared frequency (evaluation sweeps). The heave amplitude is
    uniform on ``[0, heave_cap]``; the cap is the curriculum's current maximum.
    All draws are made regardless of stage so the stream position is stable.
    """
    lim = limits or PlatformLimits()
    b = rnd.batch_shape(rngs)
    u = rnd.uniform(rngs, b + (9,))
    heave = u[..., 0] * min(heave_cap, lim.heave_amplitude)
    roll = (2 * u[..., 1] - 1) * lim.tilt_amplitude
    pitch = (2 * u[..., 2] - 1) * lim.tilt_amplitude
    yaw = (2 * u[..., 3] - 1) * lim.yaw_amplitude
    freq = u[..., 4] * lim.max_frequency
    phases = u[..., 5:9] * (2 * np.pi)
    amps = np.stack([heave, roll, pitch, yaw], axis=-1)

    if stage == "static":
        amps = np.zeros_like(amps)
        freq = np.zeros_like(freq)
    elif stage == "angular":
        amps[..., HEAVE] = 0.0
    elif stage != "heave":
        raise ValueError(f"unknown curriculum stage {stage!r}")
    if frequency is not None:
        freq = np.full_like(freq, frequency)
    nominal = np.broadcast_to(np.asarray(lim.nominal_position, float), b + (3,)).copy()
    return PlatformMotionParams(amps, freq, phases, nominal)


def excitation(params: PlatformMotionParams, t) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis displacement and its time derivative, each ``(..., 4)``."""
    w = 2 * np.pi * np.asarray(params.frequency, float)
    arg = w[..., None] * np.asarray(t, float)[..., None] + params.phases
    eta = params.amplitudes * np.sin(arg)
    eta_dot = params.amplitudes * w[..., None] * np.cos(arg)
    return eta, eta_dot


def platform_pose_at(params: PlatformMotionParams, t, pad_half_extent: float = 0.75) -> PlatformPose:
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    eta, rate = excitation(params, t)
    roll, pitch, yaw = eta[..., ROLL], eta[..., PITCH], eta[..., YAW]
    droll, dpitch, dyaw = rate[..., ROLL], rate[..., PITCH], rate[..., YAW]

    zeros = np.zeros_like(eta[..., HEAVE])
    position = params.nominal_position + np.stack([zeros, zeros, eta[..., HEAVE]], axis=-1)
    lin_vel = np.stack([zeros, zeros, rate[..., HEAVE]], axis=-1)
    orientation = geo.quat_from_euler(roll, pitch, yaw)

    # world-frame angular velocity of an intrinsic z-y'-x'' Euler sequence
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    ang_vel = np.stack(
        [
            droll * cp * cy - dpitch * sy,
            droll * cp * sy + dpitch * cy,
            dyaw - droll * sp,
        ],
        axis=-1,
    )
    normal = geo.quat_rotate(orientation, np.array([0.0, 0.0, 1.0]))
    return PlatformPose(position, orientation, normal, lin_vel, ang_vel, pad_half_extent)


def surface_height(platform: PlatformPose, xy: np.ndarray) -> np.ndarray:
    """World z of the (unbounded) pad plane below the horizontal point ``xy``."""
    n = platform.surface_normal
    dx = xy[..., 0] - platform.position[..., 0]
    dy = xy[..., 1] - platform.position[..., 1]
    return platform.position[..., 2] - (n[..., 0] * dx + n[..., 1] * dy) / n[..., 2]
