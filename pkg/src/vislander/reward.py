"""Relative metrics, success/failure masks and the shaped landing reward."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import geometry as geo
from .platform import PlatformPose, surface_height
from .sim import ContactEvent, MultirotorState
from .vision import CameraModel

_Z = np.array([0.0, 0.0, 1.0])


@dataclass
class RewardParams:
    lambda1: float = 1.0
    lambda2: float = 0.05
    lambda3: float = 5.0
    lambda4: float = 0.02
    lambda5: float = 10.0
    lambda6: float = -0.1
    lambda7: float = 0.02
    lambda8: float = 5.0
    lambda9: float = 0.1
    lambda10: float = 10.0
    lambda11: float = 0.1
    lambda12: float = 0.2
    lambda13: float = 0.5
    lambda14: float = 10.0
    lambda15: float = 0.02
    lambda16: float = 1.0
    d_xy_max: float = 1.0
    dpz_max: float = 0.2
    dtheta_max_deg: float = 10.0
    dv_max: float = 1.5
    d_max: float = 10.0
    crash_force: float = 10.0
    t_max: int = 300

    def __post_init__(self):
        if self.lambda6 >= 0:
            raise ValueError("lambda6 is a penalty and must be negative")
        thresholds = (self.d_xy_max, self.dpz_max, self.dtheta_max_deg, self.dv_max,
                      self.d_max, self.crash_force, self.t_max)
        if min(thresholds) <= 0:
            raise ValueError("reward thresholds must be positive")

    @property
    def dtheta_max(self) -> float:
        return np.deg2rad(self.dtheta_max_deg)


@dataclass
class RelativeMetrics:
    d_t: np.ndarray
    d_xy: np.ndarray
    dp_z: np.ndarray
    dtheta_o: np.ndarray
    dv: np.ndarray
    theta_v: np.ndarray
    theta_c: np.ndarray


@dataclass
class RewardBreakdown:
    r_app: np.ndarray
    r_perc: np.ndarray
    r_smooth: np.ndarray
    r_align: np.ndarray
    r_pos: np.ndarray
    r_term: np.ndarray
    total: np.ndarray

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def compute_relative_metrics(vehicle: MultirotorState, platform: PlatformPose, cam: CameraModel) -> RelativeMetrics:
    """Vehicle-vs-platform errors.

    ``dp_z`` is the signed height of the vehicle origin above the pad plane,
    measured along world z; positive means above. Direction-based angles
    fall back to 0 when their direction is undefined.
    """
    rel = platform.position - vehicle.position
    d_t = geo.norm(rel)
    d_xy = np.sqrt(rel[..., 0] ** 2 + rel[..., 1] ** 2)
    dp_z = vehicle.position[..., 2] - surface_height(platform, vehicle.position)

    thrust_axis = geo.quat_rotate(vehicle.attitude, _Z)
    dtheta_o = geo.angle_between(thrust_axis, platform.surface_normal)
    dv = geo.norm(vehicle.lin_vel - platform.lin_vel)

    speed = geo.norm(vehicle.lin_vel)
    theta_v = np.where((speed < 1e-3) | (d_t < 1e-9), 0.0, geo.angle_between(vehicle.lin_vel, rel))

    cam_origin, _ = cam.pose_in_world(vehicle.position, vehicle.attitude)
    to_center = platform.position - cam_origin
    theta_c = geo.angle_between(cam.optical_axis(vehicle.attitude), to_center)
    theta_c = np.where(geo.norm(to_center) < 1e-9, 0.0, theta_c)
    return RelativeMetrics(d_t, d_xy, dp_z, dtheta_o, dv, theta_v, theta_c)


def success_mask(m: RelativeMetrics, p: RewardParams | None = None) -> np.ndarray:
    p = p or RewardParams()
    return ((m.d_xy < p.d_xy_max) & (np.abs(m.dp_z) < p.dpz_max)
            & (m.dtheta_o < p.dtheta_max) & (m.dv < p.dv_max))


def failure_mask(m: RelativeMetrics, contact: ContactEvent, p: RewardParams | None = None) -> np.ndarray:
    p = p or RewardParams()
    crash = np.asarray(contact.occurred) & (np.asarray(contact.normal_force) > p.crash_force)
    return (m.d_t > p.d_max) | crash


def compute_reward(
    m: RelativeMetrics,
    m_prev: RelativeMetrics,
    a_t: np.ndarray,
    a_prev: np.ndarray,
    c_t,
    t,
    suc,
    fail,
    p: RewardParams | None = None,
) -> RewardBreakdown:
    """Shaped reward for one control step.

    ``a_t`` and ``a_prev`` are actions already normalized to [-1, 1] per
    component (see :meth:`vislander.sim.Action.to_unit`). ``t`` counts control
    steps from the episode start.
    """
    p = p or RewardParams()
    suc = np.asarray(suc, dtype=float)
    fail = np.asarray(fail, dtype=float)

    r_app = p.lambda1 * (m_prev.d_t - m.d_t) + p.lambda2 * np.exp(-p.lambda3 * m.theta_v**2)
    r_perc = p.lambda4 * np.exp(-p.lambda5 * m.theta_c**2)
    diff = np.asarray(a_t) - np.asarray(a_prev)
    r_smooth = p.lambda6 * np.sqrt(np.sum(diff * diff, axis=-1)) * c_t

    r_lv = p.lambda7 * np.exp(-p.lambda8 * m.dv**2)
    r_or = p.lambda9 * np.exp(-p.lambda10 * m.dtheta_o**2)
    r_col = p.lambda11 * np.minimum((np.abs(m.dp_z) + m.dp_z) * np.cos(m.dtheta_o) - p.lambda12, 0.0)
    r_align = r_lv + r_or + r_col
    r_pos = np.exp(-p.lambda13 * m.d_t**2)

    remaining = p.t_max - np.asarray(t, dtype=float)
    r_suc = suc * (p.lambda14 * remaining / p.t_max + p.lambda15 * remaining)
    r_term = r_suc - p.lambda16 * fail

    total = r_app + r_perc + r_smooth + r_pos * r_align + r_term
    return RewardBreakdown(r_app, r_perc, r_smooth, r_align, r_pos, r_term, total)
