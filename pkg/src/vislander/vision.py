"""Synthetic sparse local features seen by a downward-facing pinhole camera.

Each episode scatters a fixed set of points over the pad, each carrying a
random unit descriptor. At every control step the visible points are
projected, randomly dropped and their descriptors perturbed, emulating a real
keypoint/descriptor extractor. The output always has the same number of
slots; invisible or dropped slots are zero-filled and flagged invalid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import rng as rnd

NUM_POINTS = 25
DESCRIPTOR_DIM = 64

# body -> camera rotation of the nominal downward camera:
# camera x = -body y, camera y = -body x, optical axis = -body z
_NOMINAL_ROT = np.array([0.0, 1.0 / np.sqrt(2), -1.0 / np.sqrt(2), 0.0])


@dataclass
class CameraModel:
    fx: float = 460.0
    fy: float = 460.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480
    # camera -> body rotation (quaternion) and camera origin in the body frame
    rotation: np.ndarray = field(default_factory=lambda: _NOMINAL_ROT.copy())
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValueError("principal point must lie inside the image")

    def normalized_bounds(self) -> tuple[float, float, float, float]:
        return (-self.cx / self.fx, (self.width - self.cx) / self.fx,
                -self.cy / self.fy, (self.height - self.cy) / self.fy)

    def pose_in_world(self, position: np.ndarray, attitude: np.ndarray):
        """Camera origin and camera->world quaternion for a vehicle pose."""
        origin = position + geo.quat_rotate(attitude, self.translation)
        return origin, geo.quat_mul(attitude, self.rotation)

    def optical_axis(self, attitude: np.ndarray) -> np.ndarray:
        return geo.quat_rotate(geo.quat_mul(attitude, self.rotation), np.array([0.0, 0.0, 1.0]))


def perturb_camera(base: CameraModel, rngs: rnd.Rngs, max_rot: float, max_trans: float) -> CameraModel:
    """Per-episode extrinsic perturbation, uniform per axis within the bounds."""
    b = rnd.batch_shape(rngs)
    u = rnd.uniform(rngs, b + (6,), -1.0, 1.0)
    dq = geo.quat_exp(u[..., :3] * max_rot)
    return CameraModel(
        base.fx, base.fy, base.cx, base.cy, base.width, base.height,
        rotation=geo.quat_mul(base.rotation, dq),
        translation=base.translation + u[..., 3:] * max_trans,
    )


@dataclass
class FeatureField:
    points: np.ndarray       # (..., N, 3) platform frame, z = 0
    descriptors: np.ndarray  # (..., N, D) unit norm


@dataclass
class SparseFeatureSet:
    keypoints: np.ndarray    # (..., N, 2) normalized image coordinates
    descriptors: np.ndarray  # (..., N, D)
    valid: np.ndarray        # (..., N) bool

    def copy(self) -> "SparseFeatureSet":
        return SparseFeatureSet(self.keypoints.copy(), self.descriptors.copy(), self.valid.copy())


def l2_normalize(x: np.ndarray) -> np.ndarray:
    return x / np.sqrt(np.sum(x * x, axis=-1, keepdims=True))


def sample_feature_field(rngs: rnd.Rngs, pad_half_extent: float = 0.75,
                         num_points: int = NUM_POINTS, dim: int = DESCRIPTOR_DIM) -> FeatureField:
    b = rnd.batch_shape(rngs)
    xy = rnd.uniform(rngs, b + (num_points, 2), -pad_half_extent, pad_half_extent)
    points = np.concatenate([xy, np.zeros(b + (num_points, 1))], axis=-1)
    desc = l2_normalize(rnd.normal(rngs, b + (num_points, dim)))
    return FeatureField(points, desc)


def project(cam: CameraModel, p_cam: np.ndarray):
    """Camera-frame points -> (pixel coords, in-front mask)."""
    z = p_cam[..., 2]
    front = z > 1e-6
    zs = np.where(front, z, 1.0)
    u = cam.fx * p_cam[..., 0] / zs + cam.cx
    v = cam.fy * p_cam[..., 1] / zs + cam.cy
    return np.stack([u, v], axis=-1), front


def normalize_pixels(cam: CameraModel, uv: np.ndarray) -> np.ndarray:
    return np.stack([(uv[..., 0] - cam.cx) / cam.fx, (uv[..., 1] - cam.cy) / cam.fy], axis=-1)


def unproject(keypoints: np.ndarray) -> np.ndarray:
    """Unit camera-frame ray through normalized image coordinates."""
    ray = np.concatenate([keypoints, np.ones(keypoints.shape[:-1] + (1,))], axis=-1)
    return l2_normalize(ray)


def points_in_camera(field_: FeatureField, platform, vehicle, cam: CameraModel) -> np.ndarray:
    """Field points expressed in the camera frame, ``(..., N, 3)``."""
    world = platform.position[..., None, :] + geo.quat_rotate(platform.orientation[..., None, :], field_.points)
    origin, q_wc = cam.pose_in_world(vehicle.position, vehicle.attitude)
    return geo.quat_rotate_inv(q_wc[..., None, :], world - origin[..., None, :])


def observe_features(
    field_: FeatureField,
    platform,
    vehicle,
    cam: CameraModel,
    rngs: rnd.Rngs,
    dropout: float = 0.2,
    desc_noise_sigma: float = 0.05,
) -> SparseFeatureSet:
    if not 0.0 <= dropout < 1.0:
        raise ValueError("dropout must be in [0, 1)")
    if desc_noise_sigma < 0:
        raise ValueError("desc_noise_sigma must be non-negative")

    p_cam = points_in_camera(field_, platform, vehicle, cam)
    uv, front = project(cam, p_cam)
    inside = (front & (uv[..., 0] >= 0) & (uv[..., 0] <= cam.width)
              & (uv[..., 1] >= 0) & (uv[..., 1] <= cam.height))

    n, d = field_.descriptors.shape[-2:]
    b = rnd.batch_shape(rngs, inside.shape[:-1])
    keep = rnd.uniform(rngs, b + (n,)) >= dropout
    noise = rnd.normal(rngs, b + (n, d))

    valid = inside & keep
    kp = np.where(valid[..., None], normalize_pixels(cam, uv), 0.0)
    desc = field_.descriptors
    if desc_noise_sigma > 0:
        desc = l2_normalize(desc + desc_noise_sigma * noise)
    desc = np.where(valid[..., None], desc, 0.0)
    return SparseFeatureSet(kp, desc, valid)
