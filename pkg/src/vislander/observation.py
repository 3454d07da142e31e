"""Noisy state snapshots and the per-step observation bundle.

The policy never sees an absolute position: a snapshot carries only the
vehicle's velocity, attitude and body rates, and the platform is known to the
policy only through the feature sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from . import rng as rnd
from .sim import Action, MultirotorState, VehicleParams
from .vision import SparseFeatureSet

STATE_DIM = 10
ACTION_DIM = 4


@dataclass
class StateNoiseParams:
    vel_sigma: float = 0.05
    att_sigma: float = 0.01
    angvel_sigma: float = 0.02

    def __post_init__(self):
        if min(self.vel_sigma, self.att_sigma, self.angvel_sigma) < 0:
            raise ValueError("noise magnitudes must be non-negative")


@dataclass
class StateSnapshot:
    lin_vel: np.ndarray
    attitude: np.ndarray
    ang_vel: np.ndarray

    def vector(self) -> np.ndarray:
        """``[lin_vel, attitude (w >= 0), ang_vel]`` as a ``(..., 10)`` array."""
        return np.concatenate([self.lin_vel, geo.quat_canonical(self.attitude), self.ang_vel], axis=-1)

    def copy(self) -> "StateSnapshot":
        return StateSnapshot(self.lin_vel.copy(), self.attitude.copy(), self.ang_vel.copy())


@dataclass
class Observation:
    features_now: SparseFeatureSet
    features_prev: SparseFeatureSet
    state_now: StateSnapshot
    state_prev: StateSnapshot
    prev_action: Action
    episode_id: np.ndarray | int = 0


def snapshot_state(true_state: MultirotorState, noise: StateNoiseParams, rngs: rnd.Rngs) -> StateSnapshot:
    b = rnd.batch_shape(rngs, true_state.lin_vel.shape[:-1])
    n = rnd.normal(rngs, b + (9,))
    lin_vel = true_state.lin_vel + noise.vel_sigma * n[..., 0:3]
    ang_vel = true_state.ang_vel + noise.angvel_sigma * n[..., 6:9]
    attitude = true_state.attitude.copy()
    if noise.att_sigma > 0:
        attitude = geo.quat_normalize(geo.quat_mul(attitude, geo.quat_exp(noise.att_sigma * n[..., 3:6])))
    return StateSnapshot(lin_vel, attitude, ang_vel)


def build_observation(
    feat_now: SparseFeatureSet,
    feat_prev: SparseFeatureSet | None,
    snap_now: StateSnapshot,
    snap_prev: StateSnapshot | None,
    prev_action: Action | None,
    vehicle: VehicleParams,
    episode_id=0,
) -> Observation:
    """Package one observation. ``None`` for the history fields marks episode start:
    the current features and state are duplicated and the previous action is hover."""
    if feat_prev is None:
        feat_prev = feat_now.copy()
    if snap_prev is None:
        snap_prev = snap_now.copy()
    if prev_action is None:
        prev_action = Action.hover(vehicle, snap_now.lin_vel.shape[:-1])
    return Observation(feat_now, feat_prev, snap_now, snap_prev, prev_action, episode_id)


def observation_arrays(obs: Observation, vehicle: VehicleParams) -> dict[str, np.ndarray]:
    """Flatten to the network's input arrays (float32 where the network consumes them)."""
    f32 = np.float32
    return {
        "kp_now": obs.features_now.keypoints.astype(f32),
        "desc_now": obs.features_now.descriptors.astype(f32),
        "mask_now": obs.features_now.valid.copy(),
        "kp_prev": obs.features_prev.keypoints.astype(f32),
        "desc_prev": obs.features_prev.descriptors.astype(f32),
        "mask_prev": obs.features_prev.valid.copy(),
        "state": np.concatenate([obs.state_now.vector(), obs.state_prev.vector()], axis=-1).astype(f32),
        "prev_action": obs.prev_action.to_unit(vehicle).astype(f32),
    }
