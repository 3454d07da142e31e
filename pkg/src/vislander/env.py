"""Vectorized landing environment.

``LandingEnv`` steps a batch of independent episodes with numpy. Each row has
its own random streams, and every numpy operation is row-wise, so a row
evolves identically whether it is stepped alone, in a chunk, or in the full
batch. ``VecLandingEnv`` splits a batch into chunks that may be stepped on
worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, is_dataclass

import numpy as np

from . import geometry as geo
from . import rng as rnd
from .observation import (Observation, StateNoiseParams, StateSnapshot, build_observation,
                          observation_arrays, snapshot_state)
from .platform import PlatformLimits, PlatformMotionParams, platform_pose_at, sample_motion_params
from .reward import (RewardParams, compute_relative_metrics, compute_reward, failure_mask,
                     success_mask)
from .sim import Action, ContactEvent, MultirotorState, VehicleParams, contact_force_vector, detect_contact, step_dynamics
from .vision import CameraModel, FeatureField, SparseFeatureSet, observe_features, perturb_camera, sample_feature_field

SUCCESS, CRASH, TIMEOUT = 0, 1, 2
OUTCOMES = ("success", "crash", "timeout")


@dataclass
class EpisodeConfig:
    control_hz: float = 30.0
    substeps: int = 4
    spawn_height: tuple[float, float] = (1.5, 3.0)
    spawn_xy: float = 1.0
    spawn_speed: float = 0.5
    spawn_tilt_deg: float = 5.0
    spawn_yaw_deg: float = 45.0

    @property
    def dt(self) -> float:
        return 1.0 / self.control_hz


@dataclass
class VisionConfig:
    camera: CameraModel = field(default_factory=CameraModel)
    max_rot_deg: float = 2.0
    max_trans: float = 0.01
    dropout: float = 0.2
    desc_noise_sigma: float = 0.05
    num_points: int = 25
    descriptor_dim: int = 64


@dataclass
class EnvParams:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    platform: PlatformLimits = field(default_factory=PlatformLimits)
    vision: VisionConfig = field(default_factory=VisionConfig)
    state_noise: StateNoiseParams = field(default_factory=StateNoiseParams)
    reward: RewardParams = field(default_factory=RewardParams)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)


def take(obj, idx):
    """Row subset of a dataclass of batched arrays (recursing into nested dataclasses)."""
    if is_dataclass(obj):
        return type(obj)(**{f.name: take(getattr(obj, f.name), idx) for f in fields(obj)})
    if isinstance(obj, np.ndarray) and obj.ndim >= 1:
        return obj[idx]
    return obj


def put(obj, idx, sub):
    """In-place row assignment ``obj[idx] = sub`` across a dataclass of batched arrays."""
    for f in fields(obj):
        dst, src = getattr(obj, f.name), getattr(sub, f.name)
        if is_dataclass(dst):
            put(dst, idx, src)
        elif isinstance(dst, np.ndarray) and dst.ndim >= 1:
            dst[idx] = src


def concat(items):
    first = items[0]
    if is_dataclass(first):
        return type(first)(**{f.name: concat([getattr(i, f.name) for i in items]) for f in fields(first)})
    if isinstance(first, np.ndarray) and first.ndim >= 1:
        return np.concatenate(items)
    return first


class LandingEnv:
    """A batch of landing episodes.

    ``env_rngs`` drive episode initialization (platform motion, feature field,
    camera perturbation, spawn state); ``noise_rngs`` drive per-step feature
    dropout, descriptor noise and state noise. Both hold one generator per row.
    """

    def __init__(self, params: EnvParams, env_rngs, noise_rngs, auto_reset: bool = True):
        self.p = params
        self.env_rngs = list(env_rngs)
        self.noise_rngs = list(noise_rngs)
        self.n = len(self.env_rngs)
        self.auto_reset = auto_reset
        self.stage = "static"
        self.heave_cap = 0.0
        self.frequency: float | None = None
        self.progress = 0.0
        self.next_episode_id = np.zeros(self.n, dtype=np.int64)
        self.record_trajectory = False
        self.trajectory: list[list[dict]] = [[] for _ in range(self.n)]
        self._allocate()

    # -- state ---------------------------------------------------------------
    def _allocate(self):
        n, vp = self.n, self.p.vehicle
        cam = self.p.vision.camera
        self.vehicle = MultirotorState(np.zeros((n, 3)), np.tile(geo.IDENTITY_QUAT, (n, 1)),
                                       np.zeros((n, 3)), np.zeros((n, 3)), np.full(n, vp.hover_thrust))
        self.motion = PlatformMotionParams.static(batch_shape=(n,))
        npts, dim = self.p.vision.num_points, self.p.vision.descriptor_dim
        self.field = FeatureField(np.zeros((n, npts, 3)), np.zeros((n, npts, dim)))
        self.cam = CameraModel(cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height,
                               np.tile(cam.rotation, (n, 1)), np.tile(cam.translation, (n, 1)))
        self.step_count = np.zeros(n, dtype=np.int64)
        self.episode_id = np.zeros(n, dtype=np.int64)
        self.prev_features = SparseFeatureSet(np.zeros((n, npts, 2)), np.zeros((n, npts, dim)),
                                              np.zeros((n, npts), dtype=bool))
        self.prev_snapshot = StateSnapshot(np.zeros((n, 3)), np.tile(geo.IDENTITY_QUAT, (n, 1)), np.zeros((n, 3)))
        self.prev_action = Action.hover(vp, (n,))
        self.prev_d = np.zeros(n)
        self.touched = np.zeros(n, dtype=bool)
        self.touchdown_angle = np.full(n, np.nan)
        self.touchdown_dv = np.full(n, np.nan)
        self.done = np.zeros(n, dtype=bool)

    STATE_ATTRS = ("vehicle", "motion", "field", "cam", "step_count", "episode_id", "prev_features",
                   "prev_snapshot", "prev_action", "prev_d", "touched", "touchdown_angle", "touchdown_dv",
                   "done", "next_episode_id")

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}

        def walk(prefix, obj):
            if is_dataclass(obj):
                for f in fields(obj):
                    walk(f"{prefix}.{f.name}", getattr(obj, f.name))
            elif isinstance(obj, np.ndarray) and obj.ndim >= 1:
                out[prefix] = obj
        for name in self.STATE_ATTRS:
            walk(name, getattr(self, name))
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for key, value in arrays.items():
            head, *path = key.split(".")
            if not path:
                setattr(self, head, np.array(value, dtype=getattr(self, head).dtype))
                continue
            obj = getattr(self, head)
            for part in path[:-1]:
                obj = getattr(obj, part)
            setattr(obj, path[-1], np.array(value, dtype=getattr(obj, path[-1]).dtype))

    def rng_state(self) -> dict:
        return {"env": rnd.get_state(self.env_rngs), "noise": rnd.get_state(self.noise_rngs)}

    def set_rng_state(self, state: dict) -> None:
        rnd.set_state(self.env_rngs, state["env"])
        rnd.set_state(self.noise_rngs, state["noise"])

    # -- episode control -----------------------------------------------------
    def platform_pose(self, t=None, idx=slice(None)):
        t = self.step_count[idx] * self.p.episode.dt if t is None else t
        return platform_pose_at(take(self.motion, idx), t, self.p.platform.pad_half_extent)

    def _spawn(self, idx: np.ndarray):
        ep, vp = self.p.episode, self.p.vehicle
        rngs = [self.env_rngs[i] for i in idx]
        m = len(idx)
        motion = sample_motion_params(rngs, self.stage, self.heave_cap, self.p.platform, self.frequency)
        fld = sample_feature_field(rngs, self.p.platform.pad_half_extent, self.p.vision.num_points,
                                   self.p.vision.descriptor_dim)
        cam = perturb_camera(self.p.vision.camera, rngs, np.deg2rad(self.p.vision.max_rot_deg),
                             self.p.vision.max_trans)
        u = rnd.uniform(rngs, (m, 9), -1.0, 1.0)
        pose0 = platform_pose_at(motion, np.zeros(m), self.p.platform.pad_half_extent)
        h0, h1 = ep.spawn_height
        offset = np.stack([u[:, 0] * ep.spawn_xy, u[:, 1] * ep.spawn_xy, h0 + (u[:, 2] + 1) / 2 * (h1 - h0)], axis=-1)
        tilt = np.deg2rad(ep.spawn_tilt_deg)
        vehicle = MultirotorState(
            position=pose0.position + offset,
            attitude=geo.quat_from_euler(u[:, 3] * tilt, u[:, 4] * tilt, u[:, 5] * np.deg2rad(ep.spawn_yaw_deg)),
            lin_vel=u[:, 6:9] * ep.spawn_speed,
            ang_vel=np.zeros((m, 3)),
            thrust=np.full(m, vp.hover_thrust),
        )
        put(self.motion, idx, motion)
        put(self.field, idx, fld)
        self.cam.rotation[idx] = cam.rotation
        self.cam.translation[idx] = cam.translation
        put(self.vehicle, idx, vehicle)
        self.step_count[idx] = 0
        self.episode_id[idx] = self.next_episode_id[idx]
        self.next_episode_id[idx] += 1
        self.touched[idx] = False
        self.touchdown_angle[idx] = np.nan
        self.touchdown_dv[idx] = np.nan
        self.done[idx] = False
        if self.record_trajectory:
            for i in idx:
                self.trajectory[i] = []

        pose = self.platform_pose(idx=idx)
        cam_sub = take(self.cam, idx)
        metrics = compute_relative_metrics(vehicle, pose, cam_sub)
        self.prev_d[idx] = metrics.d_t
        obs = self._observe(idx, vehicle, pose, cam_sub, first=True)
        return obs

    def _observe(self, idx, vehicle, pose, cam, first: bool) -> Observation:
        vis, vp = self.p.vision, self.p.vehicle
        rngs = [self.noise_rngs[i] for i in idx]
        feats = observe_features(take(self.field, idx), pose, vehicle, cam, rngs, vis.dropout, vis.desc_noise_sigma)
        snap = snapshot_state(vehicle, self.p.state_noise, rngs)
        if first:
            obs = build_observation(feats, None, snap, None, None, vp, self.episode_id[idx])
        else:
            obs = build_observation(feats, take(self.prev_features, idx), snap, take(self.prev_snapshot, idx),
                                    take(self.prev_action, idx), vp, self.episode_id[idx])
        put(self.prev_features, idx, feats)
        put(self.prev_snapshot, idx, snap)
        if first:
            put(self.prev_action, idx, Action.hover(vp, (len(idx),)))
        return obs

    def reset(self) -> dict:
        obs = self._spawn(np.arange(self.n))
        return observation_arrays(obs, self.p.vehicle)

    # -- stepping --------------------------------------------------------------
    def step(self, unit_actions: np.ndarray):
        """Apply ``(n, 4)`` actions in [-1, 1]; returns ``(obs, reward, terminated, truncated, info)``.

        With ``auto_reset`` finished rows are re-spawned and ``obs`` holds their
        first observation, while ``info["final_obs"]`` keeps the observation
        that ended the episode. Rows already ``done`` without auto-reset are frozen.
        """
        p, vp, ep = self.p, self.p.vehicle, self.p.episode
        active = np.flatnonzero(~self.done)
        unit = np.clip(np.asarray(unit_actions, float), -1.0, 1.0)
        n = self.n
        reward = np.zeros(n)
        terminated = np.zeros(n, dtype=bool)
        truncated = np.zeros(n, dtype=bool)
        outcome = np.full(n, -1)
        info_force = np.zeros(n)
        breakdown = None

        if len(active):
            idx = active
            act_unit = unit[idx]
            action = Action.from_unit(act_unit, vp)
            vehicle = take(self.vehicle, idx)
            motion = take(self.motion, idx)
            t0 = self.step_count[idx] * ep.dt
            dt_phys = ep.dt / ep.substeps
            max_force = np.zeros(len(idx))
            occurred = np.zeros(len(idx), dtype=bool)
            for k in range(ep.substeps):
                pose = platform_pose_at(motion, t0 + k * dt_phys, p.platform.pad_half_extent)
                contact = detect_contact(vehicle, pose, vp)
                max_force = np.maximum(max_force, contact.normal_force)
                occurred |= contact.occurred
                vehicle = step_dynamics(vehicle, action, vp, dt_phys, contact_force_vector(contact, pose))
            self.step_count[idx] += 1
            pose = platform_pose_at(motion, self.step_count[idx] * ep.dt, p.platform.pad_half_extent)
            end_contact = detect_contact(vehicle, pose, vp)
            max_force = np.maximum(max_force, end_contact.normal_force)
            occurred |= end_contact.occurred
            contact = ContactEvent(occurred, max_force)

            cam = take(self.cam, idx)
            m = compute_relative_metrics(vehicle, pose, cam)
            fail = failure_mask(m, contact, p.reward)
            suc = success_mask(m, p.reward) & ~fail
            trunc = (self.step_count[idx] >= p.reward.t_max) & ~suc & ~fail

            prev_d = self.prev_d[idx]
            m_prev = type(m)(prev_d, *(np.zeros_like(prev_d) for _ in range(6)))
            breakdown = compute_reward(m, m_prev, act_unit, self.prev_action.to_unit(vp)[idx], self.progress,
                                       self.step_count[idx], suc, fail, p.reward)

            touch_now = (occurred | suc) & ~self.touched[idx]
            ti = idx[touch_now]
            self.touched[ti] = True
            self.touchdown_angle[ti] = np.rad2deg(m.dtheta_o[touch_now])
            self.touchdown_dv[ti] = m.dv[touch_now]

            put(self.vehicle, idx, vehicle)
            self.prev_d[idx] = m.d_t
            put(self.prev_action, idx, action)
            obs_active = self._observe(idx, vehicle, pose, cam, first=False)

            reward[idx] = breakdown.total
            terminated[idx] = suc | fail
            truncated[idx] = trunc
            outcome[idx] = np.where(suc, SUCCESS, np.where(fail, CRASH, np.where(trunc, TIMEOUT, -1)))
            info_force[idx] = max_force
            if self.record_trajectory:
                self._log_steps(idx, vehicle, pose, action, breakdown, contact, m)

        full_obs = self._full_obs_arrays(active, obs_active if len(active) else None)
        done_now = terminated | truncated
        info = {
            "outcome": outcome,
            "length": self.step_count.copy(),
            "touchdown_angle": self.touchdown_angle.copy(),
            "touchdown_dv": self.touchdown_dv.copy(),
            "contact_force": info_force,
            "episode_id": self.episode_id.copy(),
            "final_obs": full_obs,
        }
        self.done |= done_now
        obs = full_obs
        if self.auto_reset and done_now.any():
            ridx = np.flatnonzero(done_now)
            first = observation_arrays(self._spawn(ridx), vp)
            obs = {k: v.copy() for k, v in full_obs.items()}
            for k in obs:
                obs[k][ridx] = first[k]
        return obs, reward, terminated, truncated, info

    def _full_obs_arrays(self, idx, obs: Observation | None) -> dict:
        # rows outside idx (frozen finished episodes) repeat their last history
        vp = self.p.vehicle
        base = observation_arrays(
            build_observation(self.prev_features, self.prev_features, self.prev_snapshot, self.prev_snapshot,
                              self.prev_action, vp), vp)
        if obs is not None:
            sub = observation_arrays(obs, vp)
            for k in base:
                base[k][idx] = sub[k]
        return base

    def _log_steps(self, idx, vehicle, pose, action, breakdown, contact, m):
        for j, i in enumerate(idx):
            self.trajectory[i].append({
                "t": float(self.step_count[i] * self.p.episode.dt),
                "position": vehicle.position[j].tolist(),
                "attitude": vehicle.attitude[j].tolist(),
                "lin_vel": vehicle.lin_vel[j].tolist(),
                "ang_vel": vehicle.ang_vel[j].tolist(),
                "platform_position": pose.position[j].tolist(),
                "platform_orientation": pose.orientation[j].tolist(),
                "platform_lin_vel": pose.lin_vel[j].tolist(),
                "platform_ang_vel": pose.ang_vel[j].tolist(),
                "action": [float(action.roll[j]), float(action.pitch[j]), float(action.yaw[j]), float(action.thrust[j])],
                "contact_occurred": bool(contact.occurred[j]),
                "contact_force": float(contact.normal_force[j]),
                "reward": {k: float(v[j]) for k, v in breakdown.as_dict().items()},
                "d_t": float(m.d_t[j]),
            })


class VecLandingEnv:
    """Chunks of :class:`LandingEnv` stepped on up to ``workers`` threads."""

    def __init__(self, params: EnvParams, env_rngs, noise_rngs, workers: int = 1, auto_reset: bool = True):
        n = len(env_rngs)
        workers = max(1, min(workers, n))
        bounds = np.linspace(0, n, workers + 1).astype(int)
        self.chunks = [LandingEnv(params, env_rngs[a:b], noise_rngs[a:b], auto_reset)
                       for a, b in zip(bounds[:-1], bounds[1:])]
        self.bounds = bounds
        self.n = n
        self.pool = ThreadPoolExecutor(workers) if workers > 1 else None

    def _map(self, fn, *args):
        if self.pool is None:
            return [fn(c, *a) for c, *a in zip(self.chunks, *args)] if args else [fn(c) for c in self.chunks]
        if args:
            return list(self.pool.map(lambda ca: fn(ca[0], *ca[1:]), zip(self.chunks, *args)))
        return list(self.pool.map(fn, self.chunks))

    def set_curriculum(self, stage: str, heave_cap: float, progress: float) -> None:
        for c in self.chunks:
            c.stage, c.heave_cap, c.progress = stage, heave_cap, progress

    def reset(self) -> dict:
        return _merge(self._map(lambda c: c.reset()))

    def step(self, unit_actions: np.ndarray):
        parts = [unit_actions[a:b] for a, b in zip(self.bounds[:-1], self.bounds[1:])]
        results = self._map(lambda c, a: c.step(a), parts)
        obs = _merge([r[0] for r in results])
        reward = np.concatenate([r[1] for r in results])
        term = np.concatenate([r[2] for r in results])
        trunc = np.concatenate([r[3] for r in results])
        info = {k: np.concatenate([r[4][k] for r in results]) for k in results[0][4] if k != "final_obs"}
        info["final_obs"] = _merge([r[4]["final_obs"] for r in results])
        return obs, reward, term, trunc, info

    def state(self) -> tuple[dict, dict]:
        arrays = concat_arrays([c.state_arrays() for c in self.chunks])
        rng_state = {"env": sum((c.rng_state()["env"] for c in self.chunks), []),
                     "noise": sum((c.rng_state()["noise"] for c in self.chunks), [])}
        return arrays, rng_state

    def load_state(self, arrays: dict, rng_state: dict) -> None:
        for c, a, b in zip(self.chunks, self.bounds[:-1], self.bounds[1:]):
            c.load_state_arrays({k: v[a:b] for k, v in arrays.items()})
            c.set_rng_state({"env": rng_state["env"][a:b], "noise": rng_state["noise"][a:b]})

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def _merge(dicts):
    return {k: np.concatenate([d[k] for d in dicts]) for k in dicts[0]}


def concat_arrays(dicts):
    return {k: np.concatenate([d[k] for d in dicts]) for k in dicts[0]}
