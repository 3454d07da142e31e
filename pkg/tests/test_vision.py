import numpy as np
import pytest

from vislander import geometry as geo
from vislander import rng as rnd
from vislander.platform import PlatformMotionParams, platform_pose_at
from vislander.sim import MultirotorState, VehicleParams
from vislander.vision import (CameraModel, FeatureField, normalize_pixels, observe_features, perturb_camera,
                              points_in_camera, project, sample_feature_field, unproject)


def _pose():
    return platform_pose_at(PlatformMotionParams.static(), 0.0)


def _vehicle(z=2.0, xy=(0.0, 0.0)):
    return MultirotorState.hover(VehicleParams(), (xy[0], xy[1], z))


def test_field_invariants():
    for seed in range(20):
        f = sample_feature_field(rnd.make_rng(seed, "env"))
        assert f.points.shape == (25, 3) and f.descriptors.shape == (25, 64)
        np.testing.assert_allclose(np.linalg.norm(f.descriptors, axis=-1), 1.0, atol=1e-9)
        assert np.all(np.abs(f.points[:, :2]) <= 0.75)
        np.testing.assert_array_equal(f.points[:, 2], 0.0)


def test_independent_fields_differ():
    a = sample_feature_field(rnd.make_rng(1, "env"))
    b = sample_feature_field(rnd.make_rng(2, "env"))
    cos = np.sum(a.descriptors * b.descriptors, axis=-1)
    assert np.all(cos < 0.9)


def test_random_unit_similarity_tail():
    # Monte-Carlo: P(cos > 0.9) for independent 64-d unit vectors is far below 1e-3
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200_000, 64))
    y = rng.normal(size=(200_000, 64))
    cos = np.sum(x * y, -1) / np.linalg.norm(x, axis=-1) / np.linalg.norm(y, axis=-1)
    assert np.mean(cos >= 0.9) <= 1e-3


def test_center_point_projects_to_origin():
    f = FeatureField(np.zeros((25, 3)), np.tile(np.eye(64)[0], (25, 1)))
    obs = observe_features(f, _pose(), _vehicle(), CameraModel(), np.random.default_rng(0), 0.0, 0.0)
    assert obs.valid.all()
    np.testing.assert_allclose(obs.keypoints, 0.0, atol=1e-15)


def test_camera_looks_down():
    cam = CameraModel()
    np.testing.assert_allclose(cam.optical_axis(geo.IDENTITY_QUAT), [0.0, 0.0, -1.0], atol=1e-15)


def test_platform_behind_camera_invalid():
    f = sample_feature_field(np.random.default_rng(0))
    obs = observe_features(f, _pose(), _vehicle(z=-1.0), CameraModel(), np.random.default_rng(1), 0.0, 0.0)
    assert not obs.valid.any()
    np.testing.assert_array_equal(obs.keypoints, 0.0)
    np.testing.assert_array_equal(obs.descriptors, 0.0)


def test_out_of_frame_invalid():
    f = sample_feature_field(np.random.default_rng(0))
    obs = observe_features(f, _pose(), _vehicle(z=1.0, xy=(5.0, 0.0)), CameraModel(), np.random.default_rng(1),
                           0.0, 0.0)
    assert not obs.valid.any()


def test_valid_keypoints_in_bounds(rng):
    cam = CameraModel()
    lo_x, hi_x, lo_y, hi_y = cam.normalized_bounds()
    for k in range(50):
        f = sample_feature_field(rng)
        veh = _vehicle(z=rng.uniform(0.5, 3.0), xy=rng.uniform(-1, 1, 2))
        veh.attitude = geo.quat_from_euler(*rng.uniform(-0.3, 0.3, 3))
        obs = observe_features(f, _pose(), veh, cam, rng, 0.2, 0.05)
        kp = obs.keypoints[obs.valid]
        assert np.all((kp[:, 0] >= lo_x) & (kp[:, 0] <= hi_x) & (kp[:, 1] >= lo_y) & (kp[:, 1] <= hi_y))
        np.testing.assert_allclose(np.linalg.norm(obs.descriptors[obs.valid], axis=-1), 1.0, atol=1e-9)
        np.testing.assert_array_equal(obs.descriptors[~obs.valid], 0.0)


def test_dropout_mean():
    f = sample_feature_field(np.random.default_rng(0))
    veh, cam = _vehicle(), CameraModel()
    rows = 10_000
    big = FeatureField(np.broadcast_to(f.points, (rows, 25, 3)), np.broadcast_to(f.descriptors, (rows, 25, 64)))
    bpose = platform_pose_at(PlatformMotionParams.static(batch_shape=(rows,)), np.zeros(rows))
    bveh = MultirotorState(np.tile(veh.position, (rows, 1)), np.tile(veh.attitude, (rows, 1)),
                           np.zeros((rows, 3)), np.zeros((rows, 3)), np.zeros(rows))
    gen = np.random.default_rng(5)
    fractions = []
    for _ in range(10):
        obs = observe_features(big, bpose, bveh, cam, gen, 0.2, 0.0)
        fractions.append(obs.valid.mean())
    # all points are in view from 2 m, so only dropout removes them
    assert abs(np.mean(fractions) - 0.8) <= 0.005


def test_projection_roundtrip(rng):
    cam = CameraModel()
    p = rng.normal(size=(1000, 3))
    p[:, 2] = np.abs(p[:, 2]) + 0.1
    uv, front = project(cam, p)
    assert front.all()
    ray = unproject(normalize_pixels(cam, uv))
    np.testing.assert_allclose(ray, p / np.linalg.norm(p, axis=-1, keepdims=True), atol=1e-9)


def test_normalized_coords_scale_invariant(rng):
    cam = CameraModel()
    p = rng.normal(size=(1000, 3))
    p[:, 2] = np.abs(p[:, 2]) + 0.1
    for s in (0.5, 2.0, 3.7):
        scaled = CameraModel(cam.fx * s, cam.fy * s, cam.cx * s, cam.cy * s, int(cam.width * s), int(cam.height * s))
        a = normalize_pixels(cam, project(cam, p)[0])
        b = normalize_pixels(scaled, project(scaled, p)[0])
        np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)


def test_descriptors_constant_without_noise():
    f = sample_feature_field(np.random.default_rng(3))
    gen = np.random.default_rng(4)
    a = observe_features(f, _pose(), _vehicle(), CameraModel(), gen, 0.0, 0.0)
    b = observe_features(f, _pose(), _vehicle(z=1.5), CameraModel(), gen, 0.0, 0.0)
    both = a.valid & b.valid
    np.testing.assert_array_equal(a.descriptors[both], b.descriptors[both])


def test_noise_keeps_unit_norm():
    f = sample_feature_field(np.random.default_rng(3))
    obs = observe_features(f, _pose(), _vehicle(), CameraModel(), np.random.default_rng(9), 0.0, 0.5)
    np.testing.assert_allclose(np.linalg.norm(obs.descriptors, axis=-1), 1.0, atol=1e-9)
    assert not np.allclose(obs.descriptors, f.descriptors)


def test_camera_perturbation_bounds():
    base = CameraModel()
    rows = rnd.make_rngs(0, "env", 500)
    cam = perturb_camera(base, rows, np.deg2rad(2.0), 0.01)
    assert np.all(np.abs(cam.translation) <= 0.01)
    rel = geo.quat_log(geo.quat_mul(geo.quat_conj(np.broadcast_to(base.rotation, (500, 4))), cam.rotation))
    assert np.all(np.abs(rel) <= np.deg2rad(2.0) + 1e-12)


def test_bad_arguments():
    f = sample_feature_field(np.random.default_rng(0))
    with pytest.raises(ValueError):
        observe_features(f, _pose(), _vehicle(), CameraModel(), np.random.default_rng(0), 1.0, 0.0)
    with pytest.raises(ValueError):
        observe_features(f, _pose(), _vehicle(), CameraModel(), np.random.default_rng(0), 0.1, -1.0)
    with pytest.raises(ValueError):
        CameraModel(fx=0.0)
    with pytest.raises(ValueError):
        CameraModel(cx=1000.0)


def test_points_in_camera_nominal():
    f = FeatureField(np.array([[0.5, 0.0, 0.0]]), np.ones((1, 64)) / 8)
    pc = points_in_camera(f, _pose(), _vehicle(), CameraModel())
    # camera x = -body y, camera y = -body x, optical axis = -body z
    np.testing.assert_allclose(pc[0], [0.0, -0.5, 2.0], atol=1e-12)
