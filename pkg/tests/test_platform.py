import numpy as np
import pytest
from scipy import stats

from vislander import geometry as geo
from vislander import rng as rnd
from vislander.platform import (PlatformLimits, PlatformMotionParams, platform_pose_at, sample_motion_params,
                                surface_height)


def _random_params(rng, n):
    lim = PlatformLimits()
    amps = np.stack([rng.uniform(0, lim.heave_amplitude, n), rng.uniform(-1, 1, n) * lim.tilt_amplitude,
                     rng.uniform(-1, 1, n) * lim.tilt_amplitude, rng.uniform(-1, 1, n) * lim.yaw_amplitude], -1)
    return PlatformMotionParams(amps, rng.uniform(0, 0.5, n), rng.uniform(0, 2 * np.pi, (n, 4)),
                                rng.uniform(-1, 1, (n, 3)))


def _euler_rates_oracle(q0, q1, h):
    # world angular velocity from a finite-difference quaternion derivative: w = 2 * qdot * conj(q)
    qdot = (q1 - q0) / (2 * h)
    return 2 * geo.quat_mul(qdot, geo.quat_conj((q0 + q1) / 2))[..., 1:]


def test_velocities_match_finite_differences(rng):
    n, h = 10_000, 1e-5
    params = _random_params(rng, n)
    t = rng.uniform(h, 30.0, n)
    pose = platform_pose_at(params, t)
    lo, hi = platform_pose_at(params, t - h), platform_pose_at(params, t + h)
    fd_lin = (hi.position - lo.position) / (2 * h)
    assert np.max(np.abs(fd_lin - pose.lin_vel)) < 1e-6
    fd_ang = _euler_rates_oracle(lo.orientation, hi.orientation, h)
    assert np.max(np.abs(fd_ang - pose.ang_vel)) < 1e-6


def test_amplitude_and_periodicity(rng):
    n = 2000
    params = _random_params(rng, n)
    params.frequency = np.maximum(params.frequency, 0.05)
    t = rng.uniform(0, 20.0, n)
    p0 = platform_pose_at(params, t)
    p1 = platform_pose_at(params, t + 1.0 / params.frequency)
    np.testing.assert_allclose(p1.position, p0.position, atol=1e-9)
    np.testing.assert_allclose(p1.orientation, p0.orientation, atol=1e-9)
    np.testing.assert_allclose(p1.lin_vel, p0.lin_vel, atol=1e-9)
    euler = geo.quat_to_euler(p0.orientation)
    amps = np.abs(params.amplitudes)
    assert np.all(np.abs(p0.position[:, 2] - params.nominal_position[:, 2]) <= amps[:, 0] + 1e-12)
    assert np.all(np.abs(euler) <= amps[:, 1:] + 1e-12)
    np.testing.assert_allclose(np.linalg.norm(p0.surface_normal, axis=-1), 1.0, atol=1e-12)


def test_zero_amplitude_is_nominal():
    params = PlatformMotionParams.static(nominal_position=(1.0, 2.0, 3.0))
    for t in (0.0, 0.3, 7.0):
        pose = platform_pose_at(params, t)
        np.testing.assert_array_equal(pose.position, [1.0, 2.0, 3.0])
        np.testing.assert_allclose(pose.orientation, geo.IDENTITY_QUAT)
        np.testing.assert_array_equal(pose.lin_vel, 0.0)
        np.testing.assert_array_equal(pose.ang_vel, 0.0)


def test_roll_quarter_period_peak():
    params = PlatformMotionParams(np.array([0.0, np.pi / 6, 0.0, 0.0]), np.array(0.5), np.zeros(4))
    pose = platform_pose_at(params, 0.5)
    assert abs(geo.quat_to_euler(pose.orientation)[0] - np.pi / 6) < 1e-12


def test_heave_velocity_zero_at_peak():
    params = PlatformMotionParams(np.array([2.0, 0.0, 0.0, 0.0]), np.array(0.25), np.zeros(4))
    pose = platform_pose_at(params, 1.0)
    assert abs(pose.lin_vel[2]) < 1e-12
    assert abs(pose.position[2] - 2.0) < 1e-12


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        platform_pose_at(PlatformMotionParams.static(), -0.1)


def test_surface_height_on_tilted_plane():
    params = PlatformMotionParams(np.array([0.0, 0.3, -0.2, 0.1]), np.array(0.25), np.zeros(4))
    pose = platform_pose_at(params, 1.0)
    pts_local = np.array([[0.3, -0.2, 0.0], [-0.5, 0.4, 0.0]])
    world = pose.position + geo.quat_rotate(pose.orientation, pts_local)
    np.testing.assert_allclose(surface_height(pose, world), world[:, 2], atol=1e-12)


def test_static_stage_sample():
    p = sample_motion_params(rnd.make_rngs(0, "env", 50), "static", 5.0)
    np.testing.assert_array_equal(p.amplitudes, 0.0)
    np.testing.assert_array_equal(p.frequency, 0.0)


def test_angular_stage_sample():
    p = sample_motion_params(rnd.make_rngs(0, "env", 500), "angular", 0.0)
    np.testing.assert_array_equal(p.amplitudes[:, 0], 0.0)
    assert np.all(np.abs(p.amplitudes[:, 1:3]) <= np.pi / 6)
    assert np.any(p.amplitudes[:, 1] != 0)
    p.check()


def test_unknown_stage_rejected():
    with pytest.raises(ValueError):
        sample_motion_params(np.random.default_rng(0), "wild", 1.0)


def test_full_curriculum_distribution():
    n = 100_000
    rows = [np.random.default_rng(s) for s in np.random.SeedSequence(99).spawn(n)]
    params = sample_motion_params(rows, "heave", 5.0)
    params.check()
    lim = PlatformLimits()
    a = params.amplitudes
    cases = [
        (a[:, 0], 0.0, lim.heave_amplitude),
        (a[:, 1], -lim.tilt_amplitude, lim.tilt_amplitude),
        (a[:, 2], -lim.tilt_amplitude, lim.tilt_amplitude),
        (a[:, 3], -lim.yaw_amplitude, lim.yaw_amplitude),
        (params.frequency, 0.0, lim.max_frequency),
    ] + [(params.phases[:, k], 0.0, 2 * np.pi) for k in range(4)]
    for x, lo, hi in cases:
        assert x.min() >= lo and x.max() <= hi
        counts, _ = np.histogram(x, bins=10, range=(lo, hi))
        assert stats.chisquare(counts).pvalue > 0.001


def test_heave_cap_bounds_amplitude():
    rows = rnd.make_rngs(3, "env", 2000)
    p = sample_motion_params(rows, "heave", 1.5)
    assert p.amplitudes[:, 0].max() <= 1.5
    assert p.amplitudes[:, 0].max() > 1.4


def test_pinned_frequency():
    p = sample_motion_params(rnd.make_rngs(3, "env", 10), "heave", 5.0, frequency=0.3)
    np.testing.assert_array_equal(p.frequency, 0.3)
