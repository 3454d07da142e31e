import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vislander import geometry as geo
from vislander.platform import PlatformMotionParams, platform_pose_at
from vislander.sim import (GRAVITY, Action, MultirotorState, NumericDivergence, VehicleParams, detect_contact,
                           step_dynamics)

DT = 1.0 / 120.0


def _static_pose(n=()):
    return platform_pose_at(PlatformMotionParams.static(batch_shape=n), np.zeros(n))


def test_hover_equilibrium():
    p = VehicleParams()
    s = MultirotorState.hover(p, (0.0, 0.0, 2.0))
    a = Action.hover(p)
    for _ in range(int(10 / DT)):
        s = step_dynamics(s, a, p, DT)
    assert np.linalg.norm(s.lin_vel) < 1e-6
    assert np.linalg.norm(s.position - [0.0, 0.0, 2.0]) < 1e-6


@pytest.mark.parametrize("T", [0.1, 0.25, 0.5, 0.75, 1.0])
def test_free_fall(T):
    # semi-implicit Euler overshoots by a factor (1 + dt/T); 200 steps keep that at 0.5%
    p = VehicleParams(thrust_time_constant=1e-9)
    s = MultirotorState.hover(p)
    s.thrust = np.array(0.0)
    a = Action(np.array(0.0), np.array(0.0), np.array(0.0), np.array(0.0))
    n = 200
    for _ in range(n):
        s = step_dynamics(s, a, p, T / n)
    expected = -0.5 * GRAVITY * T**2
    assert abs(s.position[2] - expected) <= 0.01 * abs(expected)


def test_free_fall_at_physics_rate():
    p = VehicleParams(thrust_time_constant=1e-9)
    s = MultirotorState.hover(p)
    a = Action(np.array(0.0), np.array(0.0), np.array(0.0), np.array(0.0))
    for _ in range(120):
        s = step_dynamics(s, a, p, DT)
    assert abs(s.position[2] + 0.5 * GRAVITY) <= 0.01 * 0.5 * GRAVITY


def test_zero_thrust_acceleration_tends_to_minus_g():
    p = VehicleParams()
    s = MultirotorState.hover(p)
    a = Action(np.array(0.0), np.array(0.0), np.array(0.0), np.array(0.0))
    vz = []
    for _ in range(120):
        s = step_dynamics(s, a, p, DT)
        vz.append(s.lin_vel[2])
    acc = np.diff(vz) / DT
    assert acc[0] > -GRAVITY + 1.0
    assert abs(acc[-1] + GRAVITY) < 1e-3


def test_roll_step_response():
    p = VehicleParams()
    s = MultirotorState.hover(p)
    a = Action(np.array(0.2), np.array(0.0), np.array(0.0), np.array(p.hover_thrust))
    steps = round(p.attitude_time_constant / DT)
    for _ in range(steps):
        s = step_dynamics(s, a, p, DT)
    roll = geo.quat_to_euler(s.attitude)[0]
    target = 0.2 * (1 - np.exp(-1.0))
    assert abs(roll - target) <= 0.02 * target


def test_thrust_lag_first_order():
    p = VehicleParams()
    s = MultirotorState.hover(p)
    a = Action(np.array(0.0), np.array(0.0), np.array(0.0), np.array(2 * p.hover_thrust))
    steps = 6
    t = steps * DT
    for _ in range(steps):
        s = step_dynamics(s, a, p, DT)
    ref = 2 * p.hover_thrust - p.hover_thrust * np.exp(-t / p.thrust_time_constant)
    assert abs(float(s.thrust) - ref) < 1e-12


def test_quaternion_norm_preserved_long_run():
    p = VehicleParams()
    rng = np.random.default_rng(0)
    n = 100_000
    cmds = rng.uniform(-1, 1, (n // 500 + 1, 4))
    s = MultirotorState.hover(p)
    worst = 0.0
    for k in range(n):
        u = cmds[k // 500]
        a = Action.from_unit(np.array([u[0], u[1], u[2], -0.5]), p)
        s = step_dynamics(s, a, p, DT)
        s.position[:] = 0.0
        s.lin_vel[:] = 0.0
        worst = max(worst, abs(np.linalg.norm(s.attitude) - 1.0))
    assert worst <= 1e-9


def test_batched_matches_single(rng):
    p = VehicleParams()
    n = 16
    s = MultirotorState(rng.normal(size=(n, 3)), geo.quat_normalize(rng.normal(size=(n, 4))),
                        rng.normal(size=(n, 3)), np.zeros((n, 3)), rng.uniform(0, 20, n))
    a = Action.from_unit(rng.uniform(-1, 1, (n, 4)), p)
    out = step_dynamics(s, a, p, DT)
    for i in range(n):
        si = MultirotorState(s.position[i], s.attitude[i], s.lin_vel[i], s.ang_vel[i], s.thrust[i])
        ai = Action(a.roll[i], a.pitch[i], a.yaw[i], a.thrust[i])
        oi = step_dynamics(si, ai, p, DT)
        np.testing.assert_array_equal(oi.position, out.position[i])
        np.testing.assert_array_equal(oi.attitude, out.attitude[i])


def test_deterministic(rng):
    p = VehicleParams()
    s = MultirotorState.hover(p, (0.1, 0.2, 0.3))
    a = Action.from_unit(rng.uniform(-1, 1, 4), p)
    x, y = step_dynamics(s, a, p, DT), step_dynamics(s, a, p, DT)
    for f in ("position", "attitude", "lin_vel", "ang_vel", "thrust"):
        np.testing.assert_array_equal(getattr(x, f), getattr(y, f))


def test_non_finite_state_raises():
    p = VehicleParams()
    s = MultirotorState.hover(p)
    s.lin_vel[0] = np.nan
    with pytest.raises(NumericDivergence, match="numeric divergence"):
        step_dynamics(s, Action.hover(p), p, DT)


def test_bad_inputs_rejected():
    p = VehicleParams()
    s = MultirotorState.hover(p)
    with pytest.raises(ValueError):
        step_dynamics(s, Action.hover(p), p, 0.0)
    with pytest.raises(ValueError):
        step_dynamics(s, Action(np.array(1.0), np.array(0.0), np.array(0.0), np.array(1.0)), p, DT)
    with pytest.raises(ValueError):
        VehicleParams(max_thrust=5.0)
    with pytest.raises(ValueError):
        VehicleParams(mass=0.0)


def test_unit_action_roundtrip(rng):
    p = VehicleParams()
    u = rng.uniform(-1, 1, (100, 4))
    a = Action.from_unit(u, p)
    a.validate(p)
    np.testing.assert_allclose(a.to_unit(p), u, atol=1e-15)
    np.testing.assert_allclose(Action.hover(p).to_unit(p), [0, 0, 0, 2 * GRAVITY / p.max_thrust - 1])


# -- contact --------------------------------------------------------------------

def _state_at(z, vz=0.0, x=0.0):
    p = VehicleParams()
    s = MultirotorState.hover(p, (x, 0.0, z))
    s.lin_vel[2] = vz
    return s


def test_no_contact_high_above():
    p = VehicleParams()
    c = detect_contact(_state_at(1.0), _static_pose(), p)
    assert not c.occurred and c.normal_force == 0.0


def test_penetration_force():
    p = VehicleParams()
    c = detect_contact(_state_at(p.arm_clearance - 0.01), _static_pose(), p)
    assert c.occurred
    assert abs(c.normal_force - 5.0) < 1e-9


def test_penetration_with_closing_speed():
    p = VehicleParams()
    c = detect_contact(_state_at(p.arm_clearance - 0.01, vz=-1.5), _static_pose(), p)
    assert abs(c.normal_force - 20.0) < 1e-9
    assert c.normal_force > 10.0


def test_separating_speed_adds_nothing():
    p = VehicleParams()
    c = detect_contact(_state_at(p.arm_clearance - 0.01, vz=1.0), _static_pose(), p)
    assert abs(c.normal_force - 5.0) < 1e-9


def test_outside_pad_no_contact():
    p = VehicleParams()
    c = detect_contact(_state_at(0.0, x=0.8), _static_pose(), p)
    assert not c.occurred and c.normal_force == 0.0


def test_contact_on_tilted_pad_uses_platform_frame():
    p = VehicleParams()
    motion = PlatformMotionParams(np.array([0.0, np.pi / 6, 0.0, 0.0]), np.array(0.25), np.zeros(4))
    pose = platform_pose_at(motion, 1.0)  # quarter period: roll at +30 deg
    inside = pose.position + pose.surface_normal * (p.arm_clearance - 0.02)
    s = MultirotorState.hover(p, inside)
    c = detect_contact(s, pose, p)
    assert c.occurred and abs(c.normal_force - 10.0) < 1e-9


@settings(max_examples=300, deadline=None)
@given(pen=st.floats(0.0, 0.2), delta=st.floats(0.0, 0.05), v1=st.floats(-3, 3), v2=st.floats(-3, 3))
def test_contact_force_continuity(pen, delta, v1, v2):
    p = VehicleParams()
    pose = _static_pose()
    f1 = detect_contact(_state_at(p.arm_clearance - pen - 1e-12, vz=v1), pose, p).normal_force
    f2 = detect_contact(_state_at(p.arm_clearance - pen - delta - 1e-12, vz=v2), pose, p).normal_force
    assert f1 >= 0 and f2 >= 0
    assert abs(f2 - f1) <= p.contact_stiffness * delta + p.contact_damping * abs(v2 - v1) + 1e-9
