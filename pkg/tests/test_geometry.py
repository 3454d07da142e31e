import numpy as np
from scipy.spatial.transform import Rotation

from vislander import geometry as geo


def _rand_quat(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def _to_scipy(q):
    return Rotation.from_quat(np.concatenate([q[..., 1:], q[..., :1]], axis=-1))


def test_rotate_matches_scipy(rng):
    q = _rand_quat(rng, 500)
    v = rng.normal(size=(500, 3))
    np.testing.assert_allclose(geo.quat_rotate(q, v), _to_scipy(q).apply(v), atol=1e-12)
    np.testing.assert_allclose(geo.quat_rotate_inv(q, v), _to_scipy(q).inv().apply(v), atol=1e-12)
    np.testing.assert_allclose(geo.quat_to_matrix(q), _to_scipy(q).as_matrix(), atol=1e-12)


def test_mul_matches_composition(rng):
    p, q = _rand_quat(rng, 200), _rand_quat(rng, 200)
    ref = (_to_scipy(p) * _to_scipy(q)).as_matrix()
    np.testing.assert_allclose(geo.quat_to_matrix(geo.quat_mul(p, q)), ref, atol=1e-12)


def test_euler_is_intrinsic_zyx(rng):
    r, p, y = rng.uniform(-1, 1, (3, 300))
    q = geo.quat_from_euler(r, p, y)
    ref = Rotation.from_euler("ZYX", np.stack([y, p, r], -1)).as_matrix()
    np.testing.assert_allclose(geo.quat_to_matrix(q), ref, atol=1e-12)
    np.testing.assert_allclose(geo.quat_to_euler(q), np.stack([r, p, y], -1), atol=1e-10)


def test_exp_log_roundtrip(rng):
    # log returns the short path, so the round trip holds for angles below pi
    d = rng.normal(size=(300, 3))
    v = d / np.linalg.norm(d, axis=-1, keepdims=True) * rng.uniform(0, 3.1, (300, 1))
    v = np.concatenate([v, np.zeros((1, 3)), np.full((1, 3), 1e-9)])
    q = geo.quat_exp(v)
    np.testing.assert_allclose(np.linalg.norm(q, axis=-1), 1.0, atol=1e-14)
    np.testing.assert_allclose(geo.quat_log(q), v, atol=1e-10)
    np.testing.assert_allclose(_to_scipy(q).as_rotvec(), v, atol=1e-10)


def test_log_takes_short_path(rng):
    q = _rand_quat(rng, 300)
    angle = np.linalg.norm(geo.quat_log(q), axis=-1)
    assert np.all(angle <= np.pi + 1e-12)
    np.testing.assert_allclose(angle, _to_scipy(q).magnitude(), atol=1e-10)


def test_angle_between(rng):
    a, b = rng.normal(size=(2, 400, 3))
    ref = np.arccos(np.clip(np.sum(a * b, -1) / np.linalg.norm(a, axis=-1) / np.linalg.norm(b, axis=-1), -1, 1))
    np.testing.assert_allclose(geo.angle_between(a, b), ref, atol=1e-7)
    x = np.array([1.0, 0, 0])
    assert geo.angle_between(x, x) == 0.0
    assert abs(geo.angle_between(x, -x) - np.pi) < 1e-15


def test_canonical_has_nonnegative_scalar(rng):
    q = _rand_quat(rng, 100)
    c = geo.quat_canonical(q)
    assert np.all(c[:, 0] >= 0)
    np.testing.assert_allclose(np.abs(np.sum(c * q, -1)), 1.0, atol=1e-12)
