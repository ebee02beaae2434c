import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from raycal import autodiff as ad
from raycal.autodiff import Tensor, grad_check
from raycal.errors import DegeneracyError, DimensionError
from raycal.geometry import (PluckerRay, Rotation6D, SE3Pose, plucker_encode, ray_transform,
                             relative_pose, rot6d_to_matrix, rotation_angle_deg, se3_compose,
                             se3_inverse)
from raycal.simscene import make_trajectory

vec3 = st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3).map(np.array)


def random_pose(rng):
    return SE3Pose(Rotation.random(random_state=rng.integers(1 << 31)).as_matrix(), rng.normal(size=3))


# rot6d ------------------------------------------------------------------------

def test_rot6d_identity_and_scale_invariance():
    assert np.allclose(rot6d_to_matrix([1.0, 0, 0], [0, 1.0, 0]).data, np.eye(3), atol=1e-15)
    assert np.allclose(rot6d_to_matrix([2.0, 0, 0], [0, 3.0, 0]).data, np.eye(3), atol=1e-15)


def test_rot6d_random_is_rotation():
    r = np.random.default_rng(0).normal(size=6)
    R = rot6d_to_matrix(Rotation6D.from_vector(r)).data
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-9)
    assert abs(np.linalg.det(R) - 1) < 1e-9


def test_rot6d_recovers_matrix_columns():
    R = Rotation.random(random_state=4).as_matrix()
    assert np.allclose(rot6d_to_matrix(Rotation6D.from_matrix(R)).data, R, atol=1e-12)


@pytest.mark.parametrize("a1,a2", [([0, 0, 0], [0, 1, 0]), ([1, 0, 0], [2, 0, 0]), ([1, 1, 0], [-3, -3, 0])])
def test_rot6d_degenerate_inputs(a1, a2):
    with pytest.raises(DegeneracyError):
        rot6d_to_matrix(np.array(a1, float), np.array(a2, float))


@given(vec3, vec3)
def test_rot6d_always_orthonormal(a1, a2):
    assume(np.linalg.norm(a1) > 1e-3)
    assume(np.linalg.norm(np.cross(a1 / np.linalg.norm(a1), a2)) > 1e-3)
    R = rot6d_to_matrix(a1, a2).data
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-9)
    assert abs(np.linalg.det(R) - 1) < 1e-9


@given(vec3, vec3, st.floats(0.01, 100))
def test_rot6d_positive_scale_invariance(a1, a2, k):
    assume(np.linalg.norm(a1) > 1e-2)
    assume(np.linalg.norm(np.cross(a1 / np.linalg.norm(a1), a2)) > 1e-2)
    assert np.allclose(rot6d_to_matrix(k * a1, k * a2).data, rot6d_to_matrix(a1, a2).data, atol=1e-12)


def test_rot6d_gradient():
    w = np.random.default_rng(1).normal(size=(3, 3))
    rep = grad_check(lambda x: ad.reduce("sum", rot6d_to_matrix(x[0:3], x[3:6]) * w),
                     Tensor(np.random.default_rng(2).normal(size=6)))
    assert rep.passed


# SE3 --------------------------------------------------------------------------

def test_compose_with_inverse_is_identity():
    T = random_pose(np.random.default_rng(3))
    I = se3_compose(T, se3_inverse(T))
    assert np.allclose(I.R, np.eye(3), atol=1e-12) and np.allclose(I.t, 0, atol=1e-12)


def test_pure_translations_add():
    a = SE3Pose(np.eye(3), [1.0, 0, 0])
    b = SE3Pose(np.eye(3), [0, 2.0, 0])
    assert np.array_equal((a @ b).t, [1.0, 2.0, 0])


def test_compose_matches_homogeneous_matrices():
    rng = np.random.default_rng(5)
    a, b = random_pose(rng), random_pose(rng)
    assert np.allclose((a @ b).matrix(), a.matrix() @ b.matrix(), atol=1e-12)


def test_relative_pose_matches_trajectory_steps():
    traj = make_trajectory(12, seed=9)
    for k, step in enumerate(traj.steps):
        rel = relative_pose(traj.poses[k], traj.poses[k + 1])
        assert np.allclose(rel.R, step.R, atol=1e-12) and np.allclose(rel.t, step.t, atol=1e-12)
        # and chaining the step reproduces the next absolute pose
        nxt = traj.poses[k] @ step
        assert np.allclose(nxt.t, traj.poses[k + 1].t, atol=1e-12)


def test_quaternion_round_trip():
    T = random_pose(np.random.default_rng(6))
    q = T.quaternion()
    assert q[0] >= 0 and np.isclose(np.linalg.norm(q), 1.0)
    assert np.allclose(SE3Pose.from_quaternion(T.t, q).R, T.R, atol=1e-12)


def test_geodesic_angle():
    R = Rotation.from_rotvec([0, 0, np.radians(30)]).as_matrix()
    assert np.isclose(rotation_angle_deg(np.eye(3), R), 30.0)
    assert rotation_angle_deg(R, R) == pytest.approx(0.0, abs=1e-6)


# Plücker ----------------------------------------------------------------------

def test_plucker_through_origin_and_offset():
    r = plucker_encode([0.0, 0, 0], [0, 0, 1.0])
    assert np.array_equal(r.d.data, [0, 0, 1.0]) and np.array_equal(r.m.data, [0, 0, 0])
    r = plucker_encode([1.0, 0, 0], [0, 0, 1.0])
    assert np.allclose(r.m.data, [0, -1.0, 0])


def test_plucker_zero_direction():
    with pytest.raises(DegeneracyError):
        plucker_encode([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])


@given(vec3, vec3, st.floats(-10, 10))
def test_plucker_sliding_invariance(o, d, s):
    assume(np.linalg.norm(d) > 1e-2)
    a = plucker_encode(o, d)
    b = plucker_encode(o + s * d, d)
    assert np.allclose(a.d.data, b.d.data, atol=1e-9)
    assert np.allclose(a.m.data, b.m.data, atol=1e-9)


@given(vec3, vec3, st.integers(0, 2 ** 31 - 1))
def test_transform_preserves_plucker_invariants(o, d, seed):
    assume(np.linalg.norm(d) > 1e-2)
    T = random_pose(np.random.default_rng(seed))
    r = ray_transform(plucker_encode(o, d), T)
    assert abs(np.linalg.norm(r.d.data) - 1) < 1e-9
    assert abs(np.dot(r.d.data, r.m.data)) < 1e-9
    # same line as transforming origin and direction directly
    ref = plucker_encode(T.R @ o + T.t, T.R @ d)
    assert np.allclose(r.m.data, ref.m.data, atol=1e-9)


def test_identity_transform_and_pure_translation():
    o, d = np.array([0.3, -0.2, 1.0]), np.array([0.1, 0.2, 1.0])
    ray = plucker_encode(o, d)
    same = ray_transform(ray, SE3Pose.identity())
    assert np.array_equal(same.d.data, ray.d.data) and np.allclose(same.m.data, ray.m.data, atol=1e-15)
    t = np.array([1.0, 2.0, -0.5])
    moved = ray_transform(ray, SE3Pose(np.eye(3), t))
    assert np.allclose(moved.d.data, ray.d.data)
    assert np.allclose(moved.m.data, np.cross(o + t, ray.d.data), atol=1e-12)


def test_transform_then_inverse_is_original():
    rng = np.random.default_rng(8)
    ray = plucker_encode(rng.normal(size=3), rng.normal(size=(5, 3)))
    T = random_pose(rng)
    back = ray_transform(ray_transform(ray, T), se3_inverse(T))
    assert np.allclose(back.d.data, ray.d.data, atol=1e-12)
    assert np.allclose(back.m.data, ray.m.data, atol=1e-12)


def test_closest_point_lies_on_line():
    o, d = np.array([1.0, 2.0, 3.0]), np.array([0.0, 1.0, 1.0])
    ray = plucker_encode(o, d)
    p = ray.closest_point()
    dn = d / np.linalg.norm(d)
    assert np.allclose(np.cross(p - o, dn), 0, atol=1e-12)
    assert abs(np.dot(p, dn)) < 1e-12
    assert isinstance(ray, PluckerRay) and len(ray) == 1


def test_rot6d_accepts_one_six_vector(rng):
    a = rng.normal(size=6)
    assert np.array_equal(rot6d_to_matrix(Tensor(a)).data, rot6d_to_matrix(a[:3], a[3:]).data)
    with pytest.raises(DimensionError):
        rot6d_to_matrix(np.ones(5))
