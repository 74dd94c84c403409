from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from anchorplan.se3 import (
    KinematicChain,
    KinematicsError,
    Link,
    Pose,
    angular_distance,
    axis_angle_matrix,
    compose,
    forward_kinematics,
    position_jacobian,
    quat_from_matrix,
    quaternion_angle,
    quaternion_fk,
    reference_chain,
    translation_distance,
)

from .conftest import random_rotation

coord = st.floats(-5.0, 5.0, allow_nan=False)
vec3 = st.tuples(coord, coord, coord)
angle = st.floats(-math.pi, math.pi, allow_nan=False)
joints = st.tuples(angle, angle, angle)


def rot_pose(rng, scale=1.0):
    return Pose(random_rotation(rng), rng.uniform(-scale, scale, 3))


# -- Pose ---------------------------------------------------------------------

def test_pose_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        Pose(np.diag([1.0, 1.0, 1.1]), np.zeros(3))
    with pytest.raises(ValueError):
        Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_pose_is_immutable():
    p = Pose.from_translation((1, 2, 3))
    with pytest.raises(ValueError):
        p.translation[0] = 5.0


def test_from_matrix_roundtrip():
    rng = np.random.default_rng(0)
    p = rot_pose(rng)
    q = Pose.from_matrix(p.matrix())
    assert np.allclose(q.rotation, p.rotation, atol=1e-12)
    assert np.array_equal(q.translation, p.translation)


def test_inverse_composes_to_identity():
    rng = np.random.default_rng(1)
    for _ in range(20):
        p = rot_pose(rng)
        e = compose(p, p.inverse())
        assert np.allclose(e.matrix(), np.eye(4), atol=1e-12)


# -- compose ------------------------------------------------------------------

def test_compose_identity_cases():
    p = rot_pose(np.random.default_rng(2))
    assert compose(p, Pose.identity()) == p
    assert compose(Pose.identity(), p) == p


def test_compose_translations_add():
    out = compose(Pose.from_translation((1, 0, 0)), Pose.from_translation((0, 1, 0)))
    assert np.array_equal(out.translation, [1.0, 1.0, 0.0])
    assert np.array_equal(out.rotation, np.eye(3))


def test_compose_matches_matrix_product():
    rng = np.random.default_rng(3)
    a, b = rot_pose(rng), rot_pose(rng)
    assert np.allclose(compose(a, b).matrix(), a.matrix() @ b.matrix(), atol=1e-12)


def test_compose_associative():
    rng = np.random.default_rng(4)
    for _ in range(50):
        a, b, c = rot_pose(rng), rot_pose(rng), rot_pose(rng)
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        assert np.allclose(left.matrix(), right.matrix(), atol=1e-12)


# -- distances ----------------------------------------------------------------

@pytest.mark.parametrize(
    "a, b, expected",
    [
        ((0, 0, 0), (0, 0, 0), 0.0),
        ((0, 0, 0), (0.3, 0, 0), 0.3),
        ((1, 1, 0), (0, 0, 0), math.sqrt(2)),
    ],
)
def test_translation_distance_examples(a, b, expected):
    assert translation_distance(Pose.from_translation(a), Pose.from_translation(b)) == pytest.approx(expected, abs=1e-15)


@given(vec3, vec3)
def test_translation_distance_symmetric(a, b):
    pa, pb = Pose.from_translation(a), Pose.from_translation(b)
    assert translation_distance(pa, pb) == translation_distance(pb, pa)
    assert (translation_distance(pa, pb) == 0.0) == (tuple(a) == tuple(b))


def test_translation_triangle_inequality_1000_triples():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        a, b, c = (Pose.from_translation(rng.uniform(-3, 3, 3)) for _ in range(3))
        assert translation_distance(a, c) <= translation_distance(a, b) + translation_distance(b, c) + 1e-12


def test_angular_distance_examples():
    ident = Pose.identity()
    assert angular_distance(ident, ident) == 0.0
    half_turn = Pose(axis_angle_matrix((0, 0, 1), math.pi), np.zeros(3))
    assert angular_distance(ident, half_turn) == pytest.approx(math.pi, abs=1e-12)


def test_angular_distance_matches_quaternion_dot_product():
    rng = np.random.default_rng(6)
    for _ in range(200):
        ra, rb = Rotation.random(random_state=rng), Rotation.random(random_state=rng)
        # oracle: scipy quaternions, angle = 2 acos |<qa, qb>|
        dot = min(1.0, abs(float(np.dot(ra.as_quat(), rb.as_quat()))))
        expected = 2.0 * math.acos(dot)
        got = angular_distance(Pose(ra.as_matrix(), np.zeros(3)), Pose(rb.as_matrix(), np.zeros(3)))
        assert got == pytest.approx(expected, abs=1e-9)


@given(st.floats(0.0, math.pi), st.tuples(coord, coord, coord).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_angular_distance_recovers_rotation_angle(theta, axis):
    axis = np.asarray(axis) / np.linalg.norm(axis)
    p = Pose(axis_angle_matrix(axis, theta), np.zeros(3))
    d = angular_distance(Pose.identity(), p)
    assert 0.0 <= d <= math.pi
    assert d == pytest.approx(theta, abs=1e-9)


# -- forward kinematics -------------------------------------------------------

def test_fk_reference_examples():
    chain = reference_chain()
    assert np.allclose(forward_kinematics((0, 0, 0), chain).translation, [1.0, 0.0, 0.0], atol=1e-15)
    assert np.allclose(forward_kinematics((math.pi / 2, 0, 0), chain).translation, [0.0, 1.0, 0.0], atol=1e-15)


@given(joints)
def test_fk_zero_length_links_stay_at_origin(q):
    chain = reference_chain(link_length=0.0)
    assert np.array_equal(forward_kinematics(q, chain).translation, np.zeros(3))


def test_fk_rejects_bad_inputs():
    chain = reference_chain()
    with pytest.raises(KinematicsError):
        forward_kinematics((0.0, 0.0), chain)
    with pytest.raises(KinematicsError):
        forward_kinematics((0.0, 0.0, 4.0), chain)
    with pytest.raises(KinematicsError):
        forward_kinematics((0.0, float("nan"), 0.0), chain)


def test_chain_validation():
    with pytest.raises(KinematicsError):
        KinematicChain((Link((0.0, 0.0, 2.0), (0.0, 0.0, 0.0)),))
    with pytest.raises(KinematicsError):
        KinematicChain((Link((0.0, 0.0, 1.0), (0.0, 0.0, 0.0), (1.0, -1.0)),))
    with pytest.raises(KinematicsError):
        KinematicChain(())


def test_fk_applies_cam_offset_last():
    cam = Pose(axis_angle_matrix((1, 0, 0), 0.3), np.array([0.0, 0.0, 0.1]))
    chain = KinematicChain(reference_chain().links, cam_offset=cam)
    q = (0.2, -0.4, 0.9)
    wrist = forward_kinematics(q, reference_chain())
    assert np.allclose(forward_kinematics(q, chain).matrix(), compose(wrist, cam).matrix(), atol=1e-14)


@given(joints)
def test_fk_matches_quaternion_oracle(q):
    chain = reference_chain()
    pose = forward_kinematics(q, chain)
    quat, trans = quaternion_fk(q, chain)
    assert quaternion_angle(quat_from_matrix(pose.rotation), quat) <= 1e-9
    assert np.allclose(pose.translation, trans, atol=1e-12)


def test_fk_path_independent():
    chain = reference_chain()
    rng = np.random.default_rng(7)
    probe = (0.1, -0.7, 1.3)
    first = forward_kinematics(probe, chain)
    for _ in range(100):
        forward_kinematics(rng.uniform(-math.pi, math.pi, 3), chain)
    assert forward_kinematics(probe, chain) == first


def test_position_jacobian_matches_finite_differences():
    chain = reference_chain()
    rng = np.random.default_rng(8)
    h = 1e-6
    for _ in range(20):
        q = rng.uniform(-2.5, 2.5, 3)
        jac = position_jacobian(q, chain)
        for i in range(3):
            dq = np.zeros(3)
            dq[i] = h
            fd = (forward_kinematics(q + dq, chain).translation - forward_kinematics(q - dq, chain).translation) / (2 * h)
            assert np.allclose(jac[:, i], fd, atol=1e-7)
