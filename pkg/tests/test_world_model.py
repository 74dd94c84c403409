from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from anchorplan.se3 import Pose, axis_angle_matrix, forward_kinematics, reference_chain
from anchorplan.world_model import (
    SENTINEL,
    GeometricFrame,
    GeometricOracle,
    PixelFrame,
    PixelOracle,
    PixelStyle,
    Scene,
    Target,
    blend_reference,
    make_oracle,
    write_pgm,
)

SCENE = Scene(
    (Target("A", (0.0, 0.0, 1.0), 0.1), Target("B", (0.3, -0.2, 1.5), 0.05)),
    focal=48.0,
)
unit = st.floats(0.0, 1.0, allow_nan=False)
latent = arrays(np.float64, 8, elements=st.floats(-1e3, 1e3, allow_nan=False))


def test_scene_rejects_bad_targets():
    with pytest.raises(ValueError):
        Target("A", (0, 0, 0), 0.0)
    with pytest.raises(ValueError):
        Scene((Target("A", (0, 0, 0)), Target("A", (1, 0, 0))))


def test_project_principal_point_on_axis():
    u, v, z = SCENE.project(Pose.identity(), (0.0, 0.0, 2.0))
    assert (u, v, z) == (32.0, 32.0, 2.0)
    # x right, y down
    u, v, _ = SCENE.project(Pose.identity(), (0.5, 0.25, 1.0))
    assert u == pytest.approx(32 + 24) and v == pytest.approx(32 + 12)


# -- render -------------------------------------------------------------------

def test_geometric_render_passes_translation_through():
    frame = GeometricOracle(SCENE).render(Pose.from_translation((0.4, 0.2, 0.3)))
    assert frame.ee_position == (0.4, 0.2, 0.3)


def test_geometric_render_respects_hidden_and_view():
    oracle = GeometricOracle(SCENE)
    frame = oracle.render(Pose.identity(), hidden={"B"})
    assert [tid for tid, _ in frame.visible_targets] == ["A"]
    away = Pose(axis_angle_matrix((0, 1, 0), math.pi), np.zeros(3))
    assert oracle.render(away).visible_targets == ()
    culled_off = GeometricOracle(Scene(SCENE.targets, fov_culling=False))
    assert len(culled_off.render(away).visible_targets) == 2


def test_pixel_render_looking_away_is_background():
    oracle = PixelOracle(SCENE, PixelStyle(ee_radius_px=0.0))
    away = Pose(axis_angle_matrix((0, 1, 0), math.pi), np.zeros(3))
    frame = oracle.render(away)
    assert np.all(frame.intensities == oracle.style.background)
    assert frame.discs == ()


def test_pixel_disc_radius_matches_pinhole():
    scene = Scene((Target("T", (0.0, 0.0, 1.0), 0.1),), focal=48.0)
    oracle = PixelOracle(scene, PixelStyle(ee_radius_px=0.0))
    frame = oracle.render(Pose.identity())
    expected = 48.0 * 0.1 / 1.0
    u, v, r = frame.disc_of("T")
    assert (u, v) == scene.principal and r == pytest.approx(expected)
    lit = frame.intensities == oracle.style.target
    rows = np.flatnonzero(lit.any(axis=1))
    cols = np.flatnonzero(lit.any(axis=0))
    assert abs((rows[-1] - rows[0] + 1) / 2 - expected) <= 1.0
    assert abs((cols[-1] - cols[0] + 1) / 2 - expected) <= 1.0
    center = ((rows[0] + rows[-1] + 1) / 2, (cols[0] + cols[-1] + 1) / 2)
    assert center == pytest.approx((32.0, 32.0), abs=1.0)
    assert lit.sum() == pytest.approx(math.pi * expected**2, rel=0.1)


def test_pixel_frame_validates_range_and_shape():
    with pytest.raises(ValueError):
        PixelFrame(2, 2, np.full((2, 2), 1.5))
    with pytest.raises(ValueError):
        PixelFrame(2, 3, np.zeros((2, 2)))


def test_render_is_path_independent_for_both_oracles():
    chain = reference_chain()
    rng = np.random.default_rng(0)
    probe = forward_kinematics((0.0, -0.4, 1.2), chain)
    for oracle in (GeometricOracle(SCENE), PixelOracle(SCENE)):
        first = oracle.render(probe)
        for _ in range(100):
            oracle.render(forward_kinematics(rng.uniform(-3, 3, 3), chain))
        assert oracle.render(probe) == first


def test_write_pgm(tmp_path):
    frame = PixelOracle(SCENE).render(Pose.identity())
    path = tmp_path / "f.pgm"
    write_pgm(frame, path)
    data = path.read_bytes()
    assert data.startswith(b"P5\n64 64\n255\n")
    assert len(data) == len(b"P5\n64 64\n255\n") + 64 * 64


# -- encode -------------------------------------------------------------------

def test_geometric_encoding_rule():
    oracle = GeometricOracle(SCENE)
    z = oracle.encode(GeometricFrame((0.0, 0.0, 0.0), ()))
    assert np.array_equal(z, np.array([0.0, 0.0, 0.0] + [SENTINEL] * 6))
    z = oracle.encode(oracle.render(Pose.identity(), hidden={"A"}))
    assert np.array_equal(z[3:6], [SENTINEL] * 3)
    assert np.array_equal(z[6:], [0.3, -0.2, 1.5])


def test_encoding_deterministic_and_fixed_size():
    rng = np.random.default_rng(1)
    chain = reference_chain()
    for oracle in (GeometricOracle(SCENE), PixelOracle(SCENE)):
        sizes = set()
        for _ in range(10):
            frame = oracle.render(forward_kinematics(rng.uniform(-3, 3, 3), chain))
            assert np.array_equal(oracle.encode(frame), oracle.encode(frame))
            sizes.add(oracle.encode(frame).shape)
        assert len(sizes) == 1
    assert PixelOracle(SCENE).encode(PixelOracle(SCENE).render(Pose.identity())).shape == (64,)
    assert PixelOracle(SCENE).latent_dim == 64


def test_encode_rejects_wrong_variant():
    with pytest.raises(TypeError):
        GeometricOracle(SCENE).encode(PixelOracle(SCENE).render(Pose.identity()))
    with pytest.raises(TypeError):
        PixelOracle(SCENE).encode(GeometricOracle(SCENE).render(Pose.identity()))


def test_make_oracle():
    assert isinstance(make_oracle("geometric", SCENE), GeometricOracle)
    assert isinstance(make_oracle("pixel", SCENE), PixelOracle)
    with pytest.raises(ValueError):
        make_oracle("video", SCENE)


# -- blend --------------------------------------------------------------------

def test_blend_examples():
    v = np.array([0.2, -1.0, 3.5])
    assert np.array_equal(blend_reference(v, v), v)
    assert np.allclose(blend_reference(np.zeros(3), v), 0.7 * v, rtol=0, atol=1e-15)


def test_blend_closed_form_after_five_iterations():
    rng = np.random.default_rng(2)
    z0 = rng.uniform(-1, 1, 16)
    e = rng.uniform(-1, 1, 16)
    z = z0
    for _ in range(5):
        z = blend_reference(z, e)
    assert np.max(np.abs(z - (e + 0.3**5 * (z0 - e)))) <= 1e-12


def test_blend_rejects_mismatch_and_bad_alpha():
    with pytest.raises(ValueError):
        blend_reference(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        blend_reference(np.zeros(3), np.zeros(3), alpha=1.5)


@given(latent, latent, unit)
def test_blend_is_convex(z, e, alpha):
    out = blend_reference(z, e, alpha)
    assert np.all(out >= np.minimum(z, e)) and np.all(out <= np.maximum(z, e))


@given(latent, latent)
def test_blend_degenerate_weights(z, e):
    assert np.array_equal(blend_reference(z, e, 1.0), e)
    assert np.array_equal(blend_reference(z, e, 0.0), z)


def test_set_alpha_and_reference_update():
    oracle = GeometricOracle(SCENE)
    assert oracle.alpha == 0.7
    with pytest.raises(ValueError):
        oracle.set_alpha(-0.1)
    f1 = oracle.render(Pose.from_translation((0.0, 0.0, 0.0)))
    f2 = oracle.render(Pose.from_translation((1.0, 0.0, 0.0)))
    assert np.array_equal(oracle.update_reference(f1), oracle.encode(f1))
    oracle.set_alpha(1.0)
    assert np.array_equal(oracle.update_reference(f2), oracle.encode(f2))
    oracle.set_alpha(0.0)
    assert np.array_equal(oracle.update_reference(f1), oracle.encode(f2))
