from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from anchorplan.bench.verify import random_poses_near
from anchorplan.se3 import Pose, translation_distance
from anchorplan.scoring import (
    SCORER_NAMES,
    DiscOverlapScorer,
    ExactScorer,
    FlatScorer,
    Goal,
    HybridScorer,
    UnsupportedFrame,
    disc_intersection_area,
    exact_distance_score,
    hybrid_score,
    make_scorer,
    monotonicity,
    needs_pixels,
)
from anchorplan.world_model import GeometricFrame, PixelFrame

coord = st.floats(-3.0, 3.0, allow_nan=False)
vec3 = st.tuples(coord, coord, coord)
unit = st.floats(0.0, 1.0, allow_nan=False)
GOAL = Goal((0.0, 0.0, 0.0), "A")


def at(x, y=0.0, z=0.0):
    return Pose.from_translation((x, y, z))


def pixel_frame(ee, disc):
    return PixelFrame(64, 64, np.zeros((64, 64)), (("A",) + disc,), ee)


def test_goal_validation():
    with pytest.raises(ValueError):
        Goal((0.0, float("inf"), 0.0))
    with pytest.raises(ValueError):
        Goal((0.0, 0.0))


@pytest.mark.parametrize("d, expected", [(0.0, 1.0), (0.3, 0.7), (1.5, 0.0)])
def test_exact_examples(d, expected):
    assert exact_distance_score(at(d), GOAL) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("sem, d, expected", [(1.0, 0.0, 1.0), (0.8, 0.5, 0.4), (0.9, 1.2, 0.0)])
def test_hybrid_examples(sem, d, expected):
    assert hybrid_score(sem, at(d), GOAL) == pytest.approx(expected, abs=1e-15)


def test_hybrid_rejects_out_of_range_semantic():
    with pytest.raises(ValueError):
        hybrid_score(1.2, at(0.0), GOAL)


@given(vec3, vec3, vec3)
def test_exact_is_one_lipschitz(a, b, g):
    goal = Goal(g)
    pa, pb = Pose.from_translation(a), Pose.from_translation(b)
    diff = abs(exact_distance_score(pa, goal) - exact_distance_score(pb, goal))
    assert diff <= translation_distance(pa, pb) + 1e-12


@given(unit, vec3)
def test_hybrid_bounded_by_both_factors(sem, a):
    pose = Pose.from_translation(a)
    h = hybrid_score(sem, pose, GOAL)
    assert 0.0 <= h <= min(sem, exact_distance_score(pose, GOAL))


@given(vec3)
def test_hybrid_with_unit_semantic_is_exact(a):
    pose = Pose.from_translation(a)
    assert hybrid_score(1.0, pose, GOAL) == exact_distance_score(pose, GOAL)


@given(vec3)
def test_all_scorers_in_unit_interval(a):
    pose = Pose.from_translation(a)
    geo = GeometricFrame(tuple(a), ())
    for name in ("exact", "flat", "hybrid+flat"):
        assert 0.0 <= make_scorer(name)(geo, GOAL, pose) <= 1.0


# -- semantic scorers ---------------------------------------------------------

def test_flat_scorer_always_zero():
    assert FlatScorer()(GeometricFrame((0, 0, 0), ()), GOAL, at(0.0)) == 0.0
    assert FlatScorer().semantic(pixel_frame((32, 32, 6), (32, 32, 6)), GOAL) == 0.0


def test_disc_overlap_examples():
    sc = DiscOverlapScorer()
    assert sc.semantic(pixel_frame((32.0, 32.0, 6.0), (32.0, 32.0, 4.0)), GOAL) == 1.0
    assert sc.semantic(pixel_frame((20.0, 32.0, 5.0), (30.0, 32.0, 5.0)), GOAL) == 0.0
    assert sc.semantic(PixelFrame(64, 64, np.zeros((64, 64)), (), (32.0, 32.0, 6.0)), GOAL) == 0.0
    with pytest.raises(UnsupportedFrame):
        sc.semantic(GeometricFrame((0, 0, 0), ()), GOAL)


def test_disc_overlap_ignores_depth():
    sc = HybridScorer(DiscOverlapScorer())
    frame = pixel_frame((32.0, 32.0, 6.0), (32.0, 32.0, 4.0))
    # identical image, different depth: semantic term cannot tell, hybrid can
    assert sc.semantic_scorer.semantic(frame, GOAL) == 1.0
    assert sc(frame, GOAL, at(0.15)) > sc(frame, GOAL, at(0.4))


def _lens_area_by_quadrature(r1, r2, d):
    def height(x):
        h1 = math.sqrt(max(0.0, r1 * r1 - x * x))
        h2 = math.sqrt(max(0.0, r2 * r2 - (x - d) ** 2))
        return 2.0 * min(h1, h2)

    lo, hi = max(-r1, d - r2), min(r1, d + r2)
    if lo >= hi:
        return 0.0
    return quad(height, lo, hi, points=[(d * d + r1 * r1 - r2 * r2) / (2 * d)] if d else None, limit=200)[0]


@pytest.mark.parametrize("r1, r2, d", [(1.0, 1.0, 1.0), (2.0, 1.0, 1.5), (1.0, 0.5, 1.2), (6.0, 4.0, 9.5), (3.0, 3.0, 0.1)])
def test_disc_intersection_against_quadrature(r1, r2, d):
    assert disc_intersection_area(r1, r2, d) == pytest.approx(_lens_area_by_quadrature(r1, r2, d), rel=1e-7, abs=1e-12)


def test_disc_intersection_limits():
    assert disc_intersection_area(1.0, 1.0, 2.0) == 0.0
    assert disc_intersection_area(2.0, 1.0, 0.5) == pytest.approx(math.pi)


def test_scorer_registry():
    assert {make_scorer(n).name for n in SCORER_NAMES} == {"exact", "flat", "hybrid+overlap", "hybrid+flat"}
    assert needs_pixels("hybrid+overlap") and not needs_pixels("exact")
    with pytest.raises(ValueError):
        make_scorer("florence")


# -- monotonicity -------------------------------------------------------------

def test_monotonicity_values():
    goal = Goal((0.2, 0.1, -0.3), "A")
    poses = random_poses_near(goal, 100, np.random.default_rng(3), max_dist=0.999)
    exact = monotonicity(lambda p: exact_distance_score(p, goal), poses, goal)
    assert exact.rho == 1.0 and not exact.degenerate
    inverted = monotonicity(lambda p: 1.0 - exact_distance_score(p, goal), poses, goal)
    assert inverted.rho == -1.0
    flat = monotonicity(lambda p: 0.0, poses, goal)
    assert flat == (0.0, True)


def test_monotonicity_preconditions():
    poses = [at(0.1 * i) for i in range(9)]
    with pytest.raises(ValueError):
        monotonicity(lambda p: 0.5, poses, GOAL)
    same = [at(0.5)] * 12
    with pytest.raises(ValueError):
        monotonicity(lambda p: 0.5, same, GOAL)


def test_exact_scorer_adapter():
    assert ExactScorer()(None, GOAL, at(0.25)) == 0.75
