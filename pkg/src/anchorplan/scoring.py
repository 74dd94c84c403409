"""Node scorers.

Every scorer is called as ``scorer(frame, goal, c2w)`` and returns a float in
[0, 1]. The geometric factor is ``max(0, 1 - d)`` with ``d`` the distance in
meters between the camera translation and the goal position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.stats import rankdata

from .se3 import Pose
from .world_model import Frame, PixelFrame


@dataclass(frozen=True)
class Goal:
    position: tuple[float, float, float]
    target_id: str = ""

    def __post_init__(self) -> None:
        pos = tuple(float(v) for v in self.position)
        if len(pos) != 3 or not all(math.isfinite(v) for v in pos):
            raise ValueError("goal position must be three finite coordinates")
        object.__setattr__(self, "position", pos)

    def distance(self, c2w: Pose) -> float:
        return math.hypot(*(c2w.translation - np.asarray(self.position)).tolist())


def _check_unit(value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"score {value} outside [0, 1]")
    return value


def exact_distance_score(c2w: Pose, goal: Goal) -> float:
    return max(0.0, 1.0 - goal.distance(c2w))


def hybrid_score(semantic: float, c2w: Pose, goal: Goal) -> float:
    """Semantic score discounted by kinematic proximity; never exceeds either factor."""
    return _check_unit(semantic) * exact_distance_score(c2w, goal)


def disc_intersection_area(r1: float, r2: float, d: float) -> float:
    """Area of the lens where two discs with radii r1, r2 and center distance d overlap."""
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        return math.pi * min(r1, r2) ** 2
    a1 = r1 * r1 * math.acos((d * d + r1 * r1 - r2 * r2) / (2 * d * r1))
    a2 = r2 * r2 * math.acos((d * d + r2 * r2 - r1 * r1) / (2 * d * r2))
    k = 0.5 * math.sqrt((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2))
    return a1 + a2 - k


class UnsupportedFrame(TypeError):
    pass


class FlatScorer:
    """Stand-in for a perception model that assigns the same score to every node."""

    name = "flat"

    def semantic(self, frame: Frame, goal: Goal) -> float:
        return 0.0

    def __call__(self, frame: Frame, goal: Goal, c2w: Pose) -> float:
        return 0.0


class DiscOverlapScorer:
    """Fraction of the goal's image disc covered by the gripper disc.

    Works in the image plane only, so a gripper hovering in front of the
    target at the wrong depth can still score 1.0.
    """

    name = "overlap"

    def semantic(self, frame: Frame, goal: Goal) -> float:
        if not isinstance(frame, PixelFrame):
            raise UnsupportedFrame("disc-overlap scoring needs a pixel frame")
        target = frame.disc_of(goal.target_id)
        if target is None or frame.ee_disc is None:
            return 0.0
        tu, tv, tr = target
        eu, ev, er = frame.ee_disc
        area = disc_intersection_area(er, tr, math.hypot(tu - eu, tv - ev))
        return min(1.0, max(0.0, area / (math.pi * tr * tr)))

    def __call__(self, frame: Frame, goal: Goal, c2w: Pose) -> float:
        return self.semantic(frame, goal)


class ExactScorer:
    name = "exact"

    def __call__(self, frame: Frame, goal: Goal, c2w: Pose) -> float:
        return exact_distance_score(c2w, goal)


class HybridScorer:
    def __init__(self, semantic):
        self.semantic_scorer = semantic
        self.name = f"hybrid+{semantic.name}"

    def __call__(self, frame: Frame, goal: Goal, c2w: Pose) -> float:
        return hybrid_score(self.semantic_scorer.semantic(frame, goal), c2w, goal)


SCORER_NAMES = ("exact", "hybrid+overlap", "hybrid+flat", "flat")


def make_scorer(name: str):
    if name == "exact":
        return ExactScorer()
    if name == "flat":
        return FlatScorer()
    if name == "hybrid+overlap":
        return HybridScorer(DiscOverlapScorer())
    if name == "hybrid+flat":
        return HybridScorer(FlatScorer())
    raise ValueError(f"unknown scorer {name!r}; choose from {', '.join(SCORER_NAMES)}")


def needs_pixels(name: str) -> bool:
    return name == "hybrid+overlap"


class Monotonicity(NamedTuple):
    rho: float
    degenerate: bool


def monotonicity(score_fn: Callable[[Pose], float], poses: Sequence[Pose], goal: Goal) -> Monotonicity:
    """Spearman correlation between scores and negated goal distance.

    Constant scores have no ranking: the result is ``(0.0, degenerate=True)``.
    """
    if len(poses) < 10:
        raise ValueError("monotonicity needs at least 10 pose samples")
    dist = np.array([goal.distance(p) for p in poses])
    if np.all(dist == dist[0]):
        raise ValueError("all samples are equidistant from the goal")
    scores = np.array([score_fn(p) for p in poses], dtype=float)
    if np.all(scores == scores[0]):
        return Monotonicity(0.0, True)
    rs = rankdata(scores)
    rd = rankdata(-dist)
    rs -= rs.mean()
    rd -= rd.mean()
    rho = float(np.dot(rs, rd) / math.sqrt(np.dot(rs, rs) * np.dot(rd, rd)))
    return Monotonicity(max(-1.0, min(1.0, rho)), False)
