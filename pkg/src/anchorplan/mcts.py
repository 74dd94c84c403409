"""Max-value UCT over joint-space actions.

Differences from textbook UCT, each of which matters for continuous reaching
with small score gaps:

* the executed action is the child with the highest ``q_max``, and actions
  whose norm is below ``zero_eps`` are never returned;
* ``advance_root`` re-roots onto the executed child and recomputes every
  depth, so a reused subtree keeps its full lookahead budget;
* backpropagation keeps the running maximum, not the mean;
* the exploration constant defaults to 0.02, sized for score gaps of a few
  hundredths rather than for 0/1 rewards.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

from .scoring import Goal
from .se3 import KinematicChain, Pose, forward_kinematics, position_jacobian
from .world_model import WorldModel

DEFAULT_C = 0.02
DEFAULT_ZERO_EPS = 1e-6


class PlanningError(RuntimeError):
    pass


class DegenerateSampling(PlanningError):
    """No usable non-zero action: every candidate was filtered or rejected."""


@dataclass(eq=False)
class TreeNode:
    joints: np.ndarray
    pose: Pose
    action: Optional[np.ndarray] = None
    q_max: float = 0.0
    visits: int = 0
    depth: int = 0
    children: list["TreeNode"] = field(default_factory=list)
    # Last evaluated score against the current goal; None until evaluated.
    score: Optional[float] = None
    # Task step at which the agent's anchor sat on this node, if any.
    step_tag: Optional[int] = None

    @classmethod
    def root(cls, joints: Sequence[float], chain: KinematicChain) -> "TreeNode":
        q = chain.check(joints).copy()
        return cls(joints=q, pose=forward_kinematics(q, chain))

    def iter_nodes(self) -> Iterator["TreeNode"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass
class PlanBudget:
    max_nodes: Optional[int] = 20
    max_duration_ms: Optional[float] = None

    def __post_init__(self) -> None:
        if self.max_nodes is None and self.max_duration_ms is None:
            raise ValueError("budget needs a node limit, a time limit, or both")
        if self.max_nodes is not None and self.max_nodes < 1:
            raise ValueError("max_nodes must be positive")


class ActionSampler:
    """Candidate joint increments for one node.

    Candidate order is fixed: the zero action first (when ``include_stay``),
    then one step of length ``a_max`` along the least-squares joint direction
    toward the goal (when a goal is given and ``goal_directed``), then draws
    uniform in the ``a_max`` ball. Candidates that would leave the joint
    limits are redrawn up to ``max_retries`` times.
    """

    def __init__(
        self,
        chain: KinematicChain,
        a_max: float = 0.33,
        seed: int | np.random.Generator = 0,
        goal_directed: bool = True,
        include_stay: bool = True,
        max_retries: int = 100,
    ):
        self.chain = chain
        self.a_max = float(a_max)
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.goal_directed = goal_directed
        self.include_stay = include_stay
        self.max_retries = max_retries

    def uniform(self) -> np.ndarray:
        n = self.chain.dof
        v = self.rng.standard_normal(n)
        v /= np.linalg.norm(v)
        return v * self.a_max * self.rng.random() ** (1.0 / n)

    def toward(self, joints: np.ndarray, goal: Goal) -> Optional[np.ndarray]:
        pose = forward_kinematics(joints, self.chain)
        err = np.asarray(goal.position) - pose.translation
        jac = position_jacobian(joints, self.chain)
        dq = np.linalg.lstsq(jac, err, rcond=None)[0]
        norm = np.linalg.norm(dq)
        if not np.isfinite(norm) or norm < 1e-12:
            return None
        return dq * (self.a_max / norm)

    def __call__(self, joints: np.ndarray, count: int, goal: Optional[Goal] = None) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        if self.include_stay and count >= 2:
            out.append(np.zeros(self.chain.dof))
        if goal is not None and self.goal_directed and len(out) < count:
            step = self.toward(joints, goal)
            if step is not None and self.chain.within_limits(joints + step):
                out.append(step)
        while len(out) < count:
            for _ in range(self.max_retries):
                step = self.uniform()
                if self.chain.within_limits(joints + step):
                    out.append(step)
                    break
            else:
                raise DegenerateSampling(
                    f"{self.max_retries} consecutive samples left the joint limits at {joints.tolist()}"
                )
        return out


def ucb1(child: TreeNode, parent_visits: int, c: float) -> float:
    """Selection priority; unvisited children come first."""
    if parent_visits <= 0:
        raise ValueError("parent_visits must be positive")
    if c < 0:
        raise ValueError("exploration constant must be non-negative")
    if child.visits == 0:
        return math.inf
    if c == 0:
        return child.q_max
    return child.q_max + c * math.sqrt(math.log(parent_visits) / child.visits)


def expand(
    node: TreeNode,
    sampler: Callable[..., list[np.ndarray]],
    chain: KinematicChain,
    branching: int,
    goal: Optional[Goal] = None,
) -> list[TreeNode]:
    if node.children:
        raise PlanningError("node is already expanded")
    if branching < 1:
        raise ValueError("branching must be positive")
    for delta in sampler(node.joints, branching, goal):
        q = node.joints + delta
        node.children.append(
            TreeNode(joints=q, pose=forward_kinematics(q, chain), action=delta, depth=node.depth + 1)
        )
    return node.children


def evaluate(node: TreeNode, oracle: WorldModel, scorer, goal: Goal, hidden: Iterable[str] = ()) -> float:
    frame = oracle.render(node.pose, hidden)
    value = float(scorer(frame, goal, node.pose))
    node.score = value
    return value


def backpropagate_max(path: Sequence[TreeNode], leaf_score: float) -> None:
    if not path:
        raise PlanningError("empty backpropagation path")
    for parent, child in zip(path, path[1:]):
        if not any(ch is child for ch in parent.children):
            raise PlanningError("backpropagation path is not contiguous")
    for node in path:
        node.visits += 1
        if leaf_score > node.q_max:
            node.q_max = leaf_score


def _eligible(root: TreeNode, zero_eps: float) -> list[tuple[int, TreeNode]]:
    return [(i, ch) for i, ch in enumerate(root.children) if np.linalg.norm(ch.action) > zero_eps]


def best_child(root: TreeNode, zero_eps: float = DEFAULT_ZERO_EPS) -> TreeNode:
    if not root.children:
        raise PlanningError("root has no children; the search never expanded it")
    candidates = _eligible(root, zero_eps)
    if not candidates:
        raise DegenerateSampling("every root child has a zero-magnitude action")
    best = candidates[0][1]
    for _, ch in candidates[1:]:
        if ch.q_max > best.q_max:
            best = ch
    return best


def best_action(root: TreeNode, zero_eps: float = DEFAULT_ZERO_EPS) -> np.ndarray:
    """Action of the highest-``q_max`` child, skipping zero actions; ties go to the lower index."""
    return best_child(root, zero_eps).action


def reset_depths(node: TreeNode, depth: int = 0) -> None:
    stack = [(node, depth)]
    while stack:
        n, d = stack.pop()
        n.depth = d
        stack.extend((ch, d + 1) for ch in n.children)


def reset_statistics(root: TreeNode) -> None:
    """Forget values and visit counts but keep every node and its stored pose.

    Called when the goal changes: old scores refer to the old goal, while the
    poses remain valid kinematic predictions.
    """
    for n in root.iter_nodes():
        n.q_max = 0.0
        n.visits = 0
        n.score = None


def advance_root(root: TreeNode, executed: np.ndarray) -> TreeNode:
    for child in root.children:
        if child.action is not None and np.array_equal(child.action, executed):
            reset_depths(child, 0)
            return child
    raise PlanningError("executed action does not match any child of the root")


def _exhausted(node: TreeNode, limit: int) -> bool:
    """True when the subtree has no unevaluated node and cannot grow under ``limit``."""
    if node.visits == 0:
        return False
    if not node.children:
        return node.depth >= limit
    return all(_exhausted(ch, limit) for ch in node.children)


@dataclass
class PlanStats:
    evaluations: int = 0
    root_q: list[float] = field(default_factory=list)


@dataclass
class Planner:
    chain: KinematicChain
    oracle: WorldModel
    scorer: Callable
    sampler: Callable[..., list[np.ndarray]]
    depth: int = 2
    branching: int = 4
    c: float = DEFAULT_C
    budget: PlanBudget = field(default_factory=PlanBudget)
    zero_eps: float = DEFAULT_ZERO_EPS
    last_stats: PlanStats = field(default_factory=PlanStats)

    def __post_init__(self) -> None:
        if self.depth < 1 or self.branching < 1:
            raise ValueError("depth and branching must be at least 1")

    def search(
        self, root: TreeNode, goal: Goal, hidden: Iterable[str] = (), horizon: Optional[int] = None
    ) -> PlanStats:
        """Grow the tree under ``root`` until the budget is spent or nothing is left to evaluate.

        Each iteration descends by UCB1 through subtrees that still hold
        unevaluated work and evaluates exactly one new node: the first
        unvisited child met on the way, or the first child of a freshly
        expanded leaf above the depth limit.
        """
        hidden = tuple(hidden)
        limit = self.depth if horizon is None else max(1, min(self.depth, horizon))
        stats = PlanStats()
        deadline = None
        if self.budget.max_duration_ms is not None:
            deadline = time.perf_counter() + self.budget.max_duration_ms / 1000.0
        while True:
            if self.budget.max_nodes is not None and stats.evaluations >= self.budget.max_nodes:
                break
            if deadline is not None and stats.evaluations > 0 and time.perf_counter() >= deadline:
                break
            path = self._select(root, goal, limit)
            if path is None:
                break
            value = evaluate(path[-1], self.oracle, self.scorer, goal, hidden)
            backpropagate_max(path, value)
            stats.evaluations += 1
            stats.root_q.append(root.q_max)
        self.last_stats = stats
        return stats

    def _select(self, root: TreeNode, goal: Goal, limit: int) -> Optional[list[TreeNode]]:
        node, path = root, [root]
        while True:
            if not node.children:
                if node.depth >= limit:
                    return None
                path.append(expand(node, self.sampler, self.chain, self.branching, goal)[0])
                return path
            parent_visits = max(node.visits, 1)
            pick, pick_u = None, -math.inf
            for ch in node.children:
                if _exhausted(ch, limit):
                    continue
                u = ucb1(ch, parent_visits, self.c)
                if u > pick_u:
                    pick, pick_u = ch, u
            if pick is None:
                return None
            path.append(pick)
            if pick.visits == 0:
                return path
            node = pick

    def plan(
        self, root: TreeNode, goal: Goal, hidden: Iterable[str] = (), horizon: Optional[int] = None
    ) -> np.ndarray:
        """Search, then return the best non-zero root action.

        ``horizon`` caps the lookahead at the number of actions left to execute.
        """
        self.search(root, goal, hidden, horizon)
        return best_action(root, self.zero_eps)


def max_depth(root: TreeNode) -> int:
    return max(n.depth for n in root.iter_nodes())


def dump_tree(root: TreeNode) -> str:
    """One line per node in pre-order: id, parent id, depth, visits, q_max, translation."""
    lines = ["node_id,parent_id,depth,visits,q_max,tx,ty,tz"]
    ids: dict[int, int] = {}
    stack: list[tuple[TreeNode, int]] = [(root, -1)]
    while stack:
        node, parent = stack.pop()
        nid = len(ids)
        ids[id(node)] = nid
        tx, ty, tz = (float(v) for v in node.pose.translation)
        lines.append(f"{nid},{parent},{node.depth},{node.visits},{node.q_max!r},{tx!r},{ty!r},{tz!r}")
        stack.extend((ch, nid) for ch in reversed(node.children))
    return "\n".join(lines) + "\n"
