"""Five-step sequential reach with scripted occlusion, and the two agents.

Steps 1-3 visit targets A, B, C while the current goal is observable.
Step 4 returns to A and step 5 goes to the midpoint of A and B; at those
steps the relevant targets are hidden from every observation. The greedy
agent only reacts to what it sees. The planning agent also keeps an
append-only record of where its camera was at the end of each step and
rebuilds memory-step goals from it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping, Optional

import numpy as np

from .mcts import (
    ActionSampler,
    PlanBudget,
    Planner,
    TreeNode,
    advance_root,
    reset_statistics,
)
from .scoring import Goal, make_scorer, needs_pixels
from .se3 import KinematicChain, Pose, forward_kinematics, reference_chain
from .world_model import GeometricFrame, GeometricOracle, Scene, Target, WorldModel, make_oracle

N_STEPS = 5
MEMORY_STEPS = (4, 5)
VARIANTS = ("greedy", "mcts-d1", "mcts-d2")
UNINFORMATIVE = 0.0


@dataclass(frozen=True)
class E3Task:
    a: tuple[float, float, float] = (0.55, 0.30, 0.20)
    b: tuple[float, float, float] = (0.50, -0.25, 0.05)
    c: tuple[float, float, float] = (0.20, 0.05, -0.40)
    success_radius: float = 0.1
    actions_per_step: int = 10
    target_radius: float = 0.05
    # Episodes start at home + U(-init_spread, init_spread) per joint.
    home: tuple[float, ...] = (0.0, -0.4, 1.2)
    init_spread: float = 0.5

    def __post_init__(self) -> None:
        pts = [np.asarray(p, dtype=float) for p in (self.a, self.b, self.c)]
        for i in range(3):
            for j in range(i + 1, 3):
                if np.array_equal(pts[i], pts[j]):
                    raise ValueError("task positions A, B, C must be pairwise distinct")
        if self.success_radius <= 0 or self.actions_per_step < 1:
            raise ValueError("success_radius and actions_per_step must be positive")

    @property
    def step_goals(self) -> tuple[Goal, ...]:
        mid = tuple((np.asarray(self.a) + np.asarray(self.b)) / 2.0)
        return (
            Goal(self.a, "A"),
            Goal(self.b, "B"),
            Goal(self.c, "C"),
            Goal(self.a, "A"),
            Goal(mid, "AB_mid"),
        )

    def goal(self, step: int) -> Goal:
        _check_step(step)
        return self.step_goals[step - 1]

    def hidden(self, step: int) -> frozenset[str]:
        """Target ids withheld from observations at ``step``."""
        _check_step(step)
        return {4: frozenset({"A"}), 5: frozenset({"A", "B"})}.get(step, frozenset())

    def scene(self, **camera) -> Scene:
        # Visibility comes from the script only, so the camera heading cannot
        # leak or withhold the goal at non-memory steps.
        camera.setdefault("fov_culling", False)
        targets = tuple(
            Target(tid, pos, self.target_radius) for tid, pos in zip("ABC", (self.a, self.b, self.c))
        )
        return Scene(targets, **camera)


def _check_step(step: int) -> None:
    if not 1 <= step <= N_STEPS:
        raise ValueError(f"step must be in 1..{N_STEPS}, got {step}")


class AnchorMemory:
    """Camera pose at the end of each completed step; entries are never replaced."""

    def __init__(self) -> None:
        self._entries: dict[int, Pose] = {}

    def record(self, step: int, c2w: Pose) -> None:
        if step in self._entries:
            raise ValueError(f"anchor for step {step} already recorded")
        self._entries[step] = c2w

    def __getitem__(self, step: int) -> Pose:
        return self._entries[step]

    def __contains__(self, step: int) -> bool:
        return step in self._entries

    @property
    def entries(self) -> Mapping[int, Pose]:
        return MappingProxyType(self._entries)


@dataclass
class AgentConfig:
    branching: int = 4
    c: float = 0.02
    budget_nodes: int = 20
    budget_ms: Optional[float] = None
    a_max: float = 0.33
    zero_eps: float = 1e-6
    goal_directed: bool = True
    include_stay: bool = True
    memory_source: str = "anchor"
    scorer: str = "exact"
    oracle: str = "geometric"
    truncate_horizon: bool = True

    def __post_init__(self) -> None:
        if self.memory_source not in ("anchor", "tree-node"):
            raise ValueError(f"unknown memory_source {self.memory_source!r}")


@dataclass
class StepOutcome:
    step: int
    success: bool
    final_distance: float
    actions: list[tuple[float, ...]]


@dataclass
class EpisodeRecord:
    variant: str
    seed: int
    episode: int
    steps: list[StepOutcome] = field(default_factory=list)
    blend_active: bool = False


@dataclass
class AgentState:
    joints: np.ndarray
    c2w: Pose
    tree: Optional[TreeNode] = None
    memory: AnchorMemory = field(default_factory=AnchorMemory)
    # Roots the agent sat on at the end of each step (tree-node memory mode).
    anchored_nodes: list[TreeNode] = field(default_factory=list)


def observe(task: E3Task, step: int, c2w: Pose, scene: Scene) -> GeometricFrame:
    return GeometricOracle(scene).render(c2w, task.hidden(step))


def visible_goal(task: E3Task, step: int, frame: GeometricFrame) -> Optional[Goal]:
    """The step goal as far as it can be read off ``frame``; None when occluded."""
    goal = task.goal(step)
    if goal.target_id == "AB_mid":
        a, b = frame.position_of("A"), frame.position_of("B")
        if a is None or b is None:
            return None
        return Goal(tuple((np.asarray(a) + np.asarray(b)) / 2.0), goal.target_id)
    pos = frame.position_of(goal.target_id)
    return None if pos is None else Goal(pos, goal.target_id)


def remembered_goal(task: E3Task, step: int, state: AgentState, source: str = "anchor") -> Goal:
    """Memory-step goal rebuilt from stored end-of-step camera poses."""
    def anchor(k: int) -> np.ndarray:
        if source == "anchor":
            return state.memory[k].translation
        for node in state.anchored_nodes:
            if node.step_tag == k:
                return node.pose.translation
        raise KeyError(f"no tree node tagged with step {k}")

    goal = task.goal(step)
    if step == 4:
        return Goal(tuple(anchor(1)), goal.target_id)
    if step == 5:
        return Goal(tuple((anchor(1) + anchor(2)) / 2.0), goal.target_id)
    raise ValueError(f"step {step} is not a memory step")


def initial_joints(task: E3Task, chain: KinematicChain, rng: np.random.Generator) -> np.ndarray:
    home = np.asarray(task.home, dtype=float)
    if home.shape != (chain.dof,):
        raise ValueError("home posture does not match the chain")
    lo = np.maximum(chain.lower, home - task.init_spread)
    hi = np.minimum(chain.upper, home + task.init_spread)
    return rng.uniform(lo, hi)


def _outcome(task: E3Task, step: int, c2w: Pose, actions: list) -> StepOutcome:
    dist = task.goal(step).distance(c2w)
    return StepOutcome(step, bool(dist <= task.success_radius), dist, actions)


def run_greedy_step(
    task: E3Task,
    step: int,
    state: AgentState,
    sampler: ActionSampler,
    chain: KinematicChain,
    scene: Scene,
    oracle: WorldModel,
    scorer,
    branching: int = 4,
) -> StepOutcome:
    """Execute the candidate with the best immediate score, ``actions_per_step`` times.

    With the goal out of sight every candidate gets the same constant score,
    so the first candidate (the zero action by default) wins the tie.
    """
    hidden = task.hidden(step)
    actions = []
    for _ in range(task.actions_per_step):
        goal = visible_goal(task, step, observe(task, step, state.c2w, scene))
        deltas = sampler(state.joints, branching, goal)
        best, best_score = 0, -np.inf
        for i, delta in enumerate(deltas):
            if goal is None:
                value = UNINFORMATIVE
            else:
                pose = forward_kinematics(state.joints + delta, chain)
                value = scorer(oracle.render(pose, hidden), goal, pose)
            if value > best_score:
                best, best_score = i, value
        state.joints = state.joints + deltas[best]
        state.c2w = forward_kinematics(state.joints, chain)
        actions.append(tuple(float(v) for v in deltas[best]))
    state.memory.record(step, state.c2w)
    return _outcome(task, step, state.c2w, actions)


def run_planner_step(
    task: E3Task,
    step: int,
    state: AgentState,
    planner: Planner,
    scene: Scene,
    memory_source: str = "anchor",
    blend: bool = False,
    truncate_horizon: bool = True,
    on_plan: Optional[Callable[[int, int, TreeNode], None]] = None,
) -> StepOutcome:
    """Plan, execute the chosen action, move the anchor, re-root; repeat.

    ``on_plan(step, k, root)`` sees the searched tree before the k-th action is executed.
    """
    hidden = task.hidden(step)
    if step in MEMORY_STEPS:
        goal = remembered_goal(task, step, state, memory_source)
    else:
        goal = visible_goal(task, step, observe(task, step, state.c2w, scene))
        if goal is None:
            raise RuntimeError(f"goal of step {step} should be observable")
    if state.tree is None:
        state.tree = TreeNode.root(state.joints, planner.chain)
    # Values from the previous goal are stale; nodes and poses are kept.
    reset_statistics(state.tree)
    actions = []
    for k in range(task.actions_per_step):
        horizon = task.actions_per_step - k if truncate_horizon else None
        action = planner.plan(state.tree, goal, hidden, horizon)
        if on_plan is not None:
            on_plan(step, k, state.tree)
        state.joints = state.joints + action
        state.c2w = forward_kinematics(state.joints, planner.chain)
        state.tree = advance_root(state.tree, action)
        if state.tree.pose != state.c2w:
            raise RuntimeError("tree pose diverged from the kinematic anchor")
        if blend:
            planner.oracle.update_reference(planner.oracle.render(state.c2w, hidden))
        actions.append(tuple(float(v) for v in action))
    state.memory.record(step, state.c2w)
    state.tree.step_tag = step
    state.anchored_nodes.append(state.tree)
    return _outcome(task, step, state.c2w, actions)


def depth_of(variant: str) -> int:
    """Lookahead depth encoded in a planner variant name such as ``mcts-d2``."""
    m = re.fullmatch(r"mcts-d([1-9][0-9]*)", variant)
    if m is None:
        raise ValueError(f"{variant!r} is not a planner variant (expected mcts-d<depth>)")
    return int(m.group(1))


def check_variant(variant: str) -> None:
    if variant != "greedy":
        depth_of(variant)


def run_episode(
    variant: str,
    seed: int,
    episode: int,
    task: E3Task | None = None,
    agent: AgentConfig | None = None,
    chain: KinematicChain | None = None,
    on_step: Optional[Callable[[int, AgentState], None]] = None,
    on_plan: Optional[Callable[[int, int, TreeNode], None]] = None,
) -> EpisodeRecord:
    """One full episode; all five steps run even after a failure.

    ``on_step(step, state)`` runs after each step and ``on_plan`` after each
    planner search (see run_planner_step); both are for inspection only.
    """
    check_variant(variant)
    task = task or E3Task()
    agent = agent or AgentConfig()
    chain = chain or reference_chain()
    scene = task.scene()
    oracle_name = "pixel" if needs_pixels(agent.scorer) else agent.oracle
    oracle = make_oracle(oracle_name, scene)
    scorer = make_scorer(agent.scorer)

    init_seq, sample_seq = np.random.SeedSequence([seed, episode]).spawn(2)
    q0 = initial_joints(task, chain, np.random.default_rng(init_seq))
    sampler = ActionSampler(
        chain,
        a_max=agent.a_max,
        seed=np.random.default_rng(sample_seq),
        goal_directed=agent.goal_directed,
        include_stay=agent.include_stay,
    )
    state = AgentState(joints=q0, c2w=forward_kinematics(q0, chain))
    record = EpisodeRecord(variant, seed, episode, blend_active=oracle_name == "pixel")

    planner = None
    if variant != "greedy":
        planner = Planner(
            chain=chain,
            oracle=oracle,
            scorer=scorer,
            sampler=sampler,
            depth=depth_of(variant),
            branching=agent.branching,
            c=agent.c,
            budget=PlanBudget(agent.budget_nodes, agent.budget_ms),
            zero_eps=agent.zero_eps,
        )
    for step in range(1, N_STEPS + 1):
        if planner is None:
            out = run_greedy_step(task, step, state, sampler, chain, scene, oracle, scorer, agent.branching)
        else:
            out = run_planner_step(
                task, step, state, planner, scene, agent.memory_source, record.blend_active, agent.truncate_horizon,
                on_plan,
            )
        record.steps.append(out)
        if on_step is not None:
            on_step(step, state)
    return record
