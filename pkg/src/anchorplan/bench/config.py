"""Run configuration: a flat ``key = value`` file plus command-line overrides.

Lists are comma separated. A custom chain is given as ``chain_links`` with
one link per ``;``-separated group of 6 or 8 numbers:
``ax, ay, az, ox, oy, oz[, lo, hi]`` (axis, link offset in meters, joint
limits in radians). Without it the 3-DOF reference chain is used.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

from ..env import VARIANTS, AgentConfig, E3Task, check_variant
from ..scoring import SCORER_NAMES
from ..se3 import KinematicChain, Link, reference_chain

DEFAULT_CONFIG = """\
# E3 sequential-reach ablation, desk scale.
variants = greedy, mcts-d1, mcts-d2
seeds = 0, 1, 2
episodes = 30
workers = 1

# planner
branching = 4
c = 0.02
budget_nodes = 20
# budget_ms = 2000
a_max = 0.33
zero_eps = 1e-6
goal_directed = true
include_stay = true
truncate_horizon = true
scorer = exact
oracle = geometric
memory_source = anchor

# task (meters)
target_a = 0.55, 0.30, 0.20
target_b = 0.50, -0.25, 0.05
target_c = 0.20, 0.05, -0.40
target_radius = 0.05
success_radius = 0.1
actions_per_step = 10
home = 0.0, -0.4, 1.2
init_spread = 0.5

# chain
link_length = 0.5

# verification
latency_budget_ms = 1.0
out = results
"""


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    chain: KinematicChain = field(default_factory=reference_chain)
    task: E3Task = field(default_factory=E3Task)
    agent: AgentConfig = field(default_factory=AgentConfig)
    variants: tuple[str, ...] = VARIANTS
    seeds: tuple[int, ...] = (0, 1, 2)
    episodes: int = 30
    workers: int = 1
    latency_budget_ms: float = 1.0
    out: Path = Path("results")

    def __post_init__(self) -> None:
        if not self.variants:
            raise ConfigError("at least one variant is required")
        for v in self.variants:
            try:
                check_variant(v)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.episodes < 1:
            raise ConfigError("episodes must be positive")
        if self.agent.scorer not in SCORER_NAMES:
            raise ConfigError(f"unknown scorer {self.agent.scorer!r}")
        if len(self.task.home) != self.chain.dof:
            raise ConfigError("home posture length does not match the chain")

    def metadata(self) -> dict[str, Any]:
        """JSON-friendly summary of every setting that affects results."""
        return {
            "variants": list(self.variants),
            "seeds": list(self.seeds),
            "episodes": self.episodes,
            "agent": asdict(self.agent),
            "task": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.task).items()},
            "chain": [
                {"axis": list(l.axis), "offset": list(l.offset), "limits": list(l.limits)}
                for l in self.chain.links
            ],
        }


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _chain(values: dict[str, str]) -> KinematicChain:
    if "chain_links" not in values:
        return reference_chain(float(values.get("link_length", 0.5)))
    links = []
    for group in values["chain_links"].split(";"):
        nums = _floats(group)
        if len(nums) == 6:
            links.append(Link(nums[:3], nums[3:6]))
        elif len(nums) == 8:
            links.append(Link(nums[:3], nums[3:6], (nums[6], nums[7])))
        else:
            raise ConfigError(f"chain link needs 6 or 8 numbers, got {len(nums)}")
    return KinematicChain(tuple(links))


_AGENT_KEYS = {
    "branching": int,
    "c": float,
    "budget_nodes": int,
    "budget_ms": float,
    "a_max": float,
    "zero_eps": float,
    "goal_directed": _bool,
    "include_stay": _bool,
    "truncate_horizon": _bool,
    "scorer": str,
    "oracle": str,
    "memory_source": str,
}
_TASK_KEYS = {
    "target_a": ("a", _floats),
    "target_b": ("b", _floats),
    "target_c": ("c", _floats),
    "target_radius": ("target_radius", float),
    "success_radius": ("success_radius", float),
    "actions_per_step": ("actions_per_step", int),
    "home": ("home", _floats),
    "init_spread": ("init_spread", float),
}
_OTHER_KEYS = {"variants", "seeds", "episodes", "workers", "latency_budget_ms", "out", "link_length", "chain_links"}


def parse_config(text: str, overrides: Optional[dict[str, str]] = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string("[run]\n" + text)
    values = dict(parser["run"])
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = set(values) - set(_AGENT_KEYS) - set(_TASK_KEYS) - _OTHER_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        agent = AgentConfig(**{k: conv(values[k]) for k, conv in _AGENT_KEYS.items() if k in values})
        task = E3Task(**{name: conv(values[k]) for k, (name, conv) in _TASK_KEYS.items() if k in values})
        cfg = RunConfig(
            chain=_chain(values),
            task=task,
            agent=agent,
            variants=tuple(v.strip() for v in values.get("variants", ",".join(VARIANTS)).split(",") if v.strip()),
            seeds=tuple(int(s) for s in values.get("seeds", "0,1,2").split(",") if s.strip()),
            episodes=int(values.get("episodes", 30)),
            workers=int(values.get("workers", 1)),
            latency_budget_ms=float(values.get("latency_budget_ms", 1.0)),
            out=Path(values.get("out", "results")),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if not math.isfinite(cfg.agent.c) or cfg.agent.c < 0:
        raise ConfigError("exploration constant must be finite and non-negative")
    return cfg


def load_config(path: Optional[str | Path] = None, overrides: Optional[dict[str, str]] = None) -> RunConfig:
    text = DEFAULT_CONFIG if path is None else Path(path).read_text()
    return parse_config(text, overrides)


def with_agent(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, agent=replace(cfg.agent, **changes))
