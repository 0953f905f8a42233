"""Run configuration: TOML files -> typed configs.

A single file describes the environment, the goal graph, the goal-generation
hyperparameters, the learner, and the trainer.  Any key can be overridden
from the command line with ``--set section.key=value`` (values are parsed as
TOML literals, so lists work: ``--set graph.n=[9,9,5]``).  The four task
configs shipped with the package are addressable by bare name.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .env import Bounds3, Cuboid, EnvConfig, GoalDistribution, Region
from .goalgen import HggHyperParams
from .trainer import LearnerParams, TrainConfig


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


BUILTIN_CONFIGS = ("labyrinth_push", "pick_obstacle", "pick_no_obstacle",
                   "pick_and_throw", "demo_obstacle")


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig
    train: TrainConfig
    raw: dict  # resolved document, for the run manifest


def resolve_config_path(spec: str) -> Path:
    """A builtin config name or a path to a TOML file."""
    if spec in BUILTIN_CONFIGS:
        return Path(str(resources.files("hindsight_atlas") / "configs" / f"{spec}.toml"))
    path = Path(spec)
    if not path.exists():
        raise ConfigError(
            f"config {spec!r} is neither a file nor one of the builtin "
            f"configs {BUILTIN_CONFIGS}")
    return path


def parse_override(assignment: str) -> tuple[list[str], object]:
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like section.key=value")
    key, _, value = assignment.partition("=")
    keys = [k.strip() for k in key.split(".")]
    if not all(keys):
        raise ConfigError(f"override {assignment!r} has an empty key component")
    try:
        parsed = tomllib.loads(f"v = {value}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = value.strip()
    return keys, parsed


def apply_overrides(doc: dict, assignments: list[str]) -> dict:
    doc = copy.deepcopy(doc)
    for assignment in assignments:
        keys, value = parse_override(assignment)
        node = doc
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {assignment!r} descends into a non-table")
        node[keys[-1]] = value
    return doc


def _region(doc: dict, where: str) -> Region:
    try:
        return Region(low=tuple(float(v) for v in doc["low"]),
                      high=tuple(float(v) for v in doc["high"]))
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"bad region in [{where}]: {err}") from err


def _bounds(doc: dict, where: str) -> Bounds3:
    try:
        lo, hi = doc["low"], doc["high"]
        return Bounds3(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]),
                       float(lo[2]), float(hi[2]))
    except (KeyError, IndexError, TypeError, ValueError) as err:
        raise ConfigError(f"bad bounds in [{where}]: {err}") from err


def _env_config(doc: dict) -> EnvConfig:
    if "env" not in doc:
        raise ConfigError("missing [env] section")
    e = doc["env"]
    try:
        workspace = _bounds(e["workspace"], "env.workspace")
        obstacles = tuple(
            Cuboid(center=tuple(o["center"]), half_extents=tuple(o["half_extents"]))
            for o in e.get("obstacles", ()))
        goals_doc = e["goals"]
        kind = goals_doc.get("kind", "region")
        if kind == "region":
            goals = GoalDistribution(region=_region(goals_doc, "env.goals"))
        elif kind == "discrete":
            goals = GoalDistribution(points=tuple(tuple(float(v) for v in p)
                                                  for p in goals_doc["points"]))
        else:
            raise ConfigError(f"unknown goal kind {kind!r}")
        agent = e.get("agent", {})
        graph_doc = doc.get("graph", {})
        graph_bounds = (_bounds(graph_doc["bounds"], "graph.bounds")
                        if "bounds" in graph_doc else None)
        graph_n = tuple(int(v) for v in graph_doc.get("n", (9, 9, 9)))
        if len(graph_n) != 3:
            raise ConfigError("graph.n must have three entries")
        return EnvConfig(
            name=e.get("name", "custom"),
            workspace=workspace,
            obstacles=obstacles,
            object_start=_region(e["object_start"], "env.object_start"),
            goals=goals,
            agent_start=(_region(e["agent_start"], "env.agent_start")
                         if "agent_start" in e else None),
            agent_low=tuple(float(v) for v in agent["low"]) if "low" in agent else None,
            agent_high=tuple(float(v) for v in agent["high"]) if "high" in agent else None,
            eps_goal=float(e.get("eps_goal", 0.05)),
            horizon=int(e.get("horizon", 100)),
            action_scale=float(e.get("action_scale", 0.03)),
            grab_radius=float(e.get("grab_radius", 0.05)),
            contact_radius=float(e.get("contact_radius", 0.04)),
            grip_mode=e.get("grip_mode", "free"),
            throw_boost=bool(e.get("throw_boost", False)),
            graph_bounds=graph_bounds,
            graph_n=graph_n,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"bad [env] section: {err}") from err


def _train_config(doc: dict, env: EnvConfig, mode: str, seed: int) -> TrainConfig:
    h = doc.get("hgg", {})
    l = doc.get("learner", {})
    t = doc.get("trainer", {})
    try:
        hgg = HggHyperParams(
            c=float(h.get("c", 3.0)),
            lipschitz=float(h.get("lipschitz", 5.0)),
            k_targets=int(h.get("k_targets", 20)),
            episodes=int(h.get("episodes", 50)),
            pool=int(h.get("pool", 100)),
            delta_stop=float(h.get("delta_stop", 0.9)),
            eps_close=float(h.get("eps_close", env.eps_goal)),
            metric_mode="euclidean" if mode == "hgg" else "graph",
        )
        learner = LearnerParams(
            resolution=float(l.get("resolution", 0.025)),
            gamma=float(l.get("gamma", 0.98)),
            learning_rate=float(l.get("learning_rate", 0.1)),
            eps_explore=float(l.get("eps_explore", 0.2)),
            noise_scale=float(l.get("noise_scale", 0.1)),
        )
        return TrainConfig(
            mode=mode,
            iterations=int(t.get("iterations", 50)),
            optimize_steps=int(t.get("optimize_steps", 40)),
            batch_size=int(t.get("batch_size", 128)),
            eval_episodes=int(t.get("eval_episodes", 20)),
            buffer_capacity=int(t.get("buffer_capacity", 200)),
            k_future=int(t.get("k_future", 4)),
            seed=seed,
            hgg=hgg,
            learner=learner,
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad hyperparameter section: {err}") from err


def load_config(spec: str, overrides: list[str] | None = None,
                mode: str = "g-hgg", seed: int = 0) -> RunConfig:
    path = resolve_config_path(spec)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"cannot parse {path}: {err}") from err
    doc = apply_overrides(doc, overrides or [])
    env = _env_config(doc)
    train = _train_config(doc, env, mode, seed)
    raw = copy.deepcopy(doc)
    raw.setdefault("run", {})
    raw["run"].update({"mode": mode, "seed": seed, "config": str(path)})
    return RunConfig(env=env, train=train, raw=raw)
