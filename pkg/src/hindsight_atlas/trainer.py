"""Training loop: exploration-goal curriculum, replay, optimization, eval.

One iteration = sample K target tasks, match them to buffer trajectories to
produce M intermediate exploration tasks (unless running plain hindsight
replay or the hand-off already fired), roll out and store M episodes with
future-strategy relabels, run N optimization steps, then evaluate greedily on
fresh target tasks.

The first iteration always explores with target tasks: with an empty buffer
there is nothing to match yet.
"""

from __future__ import annotations

import csv
import json
import math
import pickle
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distances import DistanceTable
from .env import EnvConfig, PointMassEnv, TaskPair, discrete_action_set
from .goalgen import (GoalSelection, HggHyperParams, intermediate_tasks,
                      make_metric, select_trajectories, stop_condition)
from .learner import DiscretizedQ
from .replay import ReplayBuffer, Trajectory

CHECKPOINT_VERSION = 1

MODES = ("g-hgg", "hgg", "her")

METRICS_COLUMNS = ("iteration", "success_rate", "mean_dG_to_target",
                   "mean_euclid_to_target", "stopped")


@dataclass(frozen=True)
class LearnerParams:
    resolution: float = 0.025
    gamma: float = 0.98
    learning_rate: float = 0.1
    eps_explore: float = 0.2
    noise_scale: float = 0.1


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "g-hgg"
    iterations: int = 50
    optimize_steps: int = 40         # N optimization steps per iteration
    batch_size: int = 128
    eval_episodes: int = 20
    buffer_capacity: int = 200       # trajectories
    k_future: int = 4
    seed: int = 0
    hgg: HggHyperParams = field(default_factory=HggHyperParams)
    learner: LearnerParams = field(default_factory=LearnerParams)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class IterationMetrics:
    iteration: int
    success_rate: float
    mean_dg_to_target: float      # nan when no hindsight selection happened
    mean_euclid_to_target: float  # nan when no hindsight selection happened
    stopped: bool
    seconds: float
    goal_source: str              # "target" or "hindsight"


def run_episode(env: PointMassEnv, learner, task: TaskPair,
                explore: bool) -> tuple[Trajectory, bool]:
    """Roll one episode from the given task; returns the trajectory and
    whether it ended in success."""
    state, goal = env.begin(task.s0, task.g)
    agents = [state.agent_pos]
    achieved = [state.object_pos]
    holding = [state.holding]
    actions, rewards = [], []
    done = False
    while not done:
        a = learner.act(state, goal, explore=explore)
        state, r, done = env.step(a)
        actions.append(a)
        rewards.append(r)
        agents.append(state.agent_pos)
        achieved.append(state.object_pos)
        holding.append(state.holding)
    traj = Trajectory(agent=np.array(agents), achieved=np.array(achieved),
                      holding=np.array(holding, dtype=bool), actions=actions,
                      goal=goal, rewards=np.array(rewards))
    return traj, env.success()


def evaluate(learner, env_config: EnvConfig, episodes: int,
             rng: np.random.Generator) -> float:
    """Greedy success rate over freshly sampled target tasks."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    env = PointMassEnv(env_config)
    wins = 0
    for _ in range(episodes):
        _, ok = run_episode(env, learner, env.sample_task(rng), explore=False)
        wins += ok
    return wins / episodes


class Trainer:
    """Stateful driver for one training run.

    In "g-hgg" mode a prebuilt :class:`DistanceTable` is required; "hgg" uses
    the euclidean baseline metric; "her" skips goal generation entirely.
    """

    def __init__(self, env_config: EnvConfig, train_config: TrainConfig,
                 table: DistanceTable | None = None, out_dir=None):
        self.env_config = env_config
        self.config = train_config
        self.table = table
        if train_config.mode == "g-hgg":
            if table is None:
                raise ValueError("g-hgg mode needs a distance table")
            self.metric = make_metric("graph", table)
        elif train_config.mode == "hgg":
            self.metric = make_metric("euclidean")
        else:
            self.metric = None
        self.env = PointMassEnv(env_config)
        lp = train_config.learner
        ss = np.random.SeedSequence(train_config.seed)
        s_train, s_learner = ss.spawn(2)
        self.learner = DiscretizedQ(
            actions=discrete_action_set(env_config), resolution=lp.resolution,
            gamma=lp.gamma, learning_rate=lp.learning_rate,
            eps_explore=lp.eps_explore, noise_scale=lp.noise_scale, seed=s_learner)
        self.buffer = ReplayBuffer(capacity=train_config.buffer_capacity,
                                   k_future=train_config.k_future,
                                   eps_goal=env_config.eps_goal)
        self.rng = np.random.default_rng(s_train)
        self.stopped = False
        self.iteration = 0
        self.metrics: list[IterationMetrics] = []
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self._metrics_fh = None
        self._timings_fh = None
        self._selection_fh = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)

    # -- one iteration -------------------------------------------------------

    def run_iteration(self) -> IterationMetrics:
        t0 = time.perf_counter()
        self.iteration += 1
        cfg = self.config
        hp = cfg.hgg
        selection: GoalSelection | None = None
        goal_source = "target"

        if (cfg.mode != "her" and not self.stopped
                and self.buffer.num_trajectories >= hp.k_targets):
            targets = [self.env.sample_task(self.rng) for _ in range(hp.k_targets)]
            selection = select_trajectories(targets, self.buffer, self.learner,
                                            hp, self.metric)
            if stop_condition(selection, targets, hp):
                self.stopped = True
            else:
                goal_source = "hindsight"

        if goal_source == "hindsight":
            tasks = intermediate_tasks(selection, hp.episodes, self.rng)
        else:
            tasks = [self.env.sample_task(self.rng) for _ in range(hp.episodes)]

        for task in tasks:
            traj, _ = run_episode(self.env, self.learner, task, explore=True)
            self.buffer.store(traj, self.rng)

        for _ in range(cfg.optimize_steps):
            rows = self.buffer.sample_rows(cfg.batch_size, self.rng)
            self.learner.update_rows(rows)

        eval_rng = np.random.default_rng([cfg.seed, self.iteration])
        success = evaluate(self.learner, self.env_config, cfg.eval_episodes, eval_rng)

        mean_dg = mean_euclid = math.nan
        if selection is not None:
            gaps = [math.dist(p.goal, p.task.g) for p in selection.matched]
            mean_euclid = sum(gaps) / len(gaps)
            if self.table is not None:
                dgs = [self.metric.pair_distance(p.goal, p.task.g)
                       for p in selection.matched]
                mean_dg = sum(dgs) / len(dgs)

        m = IterationMetrics(
            iteration=self.iteration, success_rate=success,
            mean_dg_to_target=mean_dg, mean_euclid_to_target=mean_euclid,
            stopped=self.stopped, seconds=time.perf_counter() - t0,
            goal_source=goal_source)
        self.metrics.append(m)
        self._write_iteration(m, selection)
        return m

    def run(self) -> list[IterationMetrics]:
        """Run all configured iterations; on any error, checkpoint the last
        good state before re-raising."""
        try:
            for _ in range(self.config.iterations):
                self.run_iteration()
        except BaseException:
            if self.out_dir is not None:
                self.save_checkpoint(self.out_dir / "checkpoint.pkl")
            raise
        finally:
            self._close_files()
        if self.out_dir is not None:
            self.save_checkpoint(self.out_dir / "checkpoint.pkl")
        return self.metrics

    # -- run artifacts --------------------------------------------------------

    def _write_iteration(self, m: IterationMetrics, selection) -> None:
        if self.out_dir is None:
            return
        if self._metrics_fh is None:
            self._metrics_fh = open(self.out_dir / "metrics.csv", "w", newline="")
            self._metrics_writer = csv.writer(self._metrics_fh)
            self._metrics_writer.writerow(METRICS_COLUMNS)
            self._timings_fh = open(self.out_dir / "timings.csv", "w", newline="")
            self._timings_writer = csv.writer(self._timings_fh)
            self._timings_writer.writerow(["iteration", "seconds"])
            self._selection_fh = open(self.out_dir / "selection.jsonl", "w")
        self._metrics_writer.writerow([
            m.iteration, repr(m.success_rate), repr(m.mean_dg_to_target),
            repr(m.mean_euclid_to_target), m.stopped])
        self._metrics_fh.flush()
        self._timings_writer.writerow([m.iteration, f"{m.seconds:.3f}"])
        self._timings_fh.flush()
        record = {"iteration": m.iteration, "goal_source": m.goal_source,
                  "stopped": m.stopped, "metric": self.config.mode}
        if selection is not None:
            record["pairs"] = [
                {"target_goal": list(p.task.g), "hindsight_goal": list(p.goal),
                 "cost": p.cost, "traj_id": p.traj_id, "t_star": p.t_star,
                 "d_euclid": math.dist(p.goal, p.task.g),
                 "d_g": (self.metric.pair_distance(p.goal, p.task.g)
                         if self.table is not None else None)}
                for p in selection.matched]
        self._selection_fh.write(json.dumps(record) + "\n")
        self._selection_fh.flush()

    def _close_files(self) -> None:
        for fh in (self._metrics_fh, self._timings_fh, self._selection_fh):
            if fh is not None:
                fh.close()
        self._metrics_fh = self._timings_fh = self._selection_fh = None

    def save_checkpoint(self, path) -> None:
        payload = {
            "format_version": CHECKPOINT_VERSION,
            "iteration": self.iteration,
            "stopped": self.stopped,
            "rng_state": self.rng.bit_generator.state,
            "learner_q": self.learner._q,
            "learner_rng_state": self.learner._rng.bit_generator.state,
            "buffer_episodes": list(self.buffer._episodes),
            "buffer_next_id": self.buffer._next_id,
        }
        with open(path, "wb") as fh:
            pickle.dump(payload, fh, protocol=pickle.HIGHEST_PROTOCOL)

    def restore_checkpoint(self, path) -> None:
        with open(path, "rb") as fh:
            payload = pickle.load(fh)
        if payload["format_version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version in {path}")
        self.iteration = payload["iteration"]
        self.stopped = payload["stopped"]
        self.rng.bit_generator.state = payload["rng_state"]
        self.learner._q = payload["learner_q"]
        self.learner._rng.bit_generator.state = payload["learner_rng_state"]
        from collections import deque
        self.buffer._episodes = deque(payload["buffer_episodes"])
        self.buffer._next_id = payload["buffer_next_id"]
