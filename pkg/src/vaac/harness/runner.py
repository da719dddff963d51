"""Training runs, multi-seed sweeps and checkpoint evaluation."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..agents import AGENT_KINDS, Agent, StepReport, act
from ..env_maze import Maze, MazeConfig, VisitGrid, export_histogram, read_counts_csv, rooms_visited
from ..nn_core import ConfigurationError, NonFiniteError
from .config import RunConfig, make_rngs

log = logging.getLogger(__name__)

METRICS_HEADER = ("step", "unique_cells", "virtual_entropy", "critic_loss", "actor_loss",
                  "va_loss", "dyn_loss", "rnd_loss", "reward_sum")
_MEAN_FIELDS = ("virtual_entropy", "critic_loss", "actor_loss", "va_loss", "dyn_loss", "rnd_loss")


def build_agent(config: RunConfig) -> Agent:
    return Agent(config.agent, config.hp, Maze(config.maze), make_rngs(config.seed))


def _fmt(v: float) -> str:
    return repr(float(v))


class _Interval:
    """Accumulates StepReports between two metric rows."""

    def __init__(self):
        self.sums = {k: 0.0 for k in _MEAN_FIELDS}
        self.counts = {k: 0 for k in _MEAN_FIELDS}
        self.reward = 0.0

    def add(self, r: StepReport) -> None:
        self.reward += r.reward
        for k in _MEAN_FIELDS:
            v = getattr(r, k)
            if not math.isnan(v):
                self.sums[k] += v
                self.counts[k] += 1

    def row(self, step: int, unique: int) -> list[str]:
        means = [_fmt(self.sums[k] / self.counts[k]) if self.counts[k] else "nan" for k in _MEAN_FIELDS]
        return [str(step), str(unique), *means, _fmt(self.reward)]


def run(config: RunConfig, out_dir, progress: Callable[[int, int], None] | None = None) -> Path:
    """Train one agent for ``config.total_steps`` and write its run directory.

    Contents: ``config.txt``, ``metrics.csv`` (one row per report interval),
    ``visits_<step>.pgm/.csv`` snapshots, ``checkpoint.npz`` and ``run_info.json``.
    On a non-finite loss the partial metrics are kept, a ``FAILED`` marker is
    written and the error propagates.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config.dumps())
    agent = build_agent(config)
    grid = VisitGrid(config.maze.grid_size)
    snapshots = set(config.snapshots())
    started = time.perf_counter()
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        interval = _Interval()
        try:
            for t in range(1, config.total_steps + 1):
                report = agent.train_iteration()
                grid.record(report.position)
                interval.add(report)
                if t % config.report_interval == 0:
                    writer.writerow(interval.row(t, grid.unique_cells()))
                    fh.flush()
                    interval = _Interval()
                    if progress is not None:
                        progress(t, config.total_steps)
                if t in snapshots:
                    export_histogram(grid, out / f"visits_{t:07d}")
        except NonFiniteError as exc:
            fh.flush()
            (out / "FAILED").write_text(f"{exc}\n")
            log.error("run %s aborted: %s", out, exc)
            raise
    if config.save_checkpoint:
        agent.save(out / "checkpoint.npz")
    info = {"elapsed_seconds": time.perf_counter() - started, "steps": config.total_steps,
            "unique_cells": grid.unique_cells(),
            "rooms_visited": sorted(rooms_visited(grid, config.maze))}
    (out / "run_info.json").write_text(json.dumps(info, indent=2) + "\n")
    return out


def read_metrics(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in METRICS_HEADER}


@dataclass
class SweepSpec:
    base: RunConfig
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    agents: list[str] = field(default_factory=lambda: ["vaac", "sac", "rnd"])

    def __post_init__(self):
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("sweep seeds must be distinct")
        bad = [a for a in self.agents if a not in AGENT_KINDS]
        if bad:
            raise ConfigurationError(f"unknown agent kinds {bad}")

    def runs(self) -> list[tuple[str, int]]:
        return [(a, s) for a in self.agents for s in self.seeds]


def run_dir_name(agent: str, seed: int) -> str:
    return f"{agent}_seed{seed}"


def _run_pair(args) -> str:
    config, out = args
    return str(run(config, out))


@dataclass
class SweepResult:
    out_dir: Path
    aggregate_path: Path
    summary_path: Path
    steps: np.ndarray
    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]
    final: dict[str, dict[int, int]]
    rooms: dict[str, dict[int, list[int]]]


def sweep(spec: SweepSpec, out_dir, workers: int = 1) -> SweepResult:
    """Run every (agent, seed) pair, then aggregate the unique-cells curves.

    Pairs share nothing, so ``workers > 1`` runs them in separate processes
    without changing any output.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for agent, seed in spec.runs():
        cfg = spec.base.replace(agent=agent, seed=seed)
        jobs.append((cfg, out / run_dir_name(agent, seed)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_run_pair, jobs))
    else:
        for job in jobs:
            log.info("sweep: %s", job[1].name)
            _run_pair(job)
    return aggregate(spec, out)


def aggregate(spec: SweepSpec, out_dir) -> SweepResult:
    """Per-step mean and population standard deviation of unique cells per agent."""
    out = Path(out_dir)
    curves: dict[str, list[np.ndarray]] = {a: [] for a in spec.agents}
    steps = None
    final: dict[str, dict[int, int]] = {a: {} for a in spec.agents}
    rooms: dict[str, dict[int, list[int]]] = {a: {} for a in spec.agents}
    for agent, seed in spec.runs():
        rd = out / run_dir_name(agent, seed)
        m = read_metrics(rd / "metrics.csv")
        steps = m["step"] if steps is None else steps
        curves[agent].append(m["unique_cells"])
        final[agent][seed] = int(m["unique_cells"][-1]) if len(m["unique_cells"]) else 0
        last = sorted(rd.glob("visits_*.csv"))
        rooms[agent][seed] = (sorted(rooms_visited(read_counts_csv(last[-1]), spec.base.maze))
                              if last else [])
    steps = np.array([]) if steps is None else steps
    mean = {a: np.mean(np.stack(c), axis=0) for a, c in curves.items()}
    std = {a: np.std(np.stack(c), axis=0) for a, c in curves.items()}
    agg_path = out / "aggregate.csv"
    with open(agg_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step"] + [f"{a}_{s}" for a in spec.agents for s in ("mean", "std")])
        for i, st in enumerate(steps):
            w.writerow([str(int(st))] + [_fmt(d[a][i]) for a in spec.agents for d in (mean, std)])
    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["agent", "seed", "final_unique_cells", "rooms_visited"])
        for agent, seed in spec.runs():
            w.writerow([agent, seed, final[agent][seed], " ".join(map(str, rooms[agent][seed]))])
    return SweepResult(out, agg_path, summary_path, steps, mean, std, final, rooms)


@dataclass
class EvaluationResult:
    mean_return: float
    episode_returns: list[float]


def evaluate_policy(policy: Callable[[np.ndarray], np.ndarray], maze: MazeConfig,
                    episodes: int) -> EvaluationResult:
    env = Maze(maze)
    returns = []
    for _ in range(episodes):
        s = env.reset()
        total, done = 0.0, False
        while not done:
            s, r, done = env.step(s, policy(s.position))
            total += r
        returns.append(total)
    return EvaluationResult(float(np.mean(returns)) if returns else 0.0, returns)


def evaluate(checkpoint, config: RunConfig, episodes: int = 10) -> EvaluationResult:
    """Mean episode return of the checkpoint's deterministic policy."""
    agent = build_agent(config)
    agent.load(checkpoint)
    return evaluate_policy(lambda pos: act(agent.actor, agent.obs(pos), None, deterministic=True),
                           config.maze, episodes)
