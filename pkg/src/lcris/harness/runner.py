"""Scenario orchestration: training, evaluation rollouts, sweeps, aggregates."""
from __future__ import annotations

import logging
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..agent import Ddpg, train
from ..baselines import optimal_controller, realistic_controller
from ..env import LcRisEnv, MetricRow, expand_columns
from ..scene import Trajectory
from .config import ConfigError, ExperimentConfig

log = logging.getLogger(__name__)

CONTROLLERS = ("ddpg", "optimal", "realistic")
SUMMARY_METRICS = ("received_power_dbw", "snr_db", "t_c_ms", "t_k_ms", "rate_mbps")


class MissingCheckpoint(FileNotFoundError):
    pass


def worker_count() -> int:
    cap = os.environ.get("LCRIS_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"LCRIS_THREADS must be an integer, got {cap!r}") from None
    return n


def arrival_slots(traj: Trajectory, waypoints: np.ndarray) -> np.ndarray:
    """Slots where the user arrives at a waypoint: per pass, the closest slot
    to each waypoint, kept only if it is within one step of it."""
    d = np.linalg.norm(traj.positions[:, None, :] - waypoints[None, :, :], axis=2)
    out = []
    for p in np.unique(traj.passes):
        idx = np.flatnonzero(traj.passes == p)
        for w in range(len(waypoints)):
            k = idx[np.argmin(d[idx, w])]
            if d[k, w] <= traj.step + 1e-9:
                out.append(k)
    return np.unique(np.asarray(out, dtype=int))


def run_episode(cfg: ExperimentConfig, controller: str, seed: int, agent: Ddpg | None = None,
                normalizer=None, steps: int | None = None) -> list[MetricRow]:
    """One evaluation episode of ``controller`` on the channels of ``seed``."""
    if controller not in CONTROLLERS:
        raise ConfigError(f"unknown controller {controller!r}")
    env = LcRisEnv(cfg.env_config(steps or cfg.eval_steps), run_id=seed)
    if normalizer is not None:
        env.load_normalizer(normalizer)
    obs = env.reset(seed)
    rows = []
    done = False
    if controller == "realistic":
        if cfg.env.per_element:
            raise ConfigError("the realistic controller is column-wise; disable env.per_element")
    while not done:
        if controller == "ddpg":
            obs, _, done, row = env.step(agent.act(obs), controller)
        elif controller == "optimal":
            phases, timing = optimal_controller(env.snapshot, cfg.lc.t_s)
            _, done, row = env.advance(phases, timing, controller)
        else:
            achieved, timing, env.panel = realistic_controller(
                env.snapshot, env.panel, env.spec.n_y, env.spec.n_z, cfg.env.column_reduction)
            _, done, row = env.advance(expand_columns(achieved, env.spec.n_z), timing, controller)
        rows.append(row)
    arrivals = set(arrival_slots(env.trajectory, cfg.scene.waypoints()).tolist())
    return [replace(r, arrival=r.slot in arrivals) for r in rows]


def _cell(args):
    cfg, controller, seed, ckpt = args
    agent, normalizer = None, None
    if controller == "ddpg":
        agent, extra = Ddpg.load(ckpt)
        normalizer = extra.get("normalizer")
    return run_episode(cfg, controller, seed, agent, normalizer)


def sort_rows(rows):
    return sorted(rows, key=lambda r: (r.controller, r.run_id, r.slot))


def run_cells(cells, workers=None):
    workers = workers or worker_count()
    if workers == 1 or len(cells) == 1:
        chunks = [_cell(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_cell, cells))
    return sort_rows([r for chunk in chunks for r in chunk])


def run_eval(cfg: ExperimentConfig, controller: str, seeds=None, checkpoint=None,
             workers=None) -> list[MetricRow]:
    seeds = cfg.run.seeds if seeds is None else seeds
    if controller == "ddpg":
        if checkpoint is None or not Path(checkpoint).exists():
            raise MissingCheckpoint(f"ddpg evaluation needs a checkpoint, got {checkpoint}")
    cells = [(cfg, controller, int(s), checkpoint) for s in seeds]
    return run_cells(cells, workers)


def run_train(cfg: ExperimentConfig, seed=None, checkpoint=None, resume=False,
              steps=None, row_sink=None):
    """Train DDPG; checkpoint after each episode when a path is given."""
    seed = cfg.run.train_seed if seed is None else seed
    env_cfg = cfg.env_config(steps)
    agent, env_state = None, None
    if resume:
        if checkpoint is None or not Path(checkpoint).exists():
            raise MissingCheckpoint(f"cannot resume: no checkpoint at {checkpoint}")
        agent, extra = Ddpg.load(checkpoint)
        env_state = extra.get("normalizer")

    def on_episode(ag, env):
        if checkpoint is not None and (ag.episode % cfg.run.checkpoint_every == 0
                                       or ag.episode == cfg.agent.episodes):
            ag.save(checkpoint, extra={"normalizer": env.normalizer_state(), "seed": seed,
                                       "config_sha256": cfg.digest()})
        log.info("episode %d mean reward %.4f", ag.episode, ag.curve[-1])

    result = train(lambda: LcRisEnv(env_cfg), cfg.agent, seed, agent=agent,
                   on_episode=on_episode, env_state=env_state, on_step=row_sink)
    return result


@dataclass(frozen=True)
class Aggregate:
    sums: dict
    counts: dict

    def mean(self, key):
        return self.sums[key] / self.counts[key]

    def __add__(self, other: "Aggregate") -> "Aggregate":
        sums = defaultdict(float, self.sums)
        counts = defaultdict(int, self.counts)
        for k, v in other.sums.items():
            sums[k] += v
            counts[k] += other.counts[k]
        return Aggregate(dict(sums), dict(counts))


def aggregate(rows, by=("controller",), metrics=SUMMARY_METRICS, arrivals_only=False):
    """Sums and counts keyed by (*group values, metric); means via ``.mean``."""
    sums, counts = defaultdict(float), defaultdict(int)
    for r in rows:
        if arrivals_only and not r.arrival:
            continue
        g = tuple(getattr(r, b) for b in by)
        for m in metrics:
            sums[g + (m,)] += getattr(r, m)
            counts[g + (m,)] += 1
    return Aggregate(dict(sums), dict(counts))


def per_angle_series(rows, metrics=("received_power_dbw", "snr_db", "t_k_ms", "rate_mbps")):
    """(controller, metric) -> sorted [(angle, mean at arrival slots)]."""
    agg = aggregate(rows, by=("controller", "angle"), metrics=metrics, arrivals_only=True)
    series = defaultdict(list)
    for (ctrl, angle, m) in sorted(agg.sums):
        series[(ctrl, m)].append((angle, agg.mean((ctrl, angle, m))))
    return dict(series)


def summary_table(rows):
    agg = aggregate(rows)
    return {k: agg.mean(k) for k in sorted(agg.sums)}


def run_sweep(cfg: ExperimentConfig, axis: str, out_dir=None, workers=None, seeds=None):
    """Cross product of axis values and controllers; tidy long-format rows."""
    if axis == "speed":
        values = list(cfg.sweep.speed)
    elif axis == "beta":
        values = [tuple(v) for v in cfg.sweep.beta]
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}; use 'speed' or 'beta'")
    if not values:
        raise ConfigError(f"sweep axis {axis!r} has no values")
    seeds = cfg.run.seeds if seeds is None else seeds

    table, all_rows = [], []
    for value in values:
        if axis == "speed":
            variant = cfg.with_overrides(scene={"speed": float(value)})
            label = f"{float(value):g}"
        else:
            b1, b2 = value
            variant = cfg.with_overrides(reward={"beta1": float(b1), "beta2": float(b2)})
            label = f"{float(b1):g}/{float(b2):g}"
        for controller in cfg.sweep.controllers:
            ckpt = None
            if controller == "ddpg":
                ckpt_dir = Path(out_dir or cfg.run.output_dir)
                ckpt_dir.mkdir(parents=True, exist_ok=True)
                ckpt = ckpt_dir / f"ddpg_{axis}_{label.replace('/', '-')}.npz"
                run_train(variant, checkpoint=ckpt)
            rows = run_eval(variant, controller, seeds, ckpt, workers)
            all_rows.extend(rows)
            for (ctrl, metric), mean in summary_table(rows).items():
                table.append({"axis": axis, "value": label, "controller": ctrl,
                              "metric": metric, "mean": mean})
    return table, all_rows
