"""Batch evaluation: rollouts, summary statistics, fitness and descriptors."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..measures import Aggregator, Measure, StatsSeries, summarize
from ..sim import Discarded, KernelBank, RetentionPolicy, Trajectory, rollout_batch
from .config import RunConfig

WORKERS_ENV = "LENIA_QD_WORKERS"


class EvaluationError(RuntimeError):
    pass


def worker_count() -> int:
    value = os.environ.get(WORKERS_ENV)
    if value:
        return max(1, int(value))
    return os.cpu_count() or 1


@dataclass
class Evaluation:
    """A surviving offspring before archive insertion; descriptor may await the encoder."""

    index: int
    summary: dict
    crops: np.ndarray
    fitness: float | None
    descriptor: np.ndarray | None


def summary_statistics(series: StatsSeries) -> dict:
    s = series
    return {
        "mass_mean": summarize(s, Measure.MASS, Aggregator.MEAN),
        "mass_var": summarize(s, Measure.MASS, Aggregator.VARIANCE),
        "velocity_mean": summarize(s, Measure.VELOCITY, Aggregator.MEAN),
        "velocity_var": summarize(s, Measure.VELOCITY, Aggregator.VARIANCE),
        "angle_mean": summarize(s, Measure.ANGLE, Aggregator.MEAN),
        "angle_var": summarize(s, Measure.ANGLE, Aggregator.VARIANCE),
        "angular_velocity_mean": summarize(s, Measure.ANGULAR_VELOCITY, Aggregator.MEAN),
        "color_mean": [float(c) for c in summarize(s, Measure.COLOR, Aggregator.MEAN)],
    }


MANUAL_FITNESS = {
    "velocity_avg": lambda s: s["velocity_mean"],
    "velocity": lambda s: s["velocity_mean"],
    "mass_avg": lambda s: s["mass_mean"],
    "mass_var": lambda s: s["mass_var"],
    "neg_mass_var": lambda s: -s["mass_var"],
    "neg_mass": lambda s: -s["mass_mean"],
    "neg_angle_var": lambda s: -s["angle_var"],
}

MANUAL_DESCRIPTOR = {
    "color": lambda s: np.array(s["color_mean"]),
    "mass_velocity": lambda s: np.array([s["mass_mean"], s["velocity_mean"]]),
    "angle_velocity": lambda s: np.array([s["angle_mean"], s["velocity_mean"]]),
}


def _evaluate_trajectory(index: int, traj: Trajectory, config: RunConfig) -> Evaluation:
    summary = summary_statistics(traj.lenia_stats())
    fitness = MANUAL_FITNESS[config.fitness](summary) if config.fitness in MANUAL_FITNESS else None
    descriptor = MANUAL_DESCRIPTOR[config.descriptor](summary) if config.descriptor in MANUAL_DESCRIPTOR else None
    return Evaluation(index, summary, traj.crop_array, fitness, descriptor)


def evaluate_batch(genes: np.ndarray, config: RunConfig, bank: KernelBank, generation: int,
                   workers: int | None = None) -> list[Evaluation | Discarded]:
    """Evaluate offspring in fixed-size chunks; results are in offspring order.

    Chunking is fixed by ``config.eval_chunk`` so the arithmetic does not
    depend on how many workers run the chunks.
    """
    retain = RetentionPolicy(stride=config.retention.stride)
    chunk = config.eval_chunk
    starts = list(range(0, len(genes), chunk))

    def run(start: int):
        try:
            return rollout_batch(genes[start: start + chunk], config.sim, config.constraints, retain, bank)
        except Exception as exc:
            stop = min(start + chunk, len(genes)) - 1
            raise EvaluationError(f"generation {generation}, offspring {start}-{stop}: {exc}") from exc

    workers = workers or worker_count()
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, starts))
    else:
        chunks = [run(s) for s in starts]

    out: list[Evaluation | Discarded] = []
    for start, results in zip(starts, chunks):
        for offset, res in enumerate(results):
            index = start + offset
            if isinstance(res, Discarded):
                out.append(res)
                continue
            try:
                out.append(_evaluate_trajectory(index, res, config))
            except Exception as exc:
                raise EvaluationError(f"generation {generation}, offspring {index}: {exc}") from exc
    return out
