"""The QD generation loop shared by MAP-Elites and AURORA runs."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..genotype import Genotype
from ..metrics import MetricsRecord, coverage, entropy_estimate, max_fitness, pixel_variance
from ..qd import (
    AddOutcome,
    DescriptorSpec,
    Individual,
    MapElitesGrid,
    UnstructuredRepertoire,
    bootstrap_threshold,
    init_population,
    iso_line_dd,
    reencode_repertoire,
    select_uniform,
)
from ..sim import Discarded, KernelBank
from .. import vae as vae_mod
from .config import RunConfig
from .evaluate import Evaluation, evaluate_batch
from .pattern import PatternFile, read_pattern

log = logging.getLogger(__name__)

METRICS_FORMAT = "lenia-qd-metrics"
METRICS_VERSION = 1
METRICS_FILE = "metrics.ndjson"
METRICS_CSV = "metrics.csv"

_PURPOSES = {"init": 0, "select": 1, "vary": 2, "train": 3, "entropy": 4}


def stream(seed: int, generation: int, purpose: str, index: int | None = None) -> np.random.Generator:
    """Counter-based generator keyed by (seed, generation, purpose[, index])."""
    key = [int(seed), int(generation), _PURPOSES[purpose]]
    if index is not None:
        key.append(int(index))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


class RunError(RuntimeError):
    pass


def metrics_header() -> str:
    return json.dumps({"format": METRICS_FORMAT, "version": METRICS_VERSION, "fields": MetricsRecord.field_names()})


def write_metrics_csv(records: list[MetricsRecord], path) -> None:
    names = MetricsRecord.field_names()
    lines = [",".join(names)]
    for r in records:
        row = asdict(r)
        lines.append(",".join("" if row[n] is None else repr(row[n]) if isinstance(row[n], float) else str(row[n]) for n in names))
    Path(path).write_text("\n".join(lines) + "\n")


def read_metrics_log(path) -> list[MetricsRecord]:
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    if header.get("format") != METRICS_FORMAT:
        raise ValueError(f"{path} is not a metrics log")
    return [MetricsRecord(**json.loads(line)) for line in lines[1:] if line]


class Experiment:
    """Owns the archive, the encoder and every counter of a run."""

    def __init__(self, config: RunConfig, out_dir=None, pattern: PatternFile | None = None):
        self.config = config.validate()
        self.pattern = pattern if pattern is not None else read_pattern(config.pattern)
        layout = config.sim.layout()
        if self.pattern.layout() != layout:
            raise RunError(
                f"pattern layout {self.pattern.layout()} does not match the simulation layout {layout}"
            )
        self.base = self.pattern.base_genotype()
        self.bank = KernelBank.build(self.pattern.kernels, config.sim)
        self.out_dir = Path(out_dir) if out_dir is not None else None

        if config.algorithm == "map_elites":
            self.archive = MapElitesGrid(DescriptorSpec.named(config.descriptor, channels=config.sim.channels), config.capacity)
            self.model = self.optimizer = None
        else:
            self.archive = UnstructuredRepertoire(config.aurora.latent_dim, config.capacity)
            self.vae_config = vae_mod.VaeConfig(
                latent_dim=config.aurora.latent_dim, features=config.aurora.features,
                input_size=32, channels=config.sim.channels,
            )
            seed = int(np.random.SeedSequence([config.rng_seed, config.aurora.init_seed]).generate_state(1)[0])
            self.model = vae_mod.make_model(self.vae_config, seed)
            self.optimizer = vae_mod.make_optimizer(self.model, config.vae)
        self.generation = -1
        self.evaluations = 0
        self.cumulative_elites = 0
        self.records: list[MetricsRecord] = []

    # ---- persistence of the metrics stream

    @property
    def metrics_path(self) -> Path | None:
        return self.out_dir / METRICS_FILE if self.out_dir else None

    def _rewrite_metrics(self) -> None:
        if not self.out_dir:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        lines = [metrics_header()] + [r.to_json() for r in self.records]
        self.metrics_path.write_text("\n".join(lines) + "\n")

    def _append_metrics(self, record: MetricsRecord) -> None:
        if not self.out_dir:
            return
        if not self.metrics_path.exists():
            self._rewrite_metrics()
            return
        with self.metrics_path.open("a") as fh:
            fh.write(record.to_json() + "\n")

    # ---- one generation

    def _offspring(self, g: int) -> list[Genotype]:
        cfg = self.config
        if g == 0:
            return init_population(self.base, cfg.batch_size, cfg.variation, stream(cfg.rng_seed, 0, "init"))
        rng = stream(cfg.rng_seed, g, "select")
        try:
            first = select_uniform(self.archive, cfg.batch_size, rng)
            second = select_uniform(self.archive, cfg.batch_size, rng)
        except Exception as exc:
            raise RunError(f"generation {g}, selection: {exc}") from exc
        out = []
        for i, (a, b) in enumerate(zip(first, second)):
            try:
                out.append(iso_line_dd(a.genotype, b.genotype, cfg.variation, stream(cfg.rng_seed, g, "vary", i)))
            except Exception as exc:
                raise RunError(f"generation {g}, offspring {i}: {exc}") from exc
        return out

    def _describe(self, survivors: list[Evaluation], g: int) -> None:
        if self.config.algorithm != "aurora" or not survivors:
            return
        try:
            descriptors, fitnesses = vae_mod.describe_crops(self.model, [ev.crops for ev in survivors])
        except Exception as exc:
            raise RunError(f"generation {g}, offspring {survivors[0].index}-{survivors[-1].index}: {exc}") from exc
        for ev, d, f in zip(survivors, descriptors, fitnesses):
            ev.descriptor = d
            if self.config.fitness == "unsupervised":
                ev.fitness = float(f)

    def _train(self, g: int) -> float | None:
        cfg = self.config
        members = self.archive.members()
        if not members:
            return None
        loss = None
        for s in range(cfg.aurora.train_steps_per_generation):
            rng = stream(cfg.rng_seed, g, "train", s)
            picks = rng.integers(0, len(members), size=cfg.vae.batch_size)
            crops = np.stack([members[i].crops[rng.integers(0, len(members[i].crops))] for i in picks])
            loss = vae_mod.train_step(self.model, self.optimizer, crops, int(rng.integers(0, 2**62)), cfg.vae)
        return loss

    def describe_members(self, crop_stacks):
        return vae_mod.describe_crops(self.model, crop_stacks)

    def step(self) -> MetricsRecord:
        cfg = self.config
        g = self.generation + 1
        started = time.perf_counter()
        offspring = self._offspring(g)
        genes = np.stack([o.genes for o in offspring])
        results = evaluate_batch(genes, cfg, self.bank, g)
        survivors = [r for r in results if isinstance(r, Evaluation)]
        discarded = len(results) - len(survivors)
        self._describe(survivors, g)

        if cfg.algorithm == "aurora" and self.archive.threshold is None and survivors:
            self.archive.threshold = bootstrap_threshold(np.stack([ev.descriptor for ev in survivors]))

        added = replaced = 0
        for ev in survivors:
            ind = Individual(
                genotype=offspring[ev.index], fitness=ev.fitness, descriptor=ev.descriptor,
                crops=ev.crops, summary=ev.summary, birth_generation=g,
            )
            outcome = self.archive.try_add(ind)
            added += outcome is AddOutcome.ADDED
            replaced += outcome is AddOutcome.REPLACED
        self.evaluations += len(results)
        self.cumulative_elites += added + replaced

        if cfg.algorithm == "aurora":
            self.archive.enforce_capacity()
            self._train(g)
            if g > 0 and cfg.aurora.reencode_every and g % cfg.aurora.reencode_every == 0 and len(self.archive):
                reencode_repertoire(self.archive, self.describe_members, update_fitness=cfg.fitness == "unsupervised")

        record = self._record(g, added, replaced, discarded)
        self.records.append(record)
        self.generation = g
        self._append_metrics(record)
        if self.out_dir and cfg.snapshot_every and g % cfg.snapshot_every == 0:
            self.save_snapshot(self.out_dir / "snapshots" / f"gen-{g:05d}.lqd")
        reasons = {}
        for r in results:
            if isinstance(r, Discarded):
                reasons[r.reason.value] = reasons.get(r.reason.value, 0) + 1
        log.info("gen %d: size=%d added=%d replaced=%d discarded=%s (%.2fs)",
                 g, len(self.archive), added, replaced, reasons, time.perf_counter() - started)
        return record

    def _record(self, g: int, added: int, replaced: int, discarded: int) -> MetricsRecord:
        cfg = self.config
        members = self.archive.members()
        entropy = None
        threshold = None
        if cfg.algorithm == "aurora":
            threshold = self.archive.threshold
            if members and cfg.aurora.entropy_every and g % cfg.aurora.entropy_every == 0:
                entropy = entropy_estimate(members, self.model, cfg.aurora.entropy_samples,
                                           stream(cfg.rng_seed, g, "entropy"), cfg.vae.decoder_variance)
        return MetricsRecord(
            generation=g,
            evaluations=self.evaluations,
            size=len(members),
            coverage=coverage(self.archive) if cfg.algorithm == "map_elites" else None,
            max_fitness=max_fitness(members) if members else None,
            pixel_variance=pixel_variance(members) if members else None,
            cumulative_elites=self.cumulative_elites,
            entropy=entropy,
            added=added,
            replaced=replaced,
            discarded=discarded,
            threshold=threshold,
        )

    # ---- driving a run

    def run(self, until: int | None = None) -> Experiment:
        until = self.config.generations if until is None else until
        if self.generation < 0 and self.out_dir:
            self._rewrite_metrics()
        while self.generation < until:
            self.step()
        if self.out_dir:
            write_metrics_csv(self.records, self.out_dir / METRICS_CSV)
            self.save_snapshot(self.out_dir / "final.lqd")
        return self

    def save_snapshot(self, path) -> Path:
        from .snapshot import snapshot_save

        return snapshot_save(self, path)

    @classmethod
    def from_snapshot(cls, path, out_dir=None, generations: int | None = None) -> Experiment:
        from .snapshot import restore_experiment

        exp = restore_experiment(path, out_dir=out_dir, generations=generations)
        exp._rewrite_metrics()
        return exp


def run(config: RunConfig, out_dir=None) -> Experiment:
    return Experiment(config, out_dir).run()


__all__ = ["Experiment", "RunError", "run", "stream", "read_metrics_log", "write_metrics_csv"]
