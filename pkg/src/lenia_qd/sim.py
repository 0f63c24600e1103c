"""Multi-channel, multi-kernel Lenia on a toroidal lattice.

The hot path works on (B, C, H, W) float32 stacks: one forward FFT per
channel, one inverse FFT per kernel, growth mappings evaluated per genome.
Kernel geometry (radius, beta, wiring) is shared by all genomes, so kernel
spectra are computed once per bank and reused.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
import scipy.fft as sfft

from .genotype import GenomeLayout, Genotype
from .measures import (
    BatchStats,
    GrowthConstraints,
    GrowthVerdict,
    PhenotypeCrop,
    StatsSeries,
    batch_crops,
    batch_stats,
    verdict_codes,
)

CORE_ALPHA = 4.0
DTYPE = np.float32


class ZeroKernel(ValueError):
    pass


class SeedTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    space_resolution: int = 12
    time_resolution: int = 2
    world_height: int = 128
    world_width: int = 128
    channels: int = 3
    steps: int = 200
    seed_height: int = 32
    seed_width: int = 32

    def __post_init__(self):
        if self.space_resolution <= 0 or self.time_resolution <= 0:
            raise ValueError("space and time resolution must be positive")
        if self.world_height < self.seed_height or self.world_width < self.seed_width:
            raise ValueError("world must be at least as large as the seed")
        if self.channels < 1 or self.steps < 1:
            raise ValueError("need >= 1 channel and >= 1 step")

    @property
    def dt(self) -> Fraction:
        return Fraction(1, self.time_resolution)

    @property
    def world_shape(self) -> tuple[int, int]:
        return (self.world_height, self.world_width)

    @property
    def n_kernels(self) -> int:
        return len(kernel_wiring(self.channels))

    def layout(self) -> GenomeLayout:
        return GenomeLayout((self.seed_height, self.seed_width, self.channels), self.n_kernels)


def kernel_wiring(channels: int) -> list[tuple[int, int]]:
    """(source, target) per kernel: 3 self kernels per channel, then ordered cross pairs."""
    self_kernels = [(c, c) for c in range(channels) for _ in range(3)]
    cross = [(i, j) for i in range(channels) for j in range(channels) if i != j]
    return self_kernels + cross


@dataclass(frozen=True)
class KernelSpec:
    radius: float
    beta: tuple[float, ...]
    mu: float
    sigma: float
    h: float
    source: int
    target: int

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if not 0 < self.radius <= 1:
            raise ValueError(f"relative radius must be in (0, 1], got {self.radius}")
        if not self.beta or any(not 0 <= b <= 1 for b in self.beta):
            raise ValueError(f"beta entries must be in [0, 1], got {self.beta}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.h < 0:
            raise ValueError(f"h must be >= 0, got {self.h}")


def kernel_core(r):
    """Exponential bump exp(a - a / (4 r (1 - r))), zero at and beyond the ends of [0, 1]."""
    r = np.asarray(r, dtype=np.float64)
    inside = (r > 0) & (r < 1)
    q = np.where(inside, 4 * r * (1 - r), 1.0)
    out = np.where(inside, np.exp(CORE_ALPHA - CORE_ALPHA / q), 0.0)
    return out if out.ndim else float(out)


def build_kernel(spec: KernelSpec, config: SimConfig) -> np.ndarray:
    """Normalized (2k+1, 2k+1) kernel, centered, float64."""
    support = spec.radius * config.space_resolution
    half = int(math.ceil(support))
    offsets = np.arange(-half, half + 1)
    dist = np.hypot(offsets[:, None], offsets[None, :]) / support
    n_rings = len(spec.beta)
    br = n_rings * dist
    ring = np.minimum(np.floor(br).astype(int), n_rings - 1)
    beta = np.asarray(spec.beta)
    values = np.where(dist < 1, beta[ring] * kernel_core(np.mod(br, 1.0)), 0.0)
    total = values.sum()
    if total <= 0:
        raise ZeroKernel(f"kernel has no positive weight: {spec}")
    return values / total


def kernel_to_world(kernel: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Place a centered kernel on the torus with its center at the origin."""
    kh, kw = kernel.shape
    rows = np.mod(np.arange(kh) - kh // 2, shape[0])
    cols = np.mod(np.arange(kw) - kw // 2, shape[1])
    out = np.zeros(shape)
    np.add.at(out, np.ix_(rows, cols), kernel)
    return out


def circular_convolve(a: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """FFT circular convolution of an (H, W) field with a centered kernel, float32 path."""
    a = np.asarray(a, dtype=DTYPE)
    spectrum = sfft.rfft2(kernel_to_world(kernel, a.shape).astype(DTYPE))
    return sfft.irfft2(sfft.rfft2(a) * spectrum, s=a.shape)


def growth(u, mu, sigma):
    """Gaussian growth mapping 2 exp(-((u - mu) / sigma)^2 / 2) - 1."""
    z = (np.asarray(u) - mu) / sigma
    out = 2 * np.exp(-0.5 * z * z) - 1
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True, eq=False)
class KernelBank:
    kernels: tuple[KernelSpec, ...]
    discrete_kernels: tuple[np.ndarray, ...]
    spectra: np.ndarray
    shape: tuple[int, int]
    channels: int

    @classmethod
    def build(cls, kernels, config: SimConfig) -> KernelBank:
        kernels = tuple(kernels)
        for k in kernels:
            if not (0 <= k.source < config.channels and 0 <= k.target < config.channels):
                raise ValueError(f"kernel channels out of range for c={config.channels}: {k}")
        discrete = tuple(build_kernel(k, config) for k in kernels)
        for d in discrete:
            d.setflags(write=False)
        spectra = np.stack(
            [sfft.rfft2(kernel_to_world(d, config.world_shape).astype(DTYPE)) for d in discrete]
        )
        spectra.setflags(write=False)
        return cls(kernels, discrete, spectra, config.world_shape, config.channels)

    def with_rule_params(self, mu, sigma, h) -> KernelBank:
        """Same geometry and spectra, new (mu, sigma, h) per kernel."""
        kernels = tuple(
            replace(k, mu=float(m), sigma=float(s), h=float(w))
            for k, m, s, w in zip(self.kernels, mu, sigma, h)
        )
        return replace(self, kernels=kernels)

    @property
    def sources(self) -> np.ndarray:
        return np.array([k.source for k in self.kernels])

    @property
    def targets(self) -> np.ndarray:
        return np.array([k.target for k in self.kernels])

    @property
    def mu(self) -> np.ndarray:
        return np.array([k.mu for k in self.kernels])

    @property
    def sigma(self) -> np.ndarray:
        return np.array([k.sigma for k in self.kernels])

    @property
    def h(self) -> np.ndarray:
        return np.array([k.h for k in self.kernels])

    @property
    def per_target_normalizer_h(self) -> np.ndarray:
        return target_normalizer(self.h, self.targets, self.channels)


def target_normalizer(h: np.ndarray, targets: np.ndarray, channels: int) -> np.ndarray:
    """Sum of h over the kernels writing to each target channel; h has trailing axis K."""
    onehot = targets[:, None] == np.arange(channels)[None, :]
    return np.asarray(h) @ onehot


def kernel_weights(h: np.ndarray, targets: np.ndarray, channels: int) -> np.ndarray:
    """h_k divided by its target's normalizer; 0 for channels with no weight at all."""
    h = np.asarray(h, dtype=np.float64)
    norm = target_normalizer(h, targets, channels)[..., targets]
    return np.divide(h, norm, out=np.zeros_like(h), where=norm > 0)


def update_cells(cells, spectra, sources, targets, mu, sigma, weights, dt) -> np.ndarray:
    """One Lenia update of a (B, C, H, W) stack; per-genome rule arrays are (B, K)."""
    b, channels, height, width = cells.shape
    n_kernels = len(sources)
    g = sfft.irfft2(sfft.rfft2(cells)[:, sources] * spectra, s=(height, width))
    g -= np.asarray(mu, dtype=DTYPE)[..., None, None]
    g *= (1 / np.asarray(sigma, dtype=DTYPE))[..., None, None]
    np.square(g, out=g)
    g *= DTYPE(-0.5)
    np.exp(g, out=g)
    # sum_k w_k (2 g_k - 1) per target, as one (C, K) @ (K, HW) product per genome
    wdt = np.asarray(weights, dtype=np.float64) * dt
    wdt = np.broadcast_to(wdt, (b, n_kernels))
    onehot = targets[None, :] == np.arange(channels)[:, None]
    mix = (2 * wdt[:, None, :] * onehot[None]).astype(DTYPE)
    offset = (wdt[:, None, :] * onehot[None]).sum(axis=2).astype(DTYPE)
    delta = np.matmul(mix, g.reshape(b, n_kernels, height * width))
    delta -= offset[..., None]
    out = cells + delta.reshape(b, channels, height, width)
    np.clip(out, 0, 1, out=out)
    return out


@dataclass(frozen=True, eq=False)
class WorldState:
    cells: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=DTYPE)
        if cells.ndim != 3:
            raise ValueError(f"cells must be (H, W, C), got {cells.shape}")
        object.__setattr__(self, "cells", cells)

    @property
    def mass(self) -> float:
        return float(self.cells.sum(dtype=np.float64))


def step(world: WorldState, bank: KernelBank, dt) -> WorldState:
    cells = np.ascontiguousarray(np.moveaxis(world.cells, -1, 0))[None]
    weights = kernel_weights(bank.h, bank.targets, bank.channels)
    out = update_cells(cells, bank.spectra, bank.sources, bank.targets,
                       bank.mu[None], bank.sigma[None], weights[None], float(dt))
    return WorldState(np.moveaxis(out[0], 0, -1), world.time + float(dt))


def embed_seed(seed, config: SimConfig) -> WorldState:
    seed = np.asarray(seed, dtype=DTYPE)
    h, w = seed.shape[:2]
    if h > config.world_height or w > config.world_width:
        raise SeedTooLarge(f"seed {seed.shape[:2]} exceeds world {config.world_shape}")
    cells = np.zeros((config.world_height, config.world_width, seed.shape[2]), dtype=DTYPE)
    top = (config.world_height - h) // 2
    left = (config.world_width - w) // 2
    cells[top: top + h, left: left + w] = seed
    return WorldState(cells, 0.0)


@dataclass(frozen=True)
class RetentionPolicy:
    """Crop every ``stride``-th post-developmental step, counted back from the last step."""

    stride: int = 8
    crop_size: tuple[int, int] = (32, 32)
    keep_worlds: bool = False

    def retained_steps(self, steps: int, discard_n: int) -> list[int]:
        return [t for t in range(discard_n + 1, steps + 1) if (steps - t) % self.stride == 0]


@dataclass(frozen=True)
class Discarded:
    reason: GrowthVerdict
    step: int


@dataclass
class Trajectory:
    config: SimConfig
    crops: list[PhenotypeCrop]
    stats: StatsSeries
    worlds: list[tuple[int, WorldState]] = field(default_factory=list)

    def lenia_stats(self) -> StatsSeries:
        return self.stats.scaled(self.config.space_resolution)

    @property
    def crop_array(self) -> np.ndarray:
        return np.stack([c.pixels for c in self.crops])


def rollout(genotype: Genotype, config: SimConfig, constraints: GrowthConstraints,
            retain: RetentionPolicy, bank: KernelBank) -> Trajectory | Discarded:
    return rollout_batch(genotype.genes[None], config, constraints, retain, bank)[0]


_STAT_COLUMNS = ("mass", "center", "velocity", "angle", "speed", "angular_velocity", "color", "spread", "degenerate")


def rollout_batch(genes: np.ndarray, config: SimConfig, constraints: GrowthConstraints,
                  retain: RetentionPolicy, bank: KernelBank) -> list[Trajectory | Discarded]:
    """Simulate a batch of genotypes sharing ``bank``'s kernel geometry.

    Growth constraints are checked in Lenia units on every step after
    ``constraints.discard_n``; failing genomes drop out of the batch at once.
    """
    genes = np.atleast_2d(np.asarray(genes, dtype=np.float64))
    if constraints.discard_n >= config.steps:
        raise ValueError("steps must exceed discard_n")
    layout = config.layout()
    n_batch = len(genes)
    R = config.space_resolution
    dt = float(config.dt)
    steps = config.steps

    rules = layout.rule_params(genes)
    mu, sigma = rules[..., 0], rules[..., 1]
    weights = kernel_weights(rules[..., 2], bank.targets, bank.channels)
    sources, targets = bank.sources, bank.targets

    seeds = layout.seed(genes)
    cells = np.stack([np.moveaxis(embed_seed(s, config).cells, -1, 0) for s in seeds])
    prev: BatchStats = batch_stats(cells, None, dt)

    columns = {
        "mass": np.zeros((n_batch, steps)),
        "center": np.zeros((n_batch, steps, 2)),
        "velocity": np.zeros((n_batch, steps, 2)),
        "angle": np.zeros((n_batch, steps)),
        "speed": np.zeros((n_batch, steps)),
        "angular_velocity": np.zeros((n_batch, steps)),
        "color": np.zeros((n_batch, steps, config.channels)),
        "spread": np.zeros((n_batch, steps)),
        "degenerate": np.zeros((n_batch, steps), dtype=bool),
    }
    crops: list[list[PhenotypeCrop]] = [[] for _ in range(n_batch)]
    worlds: list[list[tuple[int, WorldState]]] = [[] for _ in range(n_batch)]
    results: list[Trajectory | Discarded | None] = [None] * n_batch
    alive = np.arange(n_batch)

    if retain.keep_worlds:
        for i in alive:
            worlds[i].append((0, WorldState(np.moveaxis(cells[i], 0, -1).copy(), 0.0)))

    for t in range(1, steps + 1):
        cells = update_cells(cells, bank.spectra, sources, targets,
                             mu[alive], sigma[alive], weights[alive], dt)
        stats = batch_stats(cells, prev, dt)
        for name in _STAT_COLUMNS:
            columns[name][alive, t - 1] = getattr(stats, name)

        if t > constraints.discard_n:
            codes = verdict_codes(stats.mass / R**2, stats.spread / R, stats.degenerate, constraints)
            failed = codes != GrowthVerdict.KEEP
            if failed.any():
                for j in np.flatnonzero(failed):
                    results[alive[j]] = Discarded(codes[j], t)
                keep = ~failed
                alive, cells, stats = alive[keep], cells[keep], stats.take(keep)
                if not len(alive):
                    break
            if (steps - t) % retain.stride == 0:
                batch = batch_crops(cells, stats.center, retain.crop_size)
                for j, i in enumerate(alive):
                    crops[i].append(PhenotypeCrop(batch[j], t))
        if retain.keep_worlds and t % retain.stride == 0:
            for j, i in enumerate(alive):
                worlds[i].append((t, WorldState(np.moveaxis(cells[j], 0, -1).copy(), t * dt)))
        prev = stats

    for i in alive:
        series = StatsSeries(
            steps=np.arange(1, steps + 1),
            discard_n=constraints.discard_n,
            **{name: columns[name][i] for name in _STAT_COLUMNS},
        )
        results[i] = Trajectory(config, crops[i], series, worlds[i])
    return results
