"""Flat genotype layout: seed cells followed by per-kernel (mu, sigma, h)."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SEED_BOUNDS = (0.0, 1.0)
MU_BOUNDS = (0.0, 1.0)
SIGMA_BOUNDS = (0.001, 0.5)
H_BOUNDS = (0.0, 1.0)


@dataclass(frozen=True)
class GenomeLayout:
    seed_shape: tuple[int, int, int] = (32, 32, 3)
    n_kernels: int = 15

    @property
    def seed_size(self) -> int:
        return int(np.prod(self.seed_shape))

    @property
    def size(self) -> int:
        return self.seed_size + 3 * self.n_kernels

    @cached_property
    def lower(self) -> np.ndarray:
        lo = np.full(self.size, SEED_BOUNDS[0])
        rules = lo[self.seed_size:].reshape(self.n_kernels, 3)
        rules[:] = (MU_BOUNDS[0], SIGMA_BOUNDS[0], H_BOUNDS[0])
        lo.setflags(write=False)
        return lo

    @cached_property
    def upper(self) -> np.ndarray:
        hi = np.full(self.size, SEED_BOUNDS[1])
        rules = hi[self.seed_size:].reshape(self.n_kernels, 3)
        rules[:] = (MU_BOUNDS[1], SIGMA_BOUNDS[1], H_BOUNDS[1])
        hi.setflags(write=False)
        return hi

    def clip(self, genes: np.ndarray) -> np.ndarray:
        return np.clip(genes, self.lower, self.upper)

    def seed(self, genes: np.ndarray) -> np.ndarray:
        """Seed cells of one genotype (h, w, c) or a batch (b, h, w, c)."""
        return genes[..., : self.seed_size].reshape(*genes.shape[:-1], *self.seed_shape)

    def rule_params(self, genes: np.ndarray) -> np.ndarray:
        """(..., n_kernels, 3) view ordered (mu, sigma, h), kernel-major."""
        return genes[..., self.seed_size:].reshape(*genes.shape[:-1], self.n_kernels, 3)

    def assemble(self, seed, mu, sigma, h) -> Genotype:
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != self.seed_shape:
            raise ValueError(f"seed shape {seed.shape} != {self.seed_shape}")
        rules = np.stack([np.asarray(v, dtype=np.float64) for v in (mu, sigma, h)], axis=-1)
        if rules.shape != (self.n_kernels, 3):
            raise ValueError(f"expected {self.n_kernels} kernels, got rule shape {rules.shape}")
        return Genotype(np.concatenate([seed.ravel(), rules.ravel()]), self)


@dataclass(frozen=True, eq=False)
class Genotype:
    genes: np.ndarray
    layout: GenomeLayout = field(default_factory=GenomeLayout)

    def __post_init__(self):
        genes = np.array(self.genes, dtype=np.float64)
        if genes.shape != (self.layout.size,):
            raise ValueError(f"genotype length {genes.shape} != ({self.layout.size},)")
        genes.setflags(write=False)
        object.__setattr__(self, "genes", genes)

    @property
    def seed(self) -> np.ndarray:
        return self.layout.seed(self.genes)

    @property
    def rule_params(self) -> np.ndarray:
        return self.layout.rule_params(self.genes)

    @property
    def mu(self) -> np.ndarray:
        return self.rule_params[:, 0]

    @property
    def sigma(self) -> np.ndarray:
        return self.rule_params[:, 1]

    @property
    def h(self) -> np.ndarray:
        return self.rule_params[:, 2]

    def within_bounds(self) -> bool:
        return bool(np.all(self.genes >= self.layout.lower) and np.all(self.genes <= self.layout.upper))

    def __eq__(self, other):
        if not isinstance(other, Genotype):
            return NotImplemented
        return self.layout == other.layout and np.array_equal(self.genes, other.genes)

    def __hash__(self):
        return hash((self.layout, self.genes.tobytes()))
