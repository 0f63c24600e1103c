"""iso+LineDD variation and isotropic population initialization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..genotype import Genotype


@dataclass(frozen=True)
class VariationParams:
    sigma1: float = 0.005
    sigma2: float = 0.05

    def __post_init__(self):
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("variation scales must be >= 0")


def iso_line_dd(x1: Genotype, x2: Genotype, params: VariationParams, rng: np.random.Generator) -> Genotype:
    """x1 + sigma1 N(0, I) + sigma2 (x2 - x1) N(0, 1), clipped to gene bounds.

    Draw order is fixed (per-gene noise first, then the line scalar), so the
    offspring depends only on the parents and the generator state.
    """
    if x1.layout != x2.layout:
        raise ValueError("parents have different genome layouts")
    iso = rng.standard_normal(x1.genes.shape)
    line = rng.standard_normal()
    genes = x1.genes + params.sigma1 * iso + params.sigma2 * (x2.genes - x1.genes) * line
    return Genotype(x1.layout.clip(genes), x1.layout)


def init_population(base: Genotype, count: int, params: VariationParams, rng: np.random.Generator) -> list[Genotype]:
    layout = base.layout
    return [
        Genotype(layout.clip(base.genes + params.sigma1 * rng.standard_normal(base.genes.shape)), layout)
        for _ in range(count)
    ]
