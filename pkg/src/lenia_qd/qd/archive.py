"""Shared archive vocabulary: descriptors, individuals, addition outcomes, selection."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ..genotype import Genotype


class EmptyArchive(ValueError):
    pass


class MissingCrops(ValueError):
    pass


class AddOutcome(enum.Enum):
    ADDED = "added"
    REPLACED = "replaced"
    REJECTED = "rejected"

    @property
    def is_addition(self) -> bool:
        return self is not AddOutcome.REJECTED


class DescriptorKind(enum.Enum):
    COLOR = "color"
    MASS_VELOCITY = "mass_velocity"
    ANGLE_VELOCITY = "angle_velocity"
    UNSUPERVISED = "unsupervised"


@dataclass(frozen=True)
class DescriptorSpec:
    kind: DescriptorKind
    bounds: tuple[tuple[float, float], ...]

    @property
    def dimension(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds], dtype=float)

    @classmethod
    def color(cls, channels: int = 3) -> DescriptorSpec:
        return cls(DescriptorKind.COLOR, ((0.0, 1.0),) * channels)

    @classmethod
    def mass_velocity(cls) -> DescriptorSpec:
        return cls(DescriptorKind.MASS_VELOCITY, ((0.0, 16.0), (0.0, 0.5)))

    @classmethod
    def angle_velocity(cls) -> DescriptorSpec:
        return cls(DescriptorKind.ANGLE_VELOCITY, ((-math.pi, math.pi), (0.0, 0.5)))

    @classmethod
    def unsupervised(cls, latent_dim: int = 8) -> DescriptorSpec:
        # bounds are not used for binning; they track the latent range seen so far
        return cls(DescriptorKind.UNSUPERVISED, ((-math.inf, math.inf),) * latent_dim)

    @classmethod
    def named(cls, kind: str | DescriptorKind, latent_dim: int = 8, channels: int = 3) -> DescriptorSpec:
        kind = DescriptorKind(kind)
        if kind is DescriptorKind.COLOR:
            return cls.color(channels)
        if kind is DescriptorKind.MASS_VELOCITY:
            return cls.mass_velocity()
        if kind is DescriptorKind.ANGLE_VELOCITY:
            return cls.angle_velocity()
        return cls.unsupervised(latent_dim)


@dataclass(eq=False)
class Individual:
    genotype: Genotype
    fitness: float
    descriptor: np.ndarray
    crops: np.ndarray | None = None  # (k, h, w, C) float32, oldest first
    summary: dict = field(default_factory=dict)
    birth_generation: int = 0

    def __post_init__(self):
        self.descriptor = np.asarray(self.descriptor, dtype=np.float64)
        self.fitness = float(self.fitness)

    @property
    def representative_crop(self) -> np.ndarray:
        if self.crops is None or len(self.crops) == 0:
            raise MissingCrops("individual has no stored crops")
        return self.crops[-1]

    def same_as(self, other: Individual) -> bool:
        return (
            self.genotype == other.genotype
            and self.fitness == other.fitness
            and np.array_equal(self.descriptor, other.descriptor)
            and self.birth_generation == other.birth_generation
            and self.summary == other.summary
            and (
                (self.crops is None and other.crops is None)
                or (self.crops is not None and other.crops is not None and np.array_equal(self.crops, other.crops))
            )
        )


def select_uniform(archive, count: int, rng: np.random.Generator) -> list[Individual]:
    """``count`` independent uniform draws, with replacement, over the archive's members."""
    members = archive.members() if hasattr(archive, "members") else list(archive)
    if not members:
        raise EmptyArchive("cannot select from an empty archive")
    return [members[i] for i in rng.integers(0, len(members), size=count)]
