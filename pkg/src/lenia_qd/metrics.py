"""Archive-level metrics logged once per generation."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
import torch

from .qd.archive import AddOutcome, EmptyArchive, MissingCrops
from .vae import ConvVAE, encode_batch, gaussian_nll, to_tensor

COVARIANCE_JITTER = 1e-6


class DegenerateCovariance(np.linalg.LinAlgError):
    pass


@dataclass
class MetricsRecord:
    generation: int
    evaluations: int
    size: int
    coverage: float | None
    max_fitness: float | None
    pixel_variance: float | None
    cumulative_elites: int
    entropy: float | None = None
    added: int = 0
    replaced: int = 0
    discarded: int = 0
    threshold: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False, allow_nan=True)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _members(archive):
    return archive.members() if hasattr(archive, "members") else list(archive)


def coverage(grid) -> float:
    return len(grid) / grid.n_cells


def max_fitness(archive) -> float:
    members = _members(archive)
    if not members:
        raise EmptyArchive("max fitness of an empty archive")
    return max(m.fitness for m in members)


def representative_crops(archive) -> np.ndarray:
    members = _members(archive)
    return np.stack([m.representative_crop for m in members]).astype(np.float64)


def pixel_variance(archive) -> float:
    """Population variance across members at each pixel of the final crop, averaged over pixels."""
    members = _members(archive)
    if not members:
        raise EmptyArchive("pixel variance of an empty archive")
    for m in members:
        if m.crops is None or len(m.crops) == 0:
            raise MissingCrops("every member needs a stored crop")
    return float(representative_crops(members).var(axis=0).mean())


def count_additions(outcomes) -> int:
    return sum(1 for o in outcomes if AddOutcome(o).is_addition)


def cumulative_elites(counter: int, additions_this_generation: int) -> int:
    if additions_this_generation < 0:
        raise ValueError("additions must be >= 0")
    return counter + additions_this_generation


def diagonal_gaussian_entropy(logvar) -> np.ndarray:
    """Entropy in nats of N(., diag(exp(logvar))), per row."""
    logvar = np.asarray(logvar, dtype=np.float64)
    return 0.5 * (np.log(2 * np.pi * np.e) + logvar).sum(axis=-1)


def gaussian_fit_entropy(points: np.ndarray) -> float:
    """Entropy of a moment-matched full-covariance Gaussian, jittered by 1e-6 on the diagonal."""
    points = np.asarray(points, dtype=np.float64)
    dim = points.shape[1]
    cov = np.cov(points, rowvar=False, bias=True).reshape(dim, dim) + COVARIANCE_JITTER * np.eye(dim)
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0 or not np.isfinite(logdet):
        raise DegenerateCovariance("latent covariance is singular even after regularization")
    return float(0.5 * (dim * math.log(2 * math.pi * math.e) + logdet))


@dataclass(frozen=True)
class EntropyTerms:
    h_z: float
    h_x_given_z: float
    h_z_given_x: float

    @property
    def total(self) -> float:
        return self.h_z + self.h_x_given_z - self.h_z_given_x


@torch.no_grad()
def entropy_terms(archive, model: ConvVAE, sample_count: int, rng: np.random.Generator,
                  decoder_variance: float = 0.1) -> EntropyTerms:
    """Monte-Carlo pieces of H(X) = H(Z) + H(X|Z) - H(Z|X) over sampled members' final crops."""
    if sample_count < 2:
        raise ValueError("sample_count must be >= 2")
    members = _members(archive)
    if not members:
        raise EmptyArchive("entropy of an empty archive")
    picks = rng.integers(0, len(members), size=sample_count)
    x = np.stack([members[i].representative_crop for i in picks])
    mean, logvar = encode_batch(model, x)
    h_z_given_x = float(diagonal_gaussian_entropy(logvar).mean())

    eps = rng.standard_normal(mean.shape)
    z = mean + np.exp(0.5 * logvar) * eps
    dtype = next(model.parameters()).dtype
    recon = model.decode(torch.as_tensor(z, dtype=dtype))
    nll = gaussian_nll(to_tensor(x, dtype), recon, decoder_variance).double().numpy()
    h_x_given_z = float(nll.mean())

    h_z = gaussian_fit_entropy(mean)
    return EntropyTerms(h_z, h_x_given_z, h_z_given_x)


def entropy_estimate(archive, model: ConvVAE, sample_count: int, rng: np.random.Generator,
                     decoder_variance: float = 0.1) -> float:
    return entropy_terms(archive, model, sample_count, rng, decoder_variance).total
