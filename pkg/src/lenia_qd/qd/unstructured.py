"""Distance-thresholded unstructured repertoire with local competition."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .archive import AddOutcome, Individual, MissingCrops

# above this size the initial all-nearest-neighbour pass uses a k-d tree
_TREE_THRESHOLD = 4096


def _distances(points: np.ndarray, query: np.ndarray) -> np.ndarray:
    return np.sqrt(((points - query) ** 2).sum(axis=-1))


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    return np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1))


def bootstrap_threshold(descriptors: np.ndarray, percentile: float = 10.0) -> float:
    """Percentile of the pairwise distances of a batch; used before any pruning has happened."""
    descriptors = np.asarray(descriptors, dtype=float)
    if len(descriptors) < 2:
        return 1.0
    d = pairwise_distances(descriptors)[np.triu_indices(len(descriptors), k=1)]
    positive = d[d > 0]
    return float(np.percentile(positive, percentile)) if len(positive) else 1.0


class UnstructuredRepertoire:
    """Members plus a row-aligned descriptor matrix used for exact nearest-neighbour queries.

    Additions never prune; call ``enforce_capacity`` once a batch has been
    added. Ties never replace an incumbent.
    """

    def __init__(self, dimension: int = 8, capacity: int = 32768, threshold: float | None = None):
        self.dimension = dimension
        self.capacity = capacity
        self.threshold = threshold
        self._members: list[Individual] = []
        self._desc = np.zeros((0, dimension))

    def __len__(self) -> int:
        return len(self._members)

    def members(self) -> list[Individual]:
        return list(self._members)

    @property
    def descriptors(self) -> np.ndarray:
        return self._desc

    def _rebuild(self) -> None:
        self._desc = (
            np.stack([m.descriptor for m in self._members]) if self._members else np.zeros((0, self.dimension))
        )

    def nearest(self, descriptor) -> tuple[int, float]:
        d = _distances(self._desc, np.asarray(descriptor, dtype=float))
        i = int(np.argmin(d))
        return i, float(d[i])

    def try_add(self, ind: Individual) -> AddOutcome:
        if ind.descriptor.shape != (self.dimension,):
            raise ValueError(f"descriptor shape {ind.descriptor.shape} != ({self.dimension},)")
        if self.threshold is None:
            raise ValueError("distance threshold not initialized")
        if not self._members:
            self._append(ind)
            return AddOutcome.ADDED
        i, dist = self.nearest(ind.descriptor)
        if dist >= self.threshold:
            self._append(ind)
            return AddOutcome.ADDED
        if ind.fitness > self._members[i].fitness:
            self._members[i] = ind
            self._desc[i] = ind.descriptor
            return AddOutcome.REPLACED
        return AddOutcome.REJECTED

    def _append(self, ind: Individual) -> None:
        self._members.append(ind)
        self._desc = np.vstack([self._desc, ind.descriptor[None]])

    def _all_nearest(self) -> tuple[np.ndarray, np.ndarray]:
        n = len(self._members)
        if n > _TREE_THRESHOLD:
            dist, idx = cKDTree(self._desc).query(self._desc, k=2)
            return dist[:, 1].copy(), idx[:, 1].copy()
        nn_d = np.empty(n)
        nn_i = np.empty(n, dtype=int)
        for i in range(n):
            d = _distances(self._desc, self._desc[i])
            d[i] = np.inf
            nn_i[i] = int(np.argmin(d))
            nn_d[i] = d[nn_i[i]]
        return nn_d, nn_i

    def enforce_capacity(self) -> list[Individual]:
        """Drop the lower-fitness member of the closest pair until size == capacity.

        Returns the removed members. If anything was removed the threshold is
        recalibrated to the smallest nearest-neighbour distance left.
        """
        n = len(self._members)
        if n <= self.capacity:
            return []
        fitness = np.array([m.fitness for m in self._members])
        nn_d, nn_i = self._all_nearest()
        alive = np.ones(n, dtype=bool)
        removed = []
        while alive.sum() > self.capacity:
            i = int(np.argmin(np.where(alive, nn_d, np.inf)))
            j = int(nn_i[i])
            a, b = min(i, j), max(i, j)
            loser = a if fitness[a] < fitness[b] else b
            alive[loser] = False
            removed.append(loser)
            for k in np.flatnonzero(alive & (nn_i == loser)):
                d = _distances(self._desc, self._desc[k])
                d[~alive] = np.inf
                d[k] = np.inf
                nn_i[k] = int(np.argmin(d))
                nn_d[k] = d[nn_i[k]]
        out = [self._members[k] for k in sorted(removed)]
        self._members = [m for m, keep in zip(self._members, alive) if keep]
        self._rebuild()
        self.recalibrate_threshold()
        return out

    def nearest_neighbour_distances(self) -> np.ndarray:
        if len(self._members) < 2:
            return np.zeros(0)
        return self._all_nearest()[0]

    def recalibrate_threshold(self) -> None:
        nn = self.nearest_neighbour_distances()
        positive = nn[nn > 0]
        if len(positive):
            self.threshold = float(positive.min())


DescribeFn = Callable[[Sequence[np.ndarray]], tuple[np.ndarray, np.ndarray]]


def reencode_repertoire(rep: UnstructuredRepertoire, describe: DescribeFn, update_fitness: bool = True) -> UnstructuredRepertoire:
    """Recompute every member's descriptor (and optionally fitness) from its stored crops.

    ``describe`` maps a list of per-member crop stacks to (descriptors, fitnesses).
    Mutates and returns ``rep``.
    """
    members = rep.members()
    for m in members:
        if m.crops is None or len(m.crops) == 0:
            raise MissingCrops("every member needs stored crops to be re-encoded")
    if members:
        descriptors, fitnesses = describe([m.crops for m in members])
        for m, d, f in zip(members, descriptors, fitnesses):
            m.descriptor = np.asarray(d, dtype=np.float64)
            if update_fitness:
                m.fitness = float(f)
    rep._rebuild()
    rep.enforce_capacity()
    rep.recalibrate_threshold()
    return rep


def try_add_unstructured(rep: UnstructuredRepertoire, ind: Individual) -> AddOutcome:
    return rep.try_add(ind)
