"""MAP-Elites grid over a bounded descriptor space."""
from __future__ import annotations

import numpy as np

from .archive import AddOutcome, DescriptorSpec, Individual


def resolution_for(capacity: int, dimension: int) -> int:
    """Largest r with r**dimension <= capacity."""
    r = max(1, int(round(capacity ** (1 / dimension))))
    while r**dimension > capacity:
        r -= 1
    while (r + 1) ** dimension <= capacity:
        r += 1
    return r


def grid_cell(descriptor, spec: DescriptorSpec, resolution) -> tuple[int, ...]:
    descriptor = np.asarray(descriptor, dtype=float)
    if descriptor.shape != (spec.dimension,):
        raise ValueError(f"descriptor shape {descriptor.shape} does not match spec dimension {spec.dimension}")
    res = np.broadcast_to(np.asarray(resolution), (spec.dimension,))
    lo, hi = spec.lower, spec.upper
    v = np.clip(np.where(np.isnan(descriptor), lo, descriptor), lo, hi)
    bins = np.floor((v - lo) / (hi - lo) * res).astype(int)
    return tuple(int(b) for b in np.minimum(bins, res - 1))


def grid_index(descriptor, spec: DescriptorSpec, resolution) -> int:
    res = tuple(int(r) for r in np.broadcast_to(np.asarray(resolution), (spec.dimension,)))
    return int(np.ravel_multi_index(grid_cell(descriptor, spec, res), res))


class MapElitesGrid:
    def __init__(self, spec: DescriptorSpec, capacity: int = 32768, resolution=None):
        self.spec = spec
        self.capacity = capacity
        if resolution is None:
            resolution = resolution_for(capacity, spec.dimension)
        self.resolution = tuple(int(r) for r in np.broadcast_to(np.asarray(resolution), (spec.dimension,)))
        self.cells: dict[int, Individual] = {}

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.resolution))

    def index(self, descriptor) -> int:
        return grid_index(descriptor, self.spec, self.resolution)

    def try_add(self, ind: Individual) -> AddOutcome:
        key = self.index(ind.descriptor)
        incumbent = self.cells.get(key)
        if incumbent is None:
            self.cells[key] = ind
            return AddOutcome.ADDED
        if ind.fitness > incumbent.fitness:
            self.cells[key] = ind
            return AddOutcome.REPLACED
        return AddOutcome.REJECTED

    def get(self, descriptor) -> Individual | None:
        return self.cells.get(self.index(descriptor))

    def members(self) -> list[Individual]:
        return [self.cells[k] for k in sorted(self.cells)]

    def keys(self) -> list[int]:
        return sorted(self.cells)

    def __len__(self) -> int:
        return len(self.cells)


def try_add_grid(grid: MapElitesGrid, ind: Individual) -> AddOutcome:
    return grid.try_add(ind)
