"""Statistical measures over Lenia world states.

Per-step quantities are in site units (mass = sum of cell values, lengths in
sites, velocities in sites per time unit). ``StatsSeries.scaled`` converts a
series into Lenia pattern units (mass / R**2, lengths / R), which is the scale
used by growth constraints, fitnesses and descriptors.

All world-level functions accept either an (H, W, C) array or any object with
a ``cells`` attribute holding one. The batched kernels work on (B, C, H, W)
stacks and are what the rollout uses.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

# resultant length / mass below which a circular mean is treated as undefined
_DEGENERATE_RESULTANT = 1e-9


class ZeroMass(ValueError):
    pass


class SeriesTooShort(ValueError):
    pass


class GrowthVerdict(enum.Enum):
    KEEP = "keep"
    EVAPORATED = "evaporated"
    EXPLODED = "exploded"
    TOO_SPREAD = "too_spread"


class Measure(enum.Enum):
    MASS = "mass"
    VELOCITY = "velocity"
    ANGLE = "angle"
    ANGULAR_VELOCITY = "angular_velocity"
    COLOR = "color"
    SPREAD = "spread"


class Aggregator(enum.Enum):
    MEAN = "mean"
    VARIANCE = "variance"


@dataclass(frozen=True)
class GrowthConstraints:
    discard_n: int = 50
    m_min: float = 0.1
    m_max: float = math.inf
    sigma_m_max: float = math.inf

    def __post_init__(self):
        if not 0 <= self.m_min <= self.m_max:
            raise ValueError(f"need 0 <= m_min <= m_max, got {self.m_min}, {self.m_max}")
        if self.discard_n < 0:
            raise ValueError("discard_n must be >= 0")

    @classmethod
    def map_elites(cls) -> GrowthConstraints:
        return cls(discard_n=50, m_min=0.1, m_max=math.inf)

    @classmethod
    def aurora(cls) -> GrowthConstraints:
        return cls(discard_n=184, m_min=0.1, m_max=4.0)


@dataclass(frozen=True)
class StepStats:
    mass: float
    center: np.ndarray
    velocity: np.ndarray
    angle: float
    speed: float
    angular_velocity: float
    color: np.ndarray
    spread: float = math.nan
    degenerate: bool = False


@dataclass(frozen=True)
class PhenotypeCrop:
    pixels: np.ndarray
    source_step: int


@dataclass
class BatchStats:
    """Stats of one step for a batch of worlds; every field has leading axis B."""

    mass: np.ndarray
    center: np.ndarray
    velocity: np.ndarray
    angle: np.ndarray
    speed: np.ndarray
    angular_velocity: np.ndarray
    color: np.ndarray
    spread: np.ndarray
    degenerate: np.ndarray

    def take(self, idx) -> BatchStats:
        return BatchStats(**{k: v[idx] for k, v in self.__dict__.items()})

    def row(self, i: int) -> StepStats:
        return StepStats(
            mass=float(self.mass[i]),
            center=self.center[i].copy(),
            velocity=self.velocity[i].copy(),
            angle=float(self.angle[i]),
            speed=float(self.speed[i]),
            angular_velocity=float(self.angular_velocity[i]),
            color=self.color[i].copy(),
            spread=float(self.spread[i]),
            degenerate=bool(self.degenerate[i]),
        )


_SERIES_FIELDS = (
    "mass", "center", "velocity", "angle", "speed",
    "angular_velocity", "color", "spread", "degenerate",
)


@dataclass
class StatsSeries:
    """Column-oriented per-step stats. ``steps[i]`` is the step index of row i."""

    steps: np.ndarray
    mass: np.ndarray
    center: np.ndarray
    velocity: np.ndarray
    angle: np.ndarray
    speed: np.ndarray
    angular_velocity: np.ndarray
    color: np.ndarray
    spread: np.ndarray
    degenerate: np.ndarray
    discard_n: int = 0
    units: str = field(default="sites")

    def __len__(self) -> int:
        return len(self.steps)

    @classmethod
    def from_steps(cls, stats: list[StepStats], discard_n: int, first_step: int = 1) -> StatsSeries:
        cols = {
            name: np.array([getattr(s, name) for s in stats], dtype=bool if name == "degenerate" else float)
            for name in _SERIES_FIELDS
        }
        if not stats:
            cols["center"] = cols["center"].reshape(0, 2)
            cols["velocity"] = cols["velocity"].reshape(0, 2)
            cols["color"] = cols["color"].reshape(0, 0)
        steps = np.arange(first_step, first_step + len(stats))
        return cls(steps=steps, discard_n=discard_n, **cols)

    def at(self, i: int) -> StepStats:
        return StepStats(**{name: getattr(self, name)[i] for name in _SERIES_FIELDS})

    def post_developmental(self) -> np.ndarray:
        return self.steps > self.discard_n

    def window(self) -> StatsSeries:
        """Rows with step > discard_n."""
        mask = self.post_developmental()
        cols = {name: getattr(self, name)[mask] for name in _SERIES_FIELDS}
        return replace(self, steps=self.steps[mask], **cols)

    def scaled(self, R: float) -> StatsSeries:
        if self.units != "sites":
            raise ValueError(f"series already in {self.units} units")
        return replace(
            self,
            mass=self.mass / R**2,
            center=self.center / R,
            velocity=self.velocity / R,
            speed=self.speed / R,
            spread=self.spread / R,
            units="lenia",
        )


def _cells(world) -> np.ndarray:
    cells = getattr(world, "cells", world)
    cells = np.asarray(cells)
    if cells.ndim != 3:
        raise ValueError(f"expected (H, W, C) cells, got shape {cells.shape}")
    return cells


def _as_batch(cells_hwc: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(cells_hwc, -1, 0))[None]


def wrap_displacement(delta, length):
    """Minimal signed toroidal displacement, in [-L/2, L/2)."""
    return np.mod(np.asarray(delta, dtype=float) + length / 2, length) - length / 2


def wrap_angle(delta):
    """Minimal signed angle difference, in (-pi, pi]."""
    return math.pi - np.mod(math.pi - np.asarray(delta, dtype=float), 2 * math.pi)


def _circular_coordinate(weights: np.ndarray, total: np.ndarray):
    """Weighted circular mean along the last axis of (B, L) marginals."""
    length = weights.shape[-1]
    theta = 2 * np.pi * np.arange(length) / length
    s = weights @ np.sin(theta)
    c = weights @ np.cos(theta)
    resultant = np.hypot(s, c)
    ok = resultant > _DEGENERATE_RESULTANT * np.maximum(total, 1e-300)
    coord = np.mod(np.arctan2(s, c) * length / (2 * np.pi), length)
    return np.where(ok, coord, 0.0), ok


def marginals(cells_bchw: np.ndarray):
    """Channel masses (B, C), row masses (B, H), column masses (B, W), total (B,)."""
    a = cells_bchw.astype(np.float64, copy=False)
    per_channel_rows = a.sum(axis=3)  # (B, C, H)
    channel = per_channel_rows.sum(axis=2)
    rows = per_channel_rows.sum(axis=1)
    cols = a.sum(axis=(1, 2))
    return channel, rows, cols, channel.sum(axis=1)


def batch_stats(cells_bchw: np.ndarray, previous: BatchStats | None, dt: float) -> BatchStats:
    _, _, height, width = cells_bchw.shape
    channel, rows, cols, mass = marginals(cells_bchw)
    cx, okx = _circular_coordinate(cols, mass)
    cy, oky = _circular_coordinate(rows, mass)
    degenerate = mass <= 0
    center = np.stack([cx, cy], axis=1)

    safe = np.where(degenerate, 1.0, mass)
    dx = wrap_displacement(np.arange(width)[None, :] - cx[:, None], width)
    dy = wrap_displacement(np.arange(height)[None, :] - cy[:, None], height)
    spread2 = ((dx**2 * cols).sum(axis=1) + (dy**2 * rows).sum(axis=1)) / safe
    spread = np.where(degenerate, np.nan, np.sqrt(spread2))

    batch = len(mass)
    if previous is None:
        velocity = np.zeros((batch, 2))
        prev_angle = np.zeros(batch)
        valid = np.zeros(batch, dtype=bool)
    else:
        disp = np.stack(
            [wrap_displacement(cx - previous.center[:, 0], width),
             wrap_displacement(cy - previous.center[:, 1], height)],
            axis=1,
        )
        valid = ~degenerate & ~previous.degenerate
        velocity = np.where(valid[:, None], disp / dt, 0.0)
        prev_angle = previous.angle
    speed = np.hypot(velocity[:, 0], velocity[:, 1])
    angle = np.where(speed > 0, np.arctan2(velocity[:, 1], velocity[:, 0]), 0.0)
    omega = np.where(valid, wrap_angle(angle - prev_angle) / dt, 0.0)
    color = channel / (height * width)
    return BatchStats(mass, center, velocity, angle, speed, omega, color, spread, degenerate)


def center_of_mass_toroidal(world) -> np.ndarray:
    """Circular-mean center of mass as (x, y) = (column, row), each in [0, L).

    An axis whose circular mean is undefined (e.g. a uniform world) is
    reported as 0.
    """
    cells = _cells(world)
    _, rows, cols, mass = marginals(_as_batch(cells))
    if mass[0] <= 0:
        raise ZeroMass("center of mass undefined for a world with zero mass")
    cx, _ = _circular_coordinate(cols, mass)
    cy, _ = _circular_coordinate(rows, mass)
    return np.array([cx[0], cy[0]])


def mass_spread(world, center) -> float:
    """Mass-weighted RMS toroidal distance to ``center``."""
    cells = _cells(world)
    height, width, _ = cells.shape
    _, rows, cols, mass = marginals(_as_batch(cells))
    if mass[0] <= 0:
        raise ZeroMass("mass spread undefined for a world with zero mass")
    cx, cy = center
    dx = wrap_displacement(np.arange(width) - cx, width)
    dy = wrap_displacement(np.arange(height) - cy, height)
    return float(np.sqrt(((dx**2 * cols[0]).sum() + (dy**2 * rows[0]).sum()) / mass[0]))


def step_stats(world, previous: StepStats | None, dt: float) -> StepStats:
    cells = _cells(world)
    prev = None
    if previous is not None:
        prev = BatchStats(
            mass=np.array([previous.mass]),
            center=np.asarray(previous.center, dtype=float)[None],
            velocity=np.asarray(previous.velocity, dtype=float)[None],
            angle=np.array([previous.angle]),
            speed=np.array([previous.speed]),
            angular_velocity=np.array([previous.angular_velocity]),
            color=np.asarray(previous.color, dtype=float)[None],
            spread=np.array([previous.spread]),
            degenerate=np.array([previous.degenerate]),
        )
    return batch_stats(_as_batch(cells), prev, float(dt)).row(0)


def crop_indices(center, size: int, length: int) -> np.ndarray:
    start = np.floor(np.asarray(center, dtype=float) + 0.5).astype(int) - size // 2
    return np.mod(start[..., None] + np.arange(size), length)


def crop_phenotype(world, center, size: tuple[int, int] = (32, 32), source_step: int = 0) -> PhenotypeCrop:
    """Toroidal window of ``size`` whose center pixel is the rounded ``center``."""
    cells = _cells(world)
    height, width, _ = cells.shape
    cols = crop_indices(center[0], size[1], width)
    rows = crop_indices(center[1], size[0], height)
    pixels = cells[np.ix_(rows, cols)].astype(np.float32)
    return PhenotypeCrop(pixels=pixels, source_step=source_step)


def batch_crops(cells_bchw: np.ndarray, centers: np.ndarray, size: tuple[int, int] = (32, 32)) -> np.ndarray:
    """Crops for a batch, returned as (B, h, w, C) float32."""
    b, c, height, width = cells_bchw.shape
    rows = crop_indices(centers[:, 1], size[0], height)  # (B, h)
    cols = crop_indices(centers[:, 0], size[1], width)  # (B, w)
    out = cells_bchw[
        np.arange(b)[:, None, None, None],
        np.arange(c)[None, :, None, None],
        rows[:, None, :, None],
        cols[:, None, None, :],
    ]
    return np.ascontiguousarray(out.transpose(0, 2, 3, 1), dtype=np.float32)


def summarize(series: StatsSeries, measure: Measure | str, aggregator: Aggregator | str):
    """Aggregate one measure over the post-developmental steps.

    Angle means are circular means; angle variances use the unwrapped heading
    so that a heading oscillating around +-pi is not mistaken for turning.
    Variances are population variances.
    """
    measure = Measure(measure)
    aggregator = Aggregator(aggregator)
    window = series.window()
    if len(window) < 2:
        raise SeriesTooShort(f"need >= 2 post-developmental steps, have {len(window)}")
    values = {
        Measure.MASS: window.mass,
        Measure.VELOCITY: window.speed,
        Measure.ANGLE: window.angle,
        Measure.ANGULAR_VELOCITY: window.angular_velocity,
        Measure.COLOR: window.color,
        Measure.SPREAD: window.spread,
    }[measure]
    if measure is Measure.ANGLE:
        if aggregator is Aggregator.MEAN:
            return float(np.arctan2(np.sin(values).mean(), np.cos(values).mean()))
        return float(np.unwrap(values).var())
    out = values.mean(axis=0) if aggregator is Aggregator.MEAN else values.var(axis=0)
    return out if np.ndim(out) else float(out)


def verdict_codes(mass, spread, degenerate, constraints: GrowthConstraints) -> np.ndarray:
    """Vectorized per-row verdict; precedence evaporated > exploded > too spread."""
    mass = np.asarray(mass)
    out = np.full(mass.shape, GrowthVerdict.KEEP, dtype=object)
    too_spread = np.asarray(spread) > constraints.sigma_m_max
    out[too_spread] = GrowthVerdict.TOO_SPREAD
    out[mass > constraints.m_max] = GrowthVerdict.EXPLODED
    out[(mass < constraints.m_min) | np.asarray(degenerate)] = GrowthVerdict.EVAPORATED
    return out


def growth_check(series: StatsSeries, constraints: GrowthConstraints) -> GrowthVerdict:
    """Verdict of the earliest failing post-developmental step, or KEEP.

    Thresholds are compared in whatever units ``series`` carries; pass a
    ``scaled`` series to use Lenia units.
    """
    window = series.window()
    codes = verdict_codes(window.mass, window.spread, window.degenerate, constraints)
    for code in codes:
        if code is not GrowthVerdict.KEEP:
            return code
    return GrowthVerdict.KEEP
