"""Pattern files: a seed plus per-kernel geometry and evolvable defaults.

JSON layout (keys follow the usual Lenia pattern dumps)::

    {
      "name": "...", "source_id": "...", "description": "...",
      "R": 12, "T": 2, "channels": 3,
      "cells": [[[c0, c1, c2], ...], ...],      # H x W x C nested lists
      "kernels": [{"r": 0.91, "b": [1, 0.25], "m": 0.27, "s": 0.06,
                   "h": 0.14, "c0": 0, "c1": 0}, ...]
    }

``c0`` is the source channel and ``c1`` the target channel. Kernels may be
listed in any order; they are matched onto the fixed wiring order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..genotype import (
    H_BOUNDS,
    MU_BOUNDS,
    SEED_BOUNDS,
    SIGMA_BOUNDS,
    Genotype,
    GenomeLayout,
)
from ..sim import KernelSpec, kernel_wiring

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
BUILTIN_PATTERNS = {"demo": DATA_DIR / "demo_pattern.json"}


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass
class PatternFile:
    name: str
    source_id: str
    cells: np.ndarray
    kernels: list[KernelSpec]
    space_resolution: int | None = None
    time_resolution: int | None = None
    description: str = ""

    @property
    def channels(self) -> int:
        return self.cells.shape[2]

    def layout(self) -> GenomeLayout:
        return GenomeLayout(tuple(self.cells.shape), len(self.kernels))

    def base_genotype(self) -> Genotype:
        return self.layout().assemble(
            self.cells,
            [k.mu for k in self.kernels],
            [k.sigma for k in self.kernels],
            [k.h for k in self.kernels],
        )

    def __eq__(self, other):
        if not isinstance(other, PatternFile):
            return NotImplemented
        return (
            self.name == other.name
            and self.source_id == other.source_id
            and self.description == other.description
            and self.space_resolution == other.space_resolution
            and self.time_resolution == other.time_resolution
            and self.kernels == other.kernels
            and np.array_equal(self.cells, other.cells)
        )


def _in(value, bounds) -> bool:
    return bounds[0] <= value <= bounds[1]


def parse_pattern(data: dict) -> PatternFile:
    if not isinstance(data, dict):
        raise ParseError("pattern must be a JSON object")
    problems = []
    try:
        cells = np.asarray(data["cells"], dtype=np.float64)
    except KeyError:
        raise ValidationError(["cells: missing"]) from None
    except (TypeError, ValueError) as exc:
        raise ValidationError([f"cells: not a rectangular numeric array ({exc})"]) from None
    if cells.ndim != 3:
        problems.append(f"cells: expected H x W x C nested lists, got {cells.ndim} dimensions")
        raise ValidationError(problems)
    channels = data.get("channels", cells.shape[2])
    if channels != cells.shape[2]:
        problems.append(f"channels: declared {channels}, cells have {cells.shape[2]}")
    if not np.all(np.isfinite(cells)) or cells.min() < SEED_BOUNDS[0] or cells.max() > SEED_BOUNDS[1]:
        problems.append("cells: values must lie in [0, 1]")

    raw_kernels = data.get("kernels")
    wiring = kernel_wiring(cells.shape[2])
    if not isinstance(raw_kernels, list):
        problems.append("kernels: missing or not a list")
        raise ValidationError(problems)
    if len(raw_kernels) != len(wiring):
        problems.append(f"kernels: expected {len(wiring)} kernels for {cells.shape[2]} channels, got {len(raw_kernels)}")
        raise ValidationError(problems)

    parsed = []
    for i, k in enumerate(raw_kernels):
        try:
            spec = KernelSpec(
                radius=float(k["r"]), beta=tuple(float(b) for b in k["b"]),
                mu=float(k["m"]), sigma=float(k["s"]), h=float(k["h"]),
                source=int(k["c0"]), target=int(k["c1"]),
            )
        except KeyError as exc:
            problems.append(f"kernels[{i}]: missing field {exc}")
            continue
        except (TypeError, ValueError) as exc:
            problems.append(f"kernels[{i}]: {exc}")
            continue
        for label, value, bounds in (("m", spec.mu, MU_BOUNDS), ("s", spec.sigma, SIGMA_BOUNDS), ("h", spec.h, H_BOUNDS)):
            if not _in(value, bounds):
                problems.append(f"kernels[{i}].{label}: {value} outside {list(bounds)}")
        parsed.append(spec)
    if problems:
        raise ValidationError(problems)

    # stable assignment onto wiring slots
    ordered: list[KernelSpec | None] = [None] * len(wiring)
    used = [False] * len(parsed)
    for slot, pair in enumerate(wiring):
        for j, spec in enumerate(parsed):
            if not used[j] and (spec.source, spec.target) == pair:
                ordered[slot], used[j] = spec, True
                break
        else:
            problems.append(f"kernels: no kernel for channel pair {pair}")
    if problems:
        raise ValidationError(problems)

    return PatternFile(
        name=str(data.get("name", "")),
        source_id=str(data.get("source_id", data.get("code", ""))),
        cells=cells,
        kernels=ordered,
        space_resolution=data.get("R"),
        time_resolution=data.get("T"),
        description=str(data.get("description", "")),
    )


def read_pattern(path) -> PatternFile:
    path = BUILTIN_PATTERNS.get(str(path), Path(path))
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return parse_pattern(data)


def load_pattern(path) -> tuple[Genotype, list[KernelSpec]]:
    """Base genotype and the fixed kernel geometry (with default rule params)."""
    pattern = read_pattern(path)
    return pattern.base_genotype(), pattern.kernels


def pattern_to_dict(pattern: PatternFile) -> dict:
    return {
        "name": pattern.name,
        "source_id": pattern.source_id,
        "description": pattern.description,
        "R": pattern.space_resolution,
        "T": pattern.time_resolution,
        "channels": pattern.channels,
        "kernels": [
            {"r": k.radius, "b": list(k.beta), "m": k.mu, "s": k.sigma, "h": k.h,
             "c0": k.source, "c1": k.target}
            for k in pattern.kernels
        ],
        "cells": pattern.cells.tolist(),
    }


def write_pattern(pattern: PatternFile, path) -> None:
    Path(path).write_text(json.dumps(pattern_to_dict(pattern)) + "\n")
