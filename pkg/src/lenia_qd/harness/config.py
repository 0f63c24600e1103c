"""Run configuration, named presets and the key-value config file format.

Config files are INI-style::

    [run]
    preset = me-velocity-avg-color   ; optional starting point
    algorithm = map_elites
    fitness = velocity_avg
    descriptor = color
    generations = 100
    batch_size = 64
    capacity = 1024
    rng_seed = 0
    pattern = demo                   ; builtin name or path to a pattern file
    snapshot_every = 0
    eval_chunk = 16
    allow_free_combination = false

    [sim]          ; SimConfig fields
    space_resolution = 8
    world_height = 64
    ...
    [constraints]  ; discard_n, m_min, m_max, sigma_m_max (inf allowed)
    [variation]    ; sigma1, sigma2
    [vae]          ; learning_rate, batch_size, kl_weight, decoder_variance
    [aurora]       ; latent_dim, features, train_steps_per_generation,
                   ; reencode_every, entropy_samples, entropy_every, init_seed
    [retention]    ; stride

Resolution order: preset, then file values, then command-line overrides.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..measures import GrowthConstraints
from ..qd.archive import DescriptorKind
from ..qd.variation import VariationParams
from ..sim import SimConfig
from ..vae import TrainConfig

ALGORITHMS = ("map_elites", "aurora")
FITNESSES = (
    "velocity_avg", "mass_avg", "mass_var", "neg_angle_var",
    "neg_mass_var", "velocity", "neg_mass", "unsupervised",
)
MANUAL_DESCRIPTORS = ("color", "mass_velocity", "angle_velocity")

ME_COMBINATIONS = {
    ("velocity_avg", "color"),
    ("mass_avg", "color"),
    ("mass_var", "color"),
    ("neg_angle_var", "mass_velocity"),
    ("neg_mass_var", "angle_velocity"),
}
AURORA_FITNESSES = {"velocity", "neg_mass", "neg_angle_var", "neg_mass_var", "unsupervised"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AuroraSchedule:
    latent_dim: int = 8
    features: int = 64
    train_steps_per_generation: int = 1
    reencode_every: int = 50
    entropy_samples: int = 1024
    entropy_every: int = 1
    init_seed: int = 0


@dataclass(frozen=True)
class RetentionConfig:
    stride: int = 8


@dataclass(frozen=True)
class RunConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    constraints: GrowthConstraints = field(default_factory=GrowthConstraints.map_elites)
    variation: VariationParams = field(default_factory=VariationParams)
    vae: TrainConfig = field(default_factory=TrainConfig)
    aurora: AuroraSchedule = field(default_factory=AuroraSchedule)
    retention: RetentionConfig = field(default_factory=RetentionConfig)
    algorithm: str = "map_elites"
    fitness: str = "velocity_avg"
    descriptor: str = "color"
    generations: int = 4000
    batch_size: int = 256
    capacity: int = 32768
    rng_seed: int = 0
    pattern: str = "demo"
    snapshot_every: int = 0
    eval_chunk: int = 16
    allow_free_combination: bool = False

    def validate(self) -> RunConfig:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.fitness not in FITNESSES:
            raise ConfigError(f"fitness must be one of {FITNESSES}, got {self.fitness!r}")
        DescriptorKind(self.descriptor)
        if self.algorithm == "map_elites" and self.descriptor not in MANUAL_DESCRIPTORS:
            raise ConfigError("map_elites needs a manual descriptor")
        if self.algorithm == "aurora" and self.descriptor != "unsupervised":
            raise ConfigError("aurora needs the unsupervised descriptor")
        if self.fitness == "unsupervised" and self.algorithm != "aurora":
            raise ConfigError("the unsupervised fitness needs a trained encoder (aurora)")
        if not self.allow_free_combination:
            if self.algorithm == "map_elites" and (self.fitness, self.descriptor) not in ME_COMBINATIONS:
                raise ConfigError(
                    f"({self.fitness}, {self.descriptor}) is not a named experiment; "
                    "set allow_free_combination = true to run it anyway"
                )
            if self.algorithm == "aurora" and self.fitness not in AURORA_FITNESSES:
                raise ConfigError(f"{self.fitness} is not a named aurora experiment")
        if self.constraints.discard_n >= self.sim.steps:
            raise ConfigError("sim.steps must exceed constraints.discard_n")
        if self.generations < 0 or self.batch_size < 1 or self.capacity < 1:
            raise ConfigError("generations >= 0, batch_size >= 1 and capacity >= 1 required")
        if self.eval_chunk < 1:
            raise ConfigError("eval_chunk must be >= 1")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        nested = {
            "sim": SimConfig, "constraints": GrowthConstraints, "variation": VariationParams,
            "vae": TrainConfig, "aurora": AuroraSchedule, "retention": RetentionConfig,
        }
        kwargs = {}
        for key, value in data.items():
            if key in nested:
                kwargs[key] = nested[key](**value)
            else:
                kwargs[key] = value
        return cls(**kwargs)


def _full_me(fitness: str, descriptor: str) -> RunConfig:
    return RunConfig(
        constraints=GrowthConstraints.map_elites(), algorithm="map_elites",
        fitness=fitness, descriptor=descriptor,
    )


def _full_aurora(fitness: str) -> RunConfig:
    return RunConfig(
        constraints=GrowthConstraints.aurora(), algorithm="aurora",
        fitness=fitness, descriptor="unsupervised",
    )


PRESETS: dict[str, RunConfig] = {
    "me-velocity-avg-color": _full_me("velocity_avg", "color"),
    "me-mass-avg-color": _full_me("mass_avg", "color"),
    "me-mass-var-color": _full_me("mass_var", "color"),
    "me-neg-angle-var-mass-velocity": _full_me("neg_angle_var", "mass_velocity"),
    "me-neg-mass-var-angle-velocity": _full_me("neg_mass_var", "angle_velocity"),
    "aurora-velocity": _full_aurora("velocity"),
    "aurora-neg-mass": _full_aurora("neg_mass"),
    "aurora-neg-angle-var": _full_aurora("neg_angle_var"),
    "aurora-neg-mass-var": _full_aurora("neg_mass_var"),
    "aurora-unsupervised": _full_aurora("unsupervised"),
}

DESK_PREFIX = "desk-"


def desk_scale(config: RunConfig) -> RunConfig:
    """Laptop-sized variant: 64x64 world, R=8, 50 steps, batch 64, 100 generations, capacity 1024."""
    return replace(
        config,
        sim=replace(config.sim, space_resolution=8, world_height=64, world_width=64, steps=50),
        constraints=replace(config.constraints, discard_n=10),
        aurora=replace(config.aurora, reencode_every=10, entropy_samples=256),
        generations=100,
        batch_size=64,
        capacity=1024,
    )


def preset_names() -> list[str]:
    return list(PRESETS) + [DESK_PREFIX + name for name in PRESETS]


def preset(name: str) -> RunConfig:
    if name.startswith(DESK_PREFIX) and name[len(DESK_PREFIX):] in PRESETS:
        return desk_scale(PRESETS[name[len(DESK_PREFIX):]])
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {preset_names()}") from None


def _coerce(value: str, template):
    text = value.strip()
    if isinstance(template, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if isinstance(template, int):
        return int(text)
    if isinstance(template, float):
        return math.inf if text.lower() in ("inf", "infinity", "+inf") else float(text)
    if isinstance(template, tuple):
        return tuple(int(v) for v in text.strip("()[] ").split(","))
    return text


def _update_dataclass(obj, values: dict, section: str):
    known = {f.name: f for f in fields(obj)}
    changes = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"[{section}] unknown key {key!r}; known keys: {sorted(known)}")
        current = getattr(obj, key)
        changes[key] = _coerce(raw, current) if isinstance(raw, str) else raw
    return replace(obj, **changes)


SECTIONS = ("sim", "constraints", "variation", "vae", "aurora", "retention")


def apply_overrides(config: RunConfig, overrides: dict[str, dict]) -> RunConfig:
    """``overrides`` maps a section name ('run' or a nested config) to key/value pairs."""
    for section, values in overrides.items():
        if not values:
            continue
        if section == "run":
            run_values = {k: v for k, v in values.items() if k != "preset"}
            config = _update_dataclass(config, run_values, "run")
        elif section in SECTIONS:
            config = replace(config, **{section: _update_dataclass(getattr(config, section), values, section)})
        else:
            raise ConfigError(f"unknown section [{section}]")
    return config


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.read_string(text)
    sections = {s: dict(parser.items(s)) for s in parser.sections()}
    start = base
    preset_name = sections.get("run", {}).get("preset")
    if start is None:
        start = preset(preset_name) if preset_name else RunConfig()
    return apply_overrides(start, sections)


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    return parse_config_text(Path(path).read_text(), base)


def dump_config_text(config: RunConfig) -> str:
    parser = configparser.ConfigParser()
    run = {}
    for f in fields(config):
        value = getattr(config, f.name)
        if dataclasses.is_dataclass(value):
            parser[f.name] = {k: _fmt(v) for k, v in dataclasses.asdict(value).items()}
        else:
            run[f.name] = _fmt(value)
    parser["run"] = run
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return str(value)
