"""Command-line entry point: run, resume, export, stats."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, apply_overrides, load_config, preset, preset_names
from .export import export_member_rollout, export_members
from .loop import Experiment
from .snapshot import SnapshotError, read_snapshot


def _parse_set(items: list[str]) -> dict[str, dict]:
    out: dict[str, dict] = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        section, dot, name = key.partition(".")
        if not dot:
            section, name = "run", key
        out.setdefault(section, {})[name] = value
    return out


def resolve_config(args) -> RunConfig:
    config = preset(args.preset) if args.preset else RunConfig()
    if args.config:
        config = load_config(args.config, base=config if args.preset else None)
    run = {}
    if args.seed is not None:
        run["rng_seed"] = args.seed
    if args.generations is not None:
        run["generations"] = args.generations
    if args.pattern is not None:
        run["pattern"] = args.pattern
    if args.snapshot_every is not None:
        run["snapshot_every"] = args.snapshot_every
    overrides = _parse_set(args.set)
    overrides.setdefault("run", {}).update(run)
    return apply_overrides(config, overrides).validate()


def cmd_run(args) -> int:
    config = resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .config import dump_config_text

    (out / "config.ini").write_text(dump_config_text(config))
    exp = Experiment(config, out).run()
    print(f"finished generation {exp.generation}: {len(exp.archive)} members, log at {exp.metrics_path}")
    return 0


def cmd_resume(args) -> int:
    snap_path = Path(args.snapshot)
    out = Path(args.out) if args.out else snap_path.parent.parent if snap_path.parent.name == "snapshots" else snap_path.parent
    exp = Experiment.from_snapshot(snap_path, out_dir=out, generations=args.generations)
    exp.run()
    print(f"resumed from generation {len(exp.records) and exp.records[0].generation}; finished {exp.generation}")
    return 0


def cmd_export(args) -> int:
    snap = read_snapshot(args.snapshot)
    written = export_members(snap.archive, args.images, scale=args.scale)
    if args.frames:
        from .pattern import parse_pattern
        from ..sim import KernelBank

        bank = KernelBank.build(parse_pattern(snap.pattern).kernels, snap.config.sim)
        members = snap.archive.members()[: args.frames]
        for i, m in enumerate(members):
            written += export_member_rollout(m, snap.config.sim, bank, Path(args.images) / f"member-{i}-frames",
                                             scale=args.scale, stride=args.frame_stride)
    print(f"wrote {len(written)} images to {args.images}")
    return 0


def cmd_stats(args) -> int:
    snap = read_snapshot(args.snapshot)
    members = snap.archive.members()
    info = {
        "algorithm": snap.config.algorithm,
        "fitness": snap.config.fitness,
        "descriptor": snap.config.descriptor,
        "generation": snap.generation,
        "evaluations": snap.evaluations,
        "size": len(members),
        "cumulative_elites": snap.cumulative_elites,
    }
    if snap.records:
        last = snap.records[-1]
        info.update(coverage=last.coverage, max_fitness=last.max_fitness,
                    pixel_variance=last.pixel_variance, entropy=last.entropy, threshold=last.threshold)
    print(json.dumps(info, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lenia-qd", description="Quality-diversity search over multi-channel Lenia.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log one line per generation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="start a run")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--preset", help="named experiment: " + ", ".join(preset_names()))
    p.add_argument("--seed", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--pattern", help="builtin pattern name or pattern JSON path")
    p.add_argument("--snapshot-every", type=int)
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("resume", help="continue a run from a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--generations", type=int, help="new last generation (default: the config's)")
    p.add_argument("--out", help="output directory (default: the run directory)")
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("export", help="write member PNGs")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--images", required=True, help="output directory")
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--frames", type=int, default=0, metavar="N", help="also re-simulate the first N members")
    p.add_argument("--frame-stride", type=int, default=1)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("stats", help="print archive statistics")
    p.add_argument("--snapshot", required=True)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, SnapshotError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
