"""Run one or more presets over several seeds, one output directory per run.

    python scripts/run_presets.py --presets desk-me-velocity-avg-color desk-aurora-unsupervised \
        --seeds 0 1 2 --out runs/
"""
from __future__ import annotations

import argparse
import json
import logging
import time
from dataclasses import replace
from pathlib import Path

from lenia_qd.harness.config import dump_config_text, preset, preset_names
from lenia_qd.harness.loop import Experiment


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--presets", nargs="+", default=["desk-me-velocity-avg-color"], choices=preset_names())
    parser.add_argument("--seeds", nargs="+", type=int, default=[0])
    parser.add_argument("--generations", type=int, default=None)
    parser.add_argument("--snapshot-every", type=int, default=50)
    parser.add_argument("--out", type=Path, required=True)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    summary = []
    for name in args.presets:
        for seed in args.seeds:
            cfg = replace(preset(name), rng_seed=seed, snapshot_every=args.snapshot_every)
            if args.generations is not None:
                cfg = replace(cfg, generations=args.generations)
            out = args.out / f"{name}-seed{seed}"
            out.mkdir(parents=True, exist_ok=True)
            (out / "config.ini").write_text(dump_config_text(cfg))
            start = time.perf_counter()
            exp = Experiment(cfg, out).run()
            last = exp.records[-1]
            summary.append({
                "preset": name, "seed": seed, "seconds": round(time.perf_counter() - start, 1),
                "size": last.size, "coverage": last.coverage, "max_fitness": last.max_fitness,
                "pixel_variance": last.pixel_variance, "cumulative_elites": last.cumulative_elites,
            })
            print(json.dumps(summary[-1]))
    (args.out / "summary.json").write_text(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
