"""Plot per-generation metrics from one or more run directories.

    python scripts/plot_metrics.py runs/*/ --out metrics.png

Needs matplotlib (``pip install -e .[plot]``).
"""
from __future__ import annotations

import argparse
from pathlib import Path

from lenia_qd.harness.loop import METRICS_FILE, read_metrics_log

PANELS = ["coverage", "max_fitness", "pixel_variance", "cumulative_elites", "entropy", "size"]


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("runs", nargs="+", type=Path)
    parser.add_argument("--out", type=Path, default=Path("metrics.png"))
    args = parser.parse_args(argv)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, 3, figsize=(13, 7))
    for run in args.runs:
        records = read_metrics_log(run / METRICS_FILE)
        x = [r.evaluations for r in records]
        for ax, field in zip(axes.flat, PANELS):
            pts = [(e, getattr(r, field)) for e, r in zip(x, records) if getattr(r, field) is not None]
            if pts:
                ax.plot(*zip(*pts), label=run.name)
    for ax, field in zip(axes.flat, PANELS):
        ax.set_title(field)
        ax.set_xlabel("evaluations")
    axes.flat[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
