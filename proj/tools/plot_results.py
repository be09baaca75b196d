#!/usr/bin/env python3
"""Figures from the CSV files the hybridsize stages write.

    python3 tools/plot_results.py RUN_DIR [--out FIG_DIR]

Each figure is drawn only when its input files exist in RUN_DIR.
"""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def column(rows, name):
    return [float(r[name]) if r[name] != "" else float("nan") for r in rows]


def plot_trajectory(run, out):
    rows = read_rows(run / "trajectory.csv")
    hours = [float(r["step"]) / 6.0 for r in rows]
    fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(9, 6))
    top.plot(hours, column(rows, "rps_mw"), label="renewable")
    top.plot(hours, column(rows, "load_mw"), label="load")
    top.plot(hours, column(rows, "dtg_mw"), label="generator")
    top.plot(hours, column(rows, "ess_mw"), label="storage (charging > 0)")
    top.set_ylabel("MW")
    top.legend(loc="upper right", fontsize="small")
    bottom.plot(hours, column(rows, "ess_energy_mwh"), color="tab:purple")
    bottom.set_ylabel("stored energy (MWh)")
    bottom.set_xlabel("hours")
    fig.tight_layout()
    fig.savefig(out / "trajectory.png", dpi=150)
    plt.close(fig)


def plot_grid(run, out):
    rows = read_rows(run / "grid.csv")
    ess = sorted({float(r["ess_mwh"]) for r in rows})
    rps = sorted({float(r["rps_mw"]) for r in rows})
    g = {(float(r["ess_mwh"]), float(r["rps_mw"])): float(r["g_mw"]) for r in rows}
    z = [[g[(e, p)] for e in ess] for p in rps]
    fig, ax = plt.subplots(figsize=(7, 5))
    cs = ax.contourf(ess, rps, z, levels=15, cmap="viridis")
    fig.colorbar(cs, ax=ax, label="average generator usage G (MW)")
    frontier = run / "frontier.csv"
    if frontier.exists():
        path = [r for r in read_rows(frontier) if r["feasible"] == "1"]
        xs, ys = column(path, "ess_mwh"), column(path, "rps_mw")
        ax.plot(xs, ys, "o", color="white", label="cost-optimal cells, by budget")
        for k, (x, y) in enumerate(zip(xs, ys)):
            ax.annotate(str(k + 1), (x, y), textcoords="offset points", xytext=(4, 4),
                        color="white", fontsize="small")
        ax.legend(loc="upper right")
    ax.set_xlabel("storage capacity (MWh)")
    ax.set_ylabel("renewable capacity (MW)")
    fig.tight_layout()
    fig.savefig(out / "grid.png", dpi=150)
    plt.close(fig)


def plot_usage_per_cost(run, out):
    rows = [r for r in read_rows(run / "usage_per_cost.csv") if r["feasible"] == "1"]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.step(column(rows, "budget"), column(rows, "g_mw"), where="post")
    ax.set_xlabel("investment budget")
    ax.set_ylabel("lowest attainable G (MW)")
    fig.tight_layout()
    fig.savefig(out / "usage_per_cost.png", dpi=150)
    plt.close(fig)


def plot_alpha_sweep(run, out):
    rows = read_rows(run / "alpha_sweep.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(column(rows, "alpha"), column(rows, "g_mw"), yerr=column(rows, "stderr_mw"),
                marker="o", capsize=3)
    ax.set_xlabel("alpha")
    ax.set_ylabel("average generator usage G (MW)")
    fig.tight_layout()
    fig.savefig(out / "alpha_sweep.png", dpi=150)
    plt.close(fig)


FIGURES = [
    ("trajectory.csv", plot_trajectory),
    ("grid.csv", plot_grid),
    ("usage_per_cost.csv", plot_usage_per_cost),
    ("alpha_sweep.csv", plot_alpha_sweep),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("run_dir", type=Path)
    parser.add_argument("--out", type=Path, help="figure directory (default: RUN_DIR)")
    args = parser.parse_args()
    out = args.out or args.run_dir
    out.mkdir(parents=True, exist_ok=True)
    for name, plot in FIGURES:
        if (args.run_dir / name).exists():
            plot(args.run_dir, out)
            print(f"wrote {out / Path(name).with_suffix('.png').name}")


if __name__ == "__main__":
    main()
