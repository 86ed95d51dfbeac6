#!/usr/bin/env python3
"""Plot the files written by `sgplfm identify` into an output directory.

Usage: plot_report.py OUT_DIR [--save]
"""

import argparse
import csv
import json
from pathlib import Path

import matplotlib.pyplot as plt


def read_columns(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    cols = {}
    for key in rows[0]:
        try:
            cols[key] = [float(r[key]) for r in rows]
        except ValueError:
            cols[key] = [r[key] for r in rows]
    return cols


def plot_steps(path, title):
    d = read_columns(path)
    t = d["time_s"]
    sd = [3 * v ** 0.5 for v in d["friction_var_N2"]]
    mean = d["friction_mean_N"]
    fig, (ax_f, ax_p) = plt.subplots(2, 1, sharex=True, figsize=(9, 6), height_ratios=[3, 1])
    ax_f.fill_between(t, [m - s for m, s in zip(mean, sd)], [m + s for m, s in zip(mean, sd)],
                      color="C0", alpha=0.25, lw=0, label="+/- 3 sd")
    ax_f.plot(t, mean, "C0", lw=1, label="estimate")
    ax_f.plot(t, d["friction_true_N"], "k--", lw=0.8, label="true")
    ax_f.set_ylabel("friction force [N]")
    ax_f.legend(loc="upper right")
    ax_f.set_title(title)
    for key, name in [("p_sticking", "P(stick)"), ("p_resetting", "P(reset)")]:
        if key in d:
            ax_p.plot(t, d[key], lw=0.8, label=name)
    ax_p.plot(t, [1.0 if r == "stick" else 0.0 for r in d["regime_true"]], "k:", lw=0.8, label="true stick")
    ax_p.set_ylim(-0.05, 1.05)
    ax_p.set_xlabel("time [s]")
    ax_p.legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    return fig


def plot_friction(fv_path, curve_path, title):
    fig, ax = plt.subplots(figsize=(6, 5))
    if fv_path.exists():
        d = read_columns(fv_path)
        err = [[m - lo for m, lo in zip(d["force_mean_N"], d["force_lower_3sd_N"])],
               [hi - m for m, hi in zip(d["force_mean_N"], d["force_upper_3sd_N"])]]
        ax.errorbar(d["velocity_mean_m_per_s"], d["force_mean_N"], yerr=err, fmt=".", ms=2,
                    lw=0.3, alpha=0.5, label="estimates")
    if curve_path.exists():
        c = read_columns(curve_path)
        ax.plot(c["velocity_m_per_s"], c["friction_true_N"], "k--", lw=1, label="true law")
        ax.plot(c["velocity_m_per_s"], c["friction_fitted_N"], "C3", lw=1, label="fitted law")
    ax.set_xlabel("velocity [m/s]")
    ax.set_ylabel("friction force [N]")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    return fig


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--save", action="store_true", help="write PNGs next to the data instead of showing")
    args = parser.parse_args()

    report = json.loads((args.out_dir / "report.json").read_text())
    for v in report["variants"]:
        print(f"{v['variant']}: NMSE[F] {v['scores']['nmse_friction']:.3f}%, "
              f"regime error {v['regime_error']:.2f}%, stops {v['detected_stops']}")

    figs = {}
    for steps in sorted(args.out_dir.glob("steps_*.csv")):
        tag = steps.stem[len("steps_"):]
        figs[f"force_{tag}"] = plot_steps(steps, tag)
        figs[f"law_{tag}"] = plot_friction(args.out_dir / f"force_velocity_{tag}.csv",
                                           args.out_dir / f"friction_curve_{tag}.csv", tag)
    if args.save:
        for name, fig in figs.items():
            fig.savefig(args.out_dir / f"{name}.png", dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
