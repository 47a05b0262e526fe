#!/usr/bin/env python3
"""Plot a `dubins-penalty solve` output directory.

Renders the planar trace and altitude of the planned path together with the
obstacle positions sampled at the same times, plus the clearance history.

    python3 scripts/plot_run.py out/ --scenario ex1.json -o ex1.png

`--scenario` takes a file written by `dubins-penalty export-scenario`; without
it only the airplane path and clearances are drawn.
"""

import argparse
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def curve_position(kind, c, t):
    if kind == "LINE":
        return c[0] + c[1] * t, c[2] + c[3] * t, c[4] + c[5] * t
    if kind == "SINE_ALT":
        return c[0] + c[1] * t, c[2] + c[3] * t, c[4] + c[5] * math.sin(c[6] * t + c[7])
    if kind == "SQRT_ARC":
        x = c[0] + c[1] * math.sqrt(max(c[2] + c[3] * t, 0.0))
        return x, c[4] + c[5] * t, c[6] + c[7] * t
    if kind == "CONSTANT":
        return tuple(c)
    raise ValueError(f"unknown curve kind {kind}")


def obstacle_position(obs, t):
    pieces = obs.get("pieces") or [
        {"kind": obs["kind"], "coefficients": obs["coefficients"], "domain": obs["domain"]}
    ]
    lo, hi = pieces[0]["domain"][0], pieces[-1]["domain"][1]
    if t < lo:
        return None
    if t > hi:
        if not obs.get("hold_final", False):
            return None
        t = hi
    for piece in reversed(pieces):
        if t >= piece["domain"][0]:
            return curve_position(piece["kind"], piece["coefficients"], t)
    return None


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run_dir", type=Path)
    ap.add_argument("--scenario", type=Path)
    ap.add_argument("-o", "--output", type=Path, default=Path("run.png"))
    args = ap.parse_args()

    traj = pd.read_csv(args.run_dir / "trajectory.csv")
    summary = json.loads((args.run_dir / "summary.json").read_text())
    obstacles = json.loads(args.scenario.read_text())["obstacles"] if args.scenario else []

    fig, (ax_xy, ax_z, ax_c) = plt.subplots(1, 3, figsize=(15, 4.5))
    ax_xy.plot(traj.x, traj.y, "k-", lw=2, label="airplane")
    ax_z.plot(traj.t, traj.z, "k-", lw=2, label="airplane")
    for i, obs in enumerate(obstacles, start=1):
        pts = [(t, obstacle_position(obs, t)) for t in traj.t]
        pts = [(t, p) for t, p in pts if p is not None]
        if not pts:
            continue
        ts = [t for t, _ in pts]
        ax_xy.plot([p[0] for _, p in pts], [p[1] for _, p in pts], "--", label=f"obstacle {i}")
        ax_z.plot(ts, [p[2] for _, p in pts], "--", label=f"obstacle {i}")

    clearance_cols = [c for c in traj.columns if c.startswith("clearance_")]
    for col in clearance_cols:
        ax_c.plot(traj.t, traj[col], label=col.replace("clearance_", "obstacle "))
    ax_c.axhline(0.0, color="r", lw=0.8)

    ax_xy.set(xlabel="x", ylabel="y", title=f"{summary['scenario']}  T = {summary['T']:.4f}")
    ax_xy.set_aspect("equal", adjustable="datalim")
    ax_z.set(xlabel="t", ylabel="z", title="altitude")
    ax_c.set(xlabel="t", ylabel="signed clearance [m]", title="clearance")
    for ax in (ax_xy, ax_z, ax_c):
        ax.grid(alpha=0.3)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.output, dpi=120)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
