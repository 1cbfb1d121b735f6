#!/usr/bin/env python3
"""Log-log convergence plot from one or more convergence.csv dumps.

Usage: plot_convergence.py --csv <paths...> --k <int> --out <png>

Each CSV is expected to carry the columns level, dofs, eta, energy_err,
star_err, osc, effectivity.  Every finite series among {eta, energy_err,
star_err} is drawn against the dof count, plus a dashed reference line of
slope -k/2.
"""
import argparse
import csv
import math
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

SERIES = ("eta", "energy_err", "star_err")


class InputError(RuntimeError):
    pass


def read_csv(path):
    with open(path) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty file")
        missing = {"dofs", *SERIES} - set(reader.fieldnames)
        if missing:
            raise InputError(f"{path}: missing columns {sorted(missing)}")
        rows = []
        for row in reader:
            try:
                rows.append({key: float(row[key]) for key in ("dofs", *SERIES)})
            except (TypeError, ValueError, KeyError) as exc:
                raise InputError(f"{path}: malformed row {row}") from exc
    if len(rows) < 2:
        raise InputError(f"{path}: need at least 2 data rows")
    return rows


def build_figure(csv_paths, k):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    all_dofs, anchor = [], None
    for path in csv_paths:
        rows = read_csv(path)
        dofs = [r["dofs"] for r in rows]
        all_dofs.extend(dofs)
        stem = os.path.splitext(os.path.basename(path))[0]
        prefix = f"{stem}: " if len(csv_paths) > 1 else ""
        for name in SERIES:
            vals = [r[name] for r in rows]
            if not all(math.isfinite(v) and v > 0 for v in vals):
                continue
            ax.loglog(dofs, vals, marker="o", label=prefix + name)
            if anchor is None:
                anchor = (dofs[0], vals[0])
    if anchor is None:
        raise InputError("no finite positive series found")
    d0, v0 = anchor
    dref = sorted(set(all_dofs))
    ax.loglog(dref, [v0 * (d / d0) ** (-k / 2.0) for d in dref], "k--",
              label=f"slope -{k}/2")
    ax.set_xlabel("degrees of freedom")
    ax.set_ylabel("estimate / error")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return fig


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--csv", nargs="+", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    args = p.parse_args(argv)
    try:
        fig = build_figure(args.csv, args.k)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    fig.savefig(args.out, dpi=150)
    plt.close(fig)
    return 0


if __name__ == "__main__":
    sys.exit(main())
