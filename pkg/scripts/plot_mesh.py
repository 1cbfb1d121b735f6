#!/usr/bin/env python3
"""Draw the leaf cells of a mesh dump as rectangles.

Usage: plot_mesh.py --mesh <path> --out <png>

The dump format is one leaf per line: id level x y w h.
"""
import argparse
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Rectangle


class InputError(RuntimeError):
    pass


def read_mesh(path):
    cells = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise InputError(f"{path}:{lineno}: expected 6 fields")
            try:
                x, y, w, h = (float(v) for v in parts[2:])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: bad number") from exc
            cells.append((x, y, w, h))
    if not cells:
        raise InputError(f"{path}: no cells")
    return cells


def build_figure(cells):
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    for x, y, w, h in cells:
        ax.add_patch(Rectangle((x, y), w, h, fill=False, linewidth=0.3))
    xmin = min(c[0] for c in cells)
    ymin = min(c[1] for c in cells)
    xmax = max(c[0] + c[2] for c in cells)
    ymax = max(c[1] + c[3] for c in cells)
    ax.set_xlim(xmin, xmax)
    ax.set_ylim(ymin, ymax)
    ax.set_aspect("equal")
    fig.tight_layout()
    return fig


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--mesh", required=True)
    p.add_argument("--out", required=True)
    args = p.parse_args(argv)
    try:
        fig = build_figure(read_mesh(args.mesh))
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    fig.savefig(args.out, dpi=150)
    plt.close(fig)
    return 0


if __name__ == "__main__":
    sys.exit(main())
