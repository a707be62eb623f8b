"""Render an atlas CSV from ``gaussqc sweep`` as two heat maps.

Left: average negativity over entangled states per cell. Right: the largest
relative width of the negativity bracket, with the 10 % and 1 % contours.
Empty cells are left blank.

Usage::

    gaussqc sweep -o atlas.csv
    python scripts/plot_atlas.py atlas.csv -o atlas.png

Requires matplotlib (``pip install gaussqc[plot]``).
"""

import argparse
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_atlas(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    r1 = np.array(sorted({float(r["r1"]) for r in rows}))
    r2 = np.array(sorted({float(r["r2"]) for r in rows}))
    e_av = np.full((r1.size, r2.size), np.nan)
    delta = np.full_like(e_av, np.nan)
    for r in rows:
        i = np.searchsorted(r1, float(r["r1"]))
        j = np.searchsorted(r2, float(r["r2"]))
        if r["E_av"]:
            e_av[i, j] = float(r["E_av"])
        if r["delta_max"]:
            delta[i, j] = float(r["delta_max"])
    return r1, r2, e_av, delta


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("atlas", help="atlas CSV written by 'gaussqc sweep'")
    parser.add_argument("-o", "--output", default="atlas.png")
    args = parser.parse_args(argv)

    r1, r2, e_av, delta = read_atlas(args.atlas)
    extent = (r2[0], r2[-1], r1[0], r1[-1])
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.2), constrained_layout=True)

    im = axes[0].imshow(e_av, origin="lower", extent=extent, aspect="auto", cmap="viridis")
    fig.colorbar(im, ax=axes[0], label=r"$E_N^{\rm av}$")
    axes[0].set_title("average negativity")

    im = axes[1].imshow(delta, origin="lower", extent=extent, aspect="auto", cmap="magma_r")
    fig.colorbar(im, ax=axes[1], label=r"$\delta E_N$ (max)")
    cs = axes[1].contour(r2, r1, np.ma.masked_invalid(delta), levels=[0.01, 0.10], colors=["w", "c"])
    axes[1].clabel(cs, fmt={0.01: "1%", 0.10: "10%"})
    axes[1].set_title("relative bracket width")

    for ax in axes:
        ax.set_xlabel(r"$\mu/\mu_2$")
        ax.set_ylabel(r"$\mu/\mu_1$")
    fig.savefig(args.output, dpi=150)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
