"""Plot CSV output of ``incrlpv demo duffing`` (requires matplotlib).

Usage::

    python scripts/plot_demo.py OUTDIR [MODE ...]

Reads ``OUTDIR/sim_<mode>.csv`` and ``OUTDIR/bode_<mode>.csv`` for each mode
(default: l2 li2) and writes ``OUTDIR/tracking.png`` and ``OUTDIR/bode.png``.
"""

import sys
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def load(path):
    return np.genfromtxt(path, delimiter=",", names=True)


def main(outdir, modes):
    outdir = Path(outdir)
    fig, (ax_y, ax_u) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    for mode in modes:
        d = load(outdir / f"sim_{mode}.csv")
        ax_y.plot(d["t"], d["y"], label=f"y ({mode})")
        ax_u.plot(d["t"], d["u"], label=f"u ({mode})")
    ax_y.plot(d["t"], d["r"], "k--", lw=0.8, label="r")
    ax_y.set_ylabel("position [m]")
    ax_u.set_ylabel("force [N]")
    ax_u.set_xlabel("time [s]")
    ax_y.legend()
    ax_u.legend()
    fig.tight_layout()
    fig.savefig(outdir / "tracking.png", dpi=150)

    fig, ax = plt.subplots(figsize=(7, 4))
    for mode in modes:
        b = load(outdir / f"bode_{mode}.csv")
        for rho in np.unique(b["rho"]):
            sel = b["rho"] == rho
            ax.semilogx(b["omega"][sel], b["mag_db"][sel], label=f"{mode}, rho={rho:g}")
    ax.semilogx(b["omega"][sel], b["invweight_db"][sel], "k--", label="|W1 W3|^-1")
    ax.set_xlabel("omega [rad/s]")
    ax.set_ylabel("magnitude [dB]")
    ax.grid(True, which="both", lw=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(outdir / "bode.png", dpi=150)


if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2:] or ["l2", "li2"])
