"""Static SVG figures rendered from run CSVs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..errors import SpecError  # noqa: E402
from .io import read_csv, read_manifest_ref  # noqa: E402

KINDS = ("orbit", "deviation-vs-t", "divisor-spectrum", "zeta-scatter")


def _col(header, data, name, path):
    try:
        return data[:, header.index(name)]
    except ValueError:
        raise SpecError(f"{path}: missing column {name!r}") from None


def _orbit(ax, header, data, path, **_):
    if "x2" not in header:
        ax.plot(_col(header, data, "t", path), _col(header, data, "x1", path), lw=0.8)
        ax.set_xlabel("t")
        ax.set_ylabel("x1")
        return
    x1, x2 = _col(header, data, "x1", path), _col(header, data, "x2", path)
    ax.plot(x1, x2, lw=0.8)
    ax.plot(x1[:1], x2[:1], "o", ms=3, color="k")
    lo, hi = np.floor(x2.min() - 0.5), np.ceil(x2.max() + 0.5)
    for n in np.arange(lo, hi + 1):
        ax.axhline(n + 0.5, color="0.8", lw=0.5, zorder=0)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")


def _deviation(ax, header, data, path, bound=None, **_):
    t = _col(header, data, "t", path)
    ax.plot(t, _col(header, data, "deviation", path), lw=0.6, label="|X - x - t zeta|")
    if "running_sup" in header:
        ax.plot(t, _col(header, data, "running_sup", path), lw=0.8, label="running sup")
    if bound is not None:
        ax.axhline(bound, color="C3", ls="--", lw=0.8, label=f"bound {bound:.4g}")
    ax.set_xlabel("t")
    ax.set_ylabel("deviation")
    ax.legend(frameon=False, fontsize=7)


def _divisors(ax, header, data, path, **_):
    div = _col(header, data, "|xi·n|", path)
    ax.loglog(div, _col(header, data, "|alpha_hat|", path), "o", ms=3, label="|alpha_hat|")
    ax.loglog(div, _col(header, data, "|theta_hat|", path), "s", ms=3, mfc="none", label="|theta_hat|")
    ax.set_xlabel("|xi·n|")
    ax.set_ylabel("coefficient")
    ax.legend(frameon=False, fontsize=7)


def _zetas(ax, header, data, path, **_):
    z1 = _col(header, data, "zeta1", path)
    z2 = _col(header, data, "zeta2", path) if "zeta2" in header else np.zeros_like(z1)
    ax.plot(z1, z2, ".", ms=4)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("zeta1")
    ax.set_ylabel("zeta2")


_DRAW = {"orbit": _orbit, "deviation-vs-t": _deviation, "divisor-spectrum": _divisors, "zeta-scatter": _zetas}


def emit_plot(csv_path, kind, out_path=None, manifest=None, title=None, **options):
    """Render ``kind`` from ``csv_path`` to SVG; returns the output path.

    The manifest reference (taken from the CSV unless given) is stored in the
    SVG metadata.  Errors leave no file behind.
    """
    if kind not in _DRAW:
        raise SpecError(f"plot kind must be one of {KINDS}, got {kind!r}")
    csv_path = Path(csv_path)
    header, data = read_csv(csv_path)
    manifest = manifest or read_manifest_ref(csv_path) or "none"
    out_path = Path(out_path) if out_path else csv_path.with_suffix(".svg")
    with plt.rc_context({"svg.hashsalt": manifest, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        try:
            _DRAW[kind](ax, header, data, csv_path, **options)
            ax.set_title(title or kind, fontsize=9)
            fig.tight_layout()
            out_path.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(out_path, format="svg",
                        metadata={"Date": None, "Description": f"manifest={manifest}", "Title": title or kind})
        finally:
            plt.close(fig)
    return out_path
