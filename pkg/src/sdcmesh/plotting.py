"""Report figures (Agg backend, PNG only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "figure.figsize": (6.0, 3.8),
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.2,
    "image.cmap": "RdBu_r",
}

# PNG text chunks left empty so repeated runs give identical bytes
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_META)
    plt.close(fig)


def _positive(y):
    y = np.asarray(y, dtype=np.float64)
    return np.where(y > 0, y, np.nan)


def plot_sdc_trace(trace, path, title="SDC vertex optimization"):
    """Log-scale L_D, L_N and L_mesh per iteration."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        it = np.arange(len(trace.l_mesh))
        ax.semilogy(it, _positive(trace.l_mesh), label="L_mesh", color="k")
        ax.semilogy(it, _positive(trace.l_d), label="L_D", ls="--")
        ax.semilogy(it, _positive(trace.l_n), label="L_N", ls=":")
        ax.set_xlabel("iteration")
        ax.set_ylabel("loss")
        ax.set_title(title)
        ax.legend()
        _save(fig, path)


def plot_din_traces(traces: dict, path, title="DIN training"):
    """Training loss per step for one or more labelled runs."""
    with plt.rc_context(RC):
        fig, (a0, a1) = plt.subplots(1, 2, figsize=(9.0, 3.6))
        for label, tr in traces.items():
            steps = np.arange(len(tr.total))
            a0.semilogy(steps, _positive(tr.data), label=label)
            if any(v > 0 for v in tr.sdr):
                a1.semilogy(steps, _positive(tr.sdr), label=label)
        a0.set_xlabel("step")
        a0.set_ylabel("SDF data term")
        a1.set_xlabel("step")
        a1.set_ylabel("SDR term")
        a0.legend()
        if a1.lines:
            a1.legend()
        fig.suptitle(title)
        _save(fig, path)


def plot_grid_slice(grid, path, axis: int = 2, index: int | None = None, title=None):
    """SDF values on one lattice slice with the zero level drawn in black."""
    vals = np.asarray(grid.values)
    if index is None:
        index = grid.dims[axis] // 2
    sl = np.take(vals, index, axis=axis)
    others = [a for a in range(3) if a != axis]
    ext = []
    for a in others:
        lo = grid.origin[a]
        ext += [lo, lo + (grid.dims[a] - 1) * grid.spacing]
    lim = float(np.max(np.abs(sl))) or 1.0
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.6, 4.0))
        im = ax.imshow(sl.T, origin="lower", extent=ext, vmin=-lim, vmax=lim)
        if sl.min() < 0 < sl.max():
            xs = np.linspace(ext[0], ext[1], sl.shape[0])
            ys = np.linspace(ext[2], ext[3], sl.shape[1])
            ax.contour(xs, ys, sl.T, levels=[0.0], colors="k", linewidths=0.8)
        names = "xyz"
        ax.set_xlabel(names[others[0]])
        ax.set_ylabel(names[others[1]])
        ax.set_title(title or f"{names[axis]} slice {index}")
        fig.colorbar(im, ax=ax, shrink=0.85)
        _save(fig, path)


def plot_metrics(rows, path, title="metrics (CD, ECD, LSD x1e3)"):
    """Horizontal bars of scaled metric values; ``rows`` as from MetricsReport.rows()."""
    names = [r[0] for r in rows]
    vals = [r[2] for r in rows]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.0, 0.4 * len(rows) + 1.2))
        y = np.arange(len(rows))
        ax.barh(y, vals, color="0.45")
        ax.set_yticks(y, names)
        ax.invert_yaxis()
        for yi, v in zip(y, vals):
            ax.text(v, yi, f" {v:.4g}", va="center", fontsize=8)
        ax.set_title(title)
        _save(fig, path)


def plot_lsd_comparison(labels, values: dict, path, title="LSD-P per shape"):
    """Grouped bars: ``values`` maps run label -> per-shape values aligned with ``labels``."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        x = np.arange(len(labels))
        w = 0.8 / max(len(values), 1)
        for i, (run, v) in enumerate(values.items()):
            ax.bar(x + (i - (len(values) - 1) / 2) * w, v, w, label=run)
        ax.set_xticks(x, labels)
        ax.set_ylabel("LSD-P")
        ax.set_title(title)
        ax.legend()
        _save(fig, path)
