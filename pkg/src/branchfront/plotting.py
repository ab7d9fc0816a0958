"""Figures written next to the CSV reports."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (5.0, 3.2),
    "savefig.dpi": 150,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_bracket(bracket, path, title=None):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        x = bracket.lower.x
        ax.fill_between(x, bracket.lower.values, bracket.upper.values, color="C0", alpha=0.3,
                        label=f"bracket (n={bracket.n}, gap={bracket.gap:.3g})")
        ax.plot(x, bracket.mid.values, color="C0", lw=1, label="midpoint")
        ax.set_xlabel("x")
        ax.set_ylabel("u(t, x)")
        ax.set_ylim(-0.02, 1.02)
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        _save(fig, path)


def plot_median_trace(rows, path):
    """``rows``: iterable of ``(t, median, lo, hi)``."""
    t, med, lo, hi = (np.array(c, dtype=float) for c in zip(*rows))
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.fill_between(t, lo, hi, color="0.85", label="bounds")
        ax.plot(t, med, "o-", color="C3", ms=3, label="PDE median")
        ax.set_xlabel("t")
        ax.set_ylabel("m(t)")
        ax.legend(loc="upper left")
        _save(fig, path)


def plot_speed(rows, q, path):
    t = np.array([r.t for r in rows])
    med = np.array([r.median_speed for r in rows])
    lo = np.array([r.q10 for r in rows])
    hi = np.array([r.q90 for r in rows])
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.fill_between(t, lo, hi, color="C0", alpha=0.25, label="10-90% of M_t/t")
        ax.plot(t, med, "o-", color="C0", ms=3, label="median M_t/t")
        ax.axhline(q, color="k", ls="--", lw=0.8, label=f"q = {q:.4g}")
        ax.set_xlabel("t")
        ax.set_ylabel("speed")
        ax.legend(loc="lower right")
        _save(fig, path)


def plot_policies(rows, reference, gap, path):
    """``rows``: iterable of ``(name, mean, stderr)``."""
    names = [r[0] for r in rows]
    means = np.array([r[1] for r in rows])
    errs = 3 * np.array([r[2] for r in rows])
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.errorbar(np.arange(len(names)), means, yerr=errs, fmt="o", color="C0", capsize=3)
        ax.axhspan(reference - gap / 2, reference + gap / 2, color="C2", alpha=0.3,
                   label="PDE bracket")
        ax.set_xticks(np.arange(len(names)), names, rotation=30, ha="right")
        ax.set_ylabel("E[Xi]")
        ax.legend(loc="best")
        _save(fig, path)
