"""SVG figures for the CLI reports (matplotlib, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# stable ids and no timestamp so reruns give identical files
_RC = {"svg.hashsalt": "eastkcm", "svg.fonttype": "none", "figure.dpi": 100}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def front_figure(times, X, path, title=None):
    """Mean front position with a one-SD band, plus a few sample paths."""
    X = np.asarray(X, dtype=np.float64)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        for row in X[: min(5, X.shape[0])]:
            ax.plot(times, row, lw=0.6, color="0.6")
        m = X.mean(axis=0)
        sd = X.std(axis=0)
        ax.plot(times, m, color="C0", label="mean")
        ax.fill_between(times, m - sd, m + sd, color="C0", alpha=0.25, label="mean ± SD")
        ax.set_xlabel("t")
        ax.set_ylabel("front X(t)")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper left")
        _save(fig, path)


def nu_figure(curves, path):
    """``curves``: list of (p, offsets, freq, lo, hi)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        for i, (p, off, f, lo, hi) in enumerate(curves):
            c = f"C{i}"
            ax.plot(off, f, marker=".", color=c, label=f"p = {p:g}")
            ax.fill_between(off, lo, hi, color=c, alpha=0.2)
            ax.axhline(1 - p, color=c, ls=":", lw=0.8)
        ax.set_xlabel("i (sites behind the front)")
        ax.set_ylabel("frequency of a zero at -i")
        ax.legend()
        _save(fig, path)


def cutoff_figure(profile, path):
    s = np.array([pt.s for pt in profile.points])
    up = np.array([pt.d_upper for pt in profile.points])
    ulo = np.array([pt.d_upper_ci[0] for pt in profile.points])
    uhi = np.array([pt.d_upper_ci[1] for pt in profile.points])
    lo = np.array([pt.d_lower for pt in profile.points])
    from scipy.stats import norm
    sg = np.linspace(s.min() - 0.5, s.max() + 0.5, 200)
    phi = norm.cdf(-profile.v ** 1.5 * sg / profile.sigma)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(sg, phi, color="k", label="Gaussian profile")
        ax.errorbar(s, up, yerr=[up - ulo, uhi - up], fmt="o", color="C0", label="P(tau(L) > t*)")
        ax.plot(s, lo, "s", color="C1", label="A_t lower bound")
        ax.set_xlabel("s")
        ax.set_ylabel("distance to equilibrium")
        ax.set_title(f"L = {profile.L}, p = {profile.p:g}")
        ax.legend()
        _save(fig, path)


def tv_figure(curves, path):
    """``curves``: list of (label, times, d)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, t, d in curves:
            ax.plot(t, d, label=label)
        ax.set_xlabel("t")
        ax.set_ylabel("d(t)")
        ax.legend()
        _save(fig, path)


def tree_figure(scans, path):
    """``scans``: list of ConcentrationScan."""
    with plt.rc_context(_RC):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 4))
        for i, sc in enumerate(scans):
            Ls = np.array([r.L for r in sc.rows])
            mean = np.array([r.mean for r in sc.rows])
            mad = np.array([r.mad for r in sc.rows])
            lab = f"k={sc.k}, j={sc.j}, p={sc.p:g}"
            a1.loglog(Ls, mean, "o-", color=f"C{i}", label=lab)
            a2.plot(Ls, mad, "o-", color=f"C{i}", label=lab)
        a1.set_xlabel("L")
        a1.set_ylabel("T_hit(L)")
        a2.set_xlabel("L")
        a2.set_ylabel("E|tau - T_hit|")
        a1.legend(fontsize=8)
        _save(fig, path)
