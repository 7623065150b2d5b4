"""Static figures written next to the CSV/JSON reports."""

from __future__ import annotations

import os
import tempfile

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.markersize": 5,
    "svg.hashsalt": "rydcount",
}


def _save(fig, path):
    # no software/date metadata so identical inputs give identical bytes
    fig.tight_layout()
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".png")
    os.close(fd)
    fig.savefig(tmp, dpi=120, metadata={"Software": None})
    os.replace(tmp, path)
    plt.close(fig)


def eta_scaling(ns, n_eta, path, label="FI", extra: dict | None = None):
    """Scaled non-uniformity ``n * eta`` against system size."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(ns, n_eta, "o-", label=label)
        for name, (xs, ys) in (extra or {}).items():
            ax.plot(xs, ys, "s--", label=name)
        ax.axhline(1.0, color="k", ls=":", lw=1)
        ax.set_xlabel("n")
        ax.set_ylabel(r"$n\,\eta$")
        ax.legend()
        _save(fig, path)


def eta_vs_steps(ks, etas, path):
    """Non-uniformity of feed-forward mixtures against the number of steps."""
    etas = np.atleast_2d(etas)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for row in etas:
            ax.plot(ks, row, color="0.7", lw=0.8)
        ax.plot(ks, etas.mean(axis=0), "o-", color="C1", label="mean")
        ax.set_xscale("log")
        ax.set_xlabel("feed-forward steps k")
        ax.set_ylabel(r"$\eta$")
        ax.legend()
        _save(fig, path)


def survival_scaling(ns, sp, thermal, fit_sp, fit_th, path):
    ns = np.asarray(ns, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogy(ns, sp, "o", color="teal", label="averaged $S_p$")
        ax.semilogy(ns, thermal, "s", color="orange", label=r"$1/|\mathcal{X}|$")
        ax.semilogy(ns, np.exp(-fit_sp.alpha * ns - fit_sp.beta), "-", color="teal",
                    label=f"fit α={fit_sp.alpha:.3f}")
        ax.semilogy(ns, np.exp(-fit_th.alpha * ns - fit_th.beta), "-", color="orange",
                    label=f"fit α={fit_th.alpha:.3f}")
        ax.set_xlabel("n")
        ax.set_ylabel("survival probability")
        ax.legend()
        _save(fig, path)


def survival_curve(curve, path, ramp=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(curve.times, np.maximum(curve.values, 1e-16), lw=0.8)
        if ramp is not None:
            ax.axhline(ramp.long_time_mean, color="k", ls=":", lw=1)
            if ramp.dip_time is not None:
                ax.axvline(ramp.dip_time, color="C3", ls="--", lw=1, label="dip")
            if ramp.settle_time is not None:
                ax.axvline(ramp.settle_time, color="C2", ls="--", lw=1, label="settled")
            ax.legend()
        ax.set_xlabel(r"$\Omega t$")
        ax.set_ylabel(r"$S_p(t)$")
        _save(fig, path)


def distribution(probs, dim, path, title=""):
    probs = np.asarray(probs)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar(np.arange(len(probs)), probs, width=1.0)
        ax.axhline(1.0 / dim, color="k", ls="--", lw=1)
        ax.set_xlabel("solution index")
        ax.set_ylabel("probability")
        if title:
            ax.set_title(title)
        _save(fig, path)


def count_estimates(labels, kappas, exact, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(range(len(kappas)), kappas, "o")
        if exact is not None:
            ax.axhline(exact, color="k", ls="--", lw=1, label="exact")
            ax.legend()
        ax.set_xticks(range(len(kappas)), labels, rotation=45)
        ax.set_ylabel(r"$\kappa$")
        _save(fig, path)
