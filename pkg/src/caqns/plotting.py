"""Figures for command-line reports.

matplotlib is imported on first use with the non-interactive Agg backend.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def coherence_figure(path, times, predicted, mc=None, mc_err=None, raw=None, title: str = ""):
    """Predicted coherence against the Monte Carlo curve."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    order = np.argsort(times, kind="stable")
    t = np.asarray(times)[order]
    predicted = np.asarray(predicted)[order]
    mc = None if mc is None else np.asarray(mc)[order]
    mc_err = None if mc_err is None else np.asarray(mc_err)[order]
    raw = None if raw is None else np.asarray(raw)[order]
    if mc is not None:
        ax.plot(t, mc, color="0.3", lw=1.2, label="Monte Carlo")
        if mc_err is not None:
            ax.fill_between(t, mc - 3 * mc_err, mc + 3 * mc_err,
                            color="0.8", lw=0)
    ax.plot(t, predicted, "o", ms=3.5, color="C0", label="predicted")
    if raw is not None:
        label = "true spectra, truncated"
        if np.nanmax(np.abs(raw)) > 1.6:
            label += f" (max {np.nanmax(np.abs(raw)):.2g}, off scale)"
        ax.plot(t, raw, "--", color="C3", lw=1, label=label)
    ax.set_xlabel("t (s)")
    ax.set_ylabel(r"$|\langle\rho_{01}(t)\rangle|$")
    lo, hi = ax.get_ylim()
    ax.set_ylim(max(lo, -0.05), min(hi, 1.6))
    ax.legend(frameon=False)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def fidelity_figure(path, g_over_gamma, bare, opt, bare_err=None, opt_err=None):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.errorbar(g_over_gamma, bare, yerr=bare_err, marker="s", label="bare")
    ax.errorbar(g_over_gamma, opt, yerr=opt_err, marker="o", label="optimized")
    ax.set_xlabel(r"$g/\gamma$")
    ax.set_ylabel("process fidelity")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def _dominant(v):
    v = np.asarray(v, dtype=complex)
    return np.where(np.abs(v.real) >= np.abs(v.imag), v.real, v.imag)


def spectra_figure(path, labels: Sequence[str], values, reference=None, errors=None, title: str = ""):
    """Bar chart of spectrum values, optionally against reference values.

    Complex entries are drawn by their dominant component, so purely
    imaginary quantum spectra show their imaginary part.
    """
    plt = _plt()
    values = _dominant(values)
    reference = None if reference is None else _dominant(reference)
    n = len(labels)
    fig, ax = plt.subplots(figsize=(max(5, 0.35 * n + 2), 3.8))
    x = np.arange(n)
    w = 0.4 if reference is not None else 0.7
    ax.bar(x - (w / 2 if reference is not None else 0), values, w, yerr=errors, label="estimate")
    if reference is not None:
        ax.bar(x + w / 2, reference, w, label="reference")
        ax.legend(frameon=False)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=90, fontsize=7)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def measurement_figure(path, values, errors: Optional[Sequence[float]] = None):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.4))
    ax.errorbar(np.arange(len(values)), values, yerr=errors, fmt=".", ms=4)
    ax.set_xlabel("experiment")
    ax.set_ylabel("expectation")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
