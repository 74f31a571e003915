"""SVG figures: convergence bands and profile step curves.

Figures are drawn on bare :class:`~matplotlib.figure.Figure` objects with the
SVG canvas, so nothing touches a display. A fixed hash salt and a blank date
keep the output byte-stable.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib
import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

STYLE = {
    "svg.hashsalt": "latentbo",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

LABELS = {
    "bo_sdr": "BO-SDR",
    "v_bovae": "V-BOVAE",
    "v_bovae_nosdr": "V-BOVAE (no SDR)",
    "r_bovae": "R-BOVAE",
    "s_bovae": "S-BOVAE",
    "rembo": "REMBO",
}


def _save(fig: Figure, path) -> None:
    FigureCanvasSVG(fig)
    with matplotlib.rc_context(STYLE):
        fig.savefig(path, format="svg", metadata={"Date": None})


def convergence_stats(runs: Sequence[Sequence[float]]):
    """Mean and population std of best-so-far curves, cut to the shortest run."""
    length = min(len(r) for r in runs)
    arr = np.array([np.asarray(r[:length], dtype=float) for r in runs])
    return arr.mean(axis=0), arr.std(axis=0)


def convergence_figure(panels: Mapping[str, Mapping[str, Sequence[Sequence[float]]]]) -> Figure:
    """One panel per problem; one mean line and a +-1 std band per algorithm."""
    with matplotlib.rc_context(STYLE):
        n = len(panels)
        fig = Figure(figsize=(4.2 * n, 3.2))
        axes = fig.subplots(1, n, squeeze=False)[0]
        for ax, (problem, groups) in zip(axes, sorted(panels.items())):
            for alg in sorted(groups):
                mean, std = convergence_stats(groups[alg])
                evals = np.arange(1, mean.size + 1)
                line, = ax.plot(evals, mean, lw=1.3, label=LABELS.get(alg, alg))
                ax.fill_between(evals, mean - std, mean + std, color=line.get_color(), alpha=0.2, lw=0)
            ax.set_title(problem)
            ax.set_xlabel("function evaluations")
            ax.set_ylabel("minimum function value found")
            ax.legend(frameon=False)
        fig.tight_layout()
    return fig


def plot_convergence(panels: Mapping[str, Mapping[str, Sequence[Sequence[float]]]], path) -> None:
    _save(convergence_figure(panels), Path(path))


def profile_figure(alphas, curves: Mapping[str, Sequence[float]], xlabel: str = r"$\alpha$",
                   title: str | None = None) -> Figure:
    """Step curves of a performance or data profile."""
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(4.2, 3.2))
        ax = fig.subplots()
        for solver in sorted(curves):
            ax.step(alphas, curves[solver], where="post", lw=1.3, label=LABELS.get(solver, solver))
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("fraction of problems")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, loc="lower right")
        fig.tight_layout()
    return fig


def plot_profile(alphas, curves: Mapping[str, Sequence[float]], path, xlabel: str = r"$\alpha$",
                 title: str | None = None) -> None:
    _save(profile_figure(alphas, curves, xlabel, title), Path(path))


__all__ = ["convergence_figure", "profile_figure", "plot_convergence", "plot_profile", "convergence_stats", "LABELS"]
