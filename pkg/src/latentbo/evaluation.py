"""Solve counts, performance profiles and data profiles."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class SolveRecord:
    problem: str
    solver: str
    n_evals: float  # math.inf when unsolved
    dim: int
    budget: int


def n_to_solve(best_values: Sequence[float], f_star: float, tau: float) -> float:
    """Evaluations until the running best closes a ``1 - tau`` share of the
    initial gap; ``inf`` if it never does."""
    if not 0.0 < tau < 1.0:
        raise InputError("tau must lie in (0, 1)")
    best = np.asarray(best_values, dtype=float)
    if best.size == 0:
        raise InputError("empty trace")
    f0 = best[0]
    if f0 <= f_star:
        return 1
    threshold = f_star + tau * (f0 - f_star)
    hit = np.flatnonzero(best <= threshold)
    return int(hit[0]) + 1 if hit.size else math.inf


def _by_problem(records: Iterable[SolveRecord]):
    table: dict[str, dict[str, SolveRecord]] = defaultdict(dict)
    solvers: list[str] = []
    for r in records:
        table[r.problem][r.solver] = r
        if r.solver not in solvers:
            solvers.append(r.solver)
    if not table:
        raise InputError("no solve records")
    return table, sorted(solvers)


def performance_ratios(records: Iterable[SolveRecord]) -> dict[str, list[float]]:
    """Per-solver ratios to the best solver, over problems some solver solved."""
    table, solvers = _by_problem(records)
    ratios: dict[str, list[float]] = {s: [] for s in solvers}
    for recs in table.values():
        best = min((r.n_evals for r in recs.values()), default=math.inf)
        if math.isinf(best):
            continue
        for s in solvers:
            n = recs[s].n_evals if s in recs else math.inf
            ratios[s].append(n / best)
    return ratios


def performance_profile(records: Iterable[SolveRecord], alphas) -> dict[str, np.ndarray]:
    """Fraction of problems with ratio ``<= alpha`` for each solver.

    Problems no solver solved are left out of the denominator.
    """
    ratios = performance_ratios(records)
    alphas = np.asarray(alphas, dtype=float)
    out = {}
    for s, rs in ratios.items():
        rs = np.asarray(rs, dtype=float)
        if rs.size == 0:
            out[s] = np.zeros_like(alphas)
        else:
            out[s] = np.mean(rs[None, :] <= alphas[:, None], axis=1)
    return out


def data_profile(records: Iterable[SolveRecord], alphas, max_budget: float | None = None) -> dict[str, np.ndarray]:
    """Fraction of all problems solved within ``alpha (n_p + 1)`` evaluations."""
    table, solvers = _by_problem(records)
    alphas = np.asarray(alphas, dtype=float)
    if max_budget is not None and np.any(alphas > max_budget + 1e-12):
        raise InputError("alpha grid exceeds the maximum budget")
    n_problems = len(table)
    out = {}
    for s in solvers:
        scaled = []
        for recs in table.values():
            r = recs.get(s)
            scaled.append(math.inf if r is None else r.n_evals / (r.dim + 1))
        scaled = np.asarray(scaled, dtype=float)
        out[s] = np.sum(scaled[None, :] <= alphas[:, None], axis=1) / n_problems
    return out


def solved_fraction(records: Iterable[SolveRecord]) -> dict[str, float]:
    """Share of problems each solver solved within its budget."""
    table, solvers = _by_problem(records)
    return {
        s: sum(1 for recs in table.values() if s in recs and math.isfinite(recs[s].n_evals)) / len(table)
        for s in solvers
    }


def performance_alphas(records: Sequence[SolveRecord]) -> np.ndarray:
    """Breakpoints of the performance-profile step functions."""
    pts = {1.0}
    for rs in performance_ratios(records).values():
        pts.update(r for r in rs if math.isfinite(r))
    return np.array(sorted(pts))


def data_alphas(records: Sequence[SolveRecord]) -> np.ndarray:
    """Breakpoints of the data-profile step functions, from 0 up to the largest budget."""
    records = list(records)
    top = max(r.budget / (r.dim + 1) for r in records)
    pts = {0.0, top}
    pts.update(r.n_evals / (r.dim + 1) for r in records if math.isfinite(r.n_evals))
    return np.array(sorted(p for p in pts if p <= top))


__all__ = [
    "SolveRecord",
    "n_to_solve",
    "performance_ratios",
    "performance_profile",
    "data_profile",
    "solved_fraction",
    "performance_alphas",
    "data_alphas",
]
