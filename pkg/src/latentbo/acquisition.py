"""Expected Improvement for minimisation and its maximisation over a box."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import InputError
from .gp import GpModel, predict
from .testbed import Box

N_CANDIDATES = 1024
N_REFINE_STARTS = 8
N_SWEEPS = 20
INITIAL_STEP = 0.1  # fraction of the region width

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def ei(mean, std, best):
    """Expected improvement below the incumbent ``best``.

    Works elementwise on arrays; ``std == 0`` gives ``max(best - mean, 0)``.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std < 0):
        raise InputError("standard deviation must be non-negative")
    gap = best - mean
    safe = np.where(std > 0, std, 1.0)
    with np.errstate(over="ignore"):
        u = gap / safe
        val = gap * ndtr(u) + safe * _INV_SQRT_2PI * np.exp(-0.5 * u * u)
    out = np.where(std > 0, np.maximum(val, 0.0), np.maximum(gap, 0.0))
    return float(out) if out.ndim == 0 else out


def ei_at(model: GpModel, x, best: float) -> np.ndarray:
    mean, var = predict(model, x)
    return ei(mean, np.sqrt(var), best)


@dataclass(frozen=True)
class AcquisitionQuery:
    model: GpModel
    best_value: float
    region: Box
    seed: int = 0


@dataclass(frozen=True)
class Proposal:
    x: np.ndarray
    ei: float
    fallback: bool  # True when every candidate had zero EI


def propose(query: AcquisitionQuery) -> Proposal:
    """Maximise EI: uniform candidates, then coordinate search from the best few.

    Ties break towards the lowest candidate index, so the result depends only
    on the seed.
    """
    region = query.region
    if not np.isfinite(query.best_value):
        raise InputError("incumbent value must be finite")
    rng = np.random.default_rng(query.seed)
    cand = region.sample(rng, N_CANDIDATES)
    vals = ei_at(query.model, cand, query.best_value)
    if not np.max(vals) > 0.0:
        mean, _ = predict(query.model, cand)
        i = int(np.argmin(mean))
        return Proposal(cand[i], 0.0, True)

    order = np.argsort(-vals, kind="stable")[:N_REFINE_STARTS]
    pts = cand[order].copy()
    cur = vals[order].copy()
    dim = region.dim
    step = INITIAL_STEP * region.widths
    for _ in range(N_SWEEPS):
        for j in range(dim):
            for sign in (1.0, -1.0):
                trial = pts.copy()
                trial[:, j] = np.clip(trial[:, j] + sign * step[j], region.lower[j], region.upper[j])
                tv = ei_at(query.model, trial, query.best_value)
                better = tv > cur
                pts[better] = trial[better]
                cur[better] = tv[better]
        step = step * 0.5
    i = int(np.argmax(cur))
    return Proposal(pts[i], float(cur[i]), False)


def maximize(query: AcquisitionQuery) -> np.ndarray:
    """Point in ``query.region`` with the largest EI found."""
    return propose(query).x
