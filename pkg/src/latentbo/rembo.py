"""Random embedding BO: search ``y`` in ``[-delta, delta]^d`` and evaluate
``f(clip(A y))`` for a Gaussian ``D x d`` matrix ``A``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import gp
from .acquisition import AcquisitionQuery, propose
from .errors import InputError, NumericalError
from .testbed import Box, Problem
from .trace import Trace

N_INITIAL = 10


@dataclass(frozen=True)
class Embedding:
    matrix_a: np.ndarray
    delta: float

    @property
    def reduced_dim(self) -> int:
        return self.matrix_a.shape[1]

    @property
    def box(self) -> Box:
        return Box.cube(-self.delta, self.delta, self.reduced_dim)


def draw_embedding(ambient_dim: int, effective_dim: int, seed: int) -> Embedding:
    """Gaussian embedding with ``d = d_e + 1`` and ``delta = 2.2 sqrt(d_e)``."""
    d = effective_dim + 1
    if effective_dim < 1 or ambient_dim < d:
        raise InputError(f"need 1 <= d_e and d_e + 1 <= D, got d_e={effective_dim}, D={ambient_dim}")
    a = np.random.default_rng(seed).standard_normal((ambient_dim, d))
    return Embedding(a, 2.2 * math.sqrt(effective_dim))


def project_up(emb: Embedding, y, domain: Box) -> np.ndarray:
    """``clip(A y)`` into ``domain``; rows of a 2-D ``y`` map independently."""
    y = np.asarray(y, dtype=float)
    return domain.clip(y @ emb.matrix_a.T)


def run_rembo(problem: Problem, budget: int, seed: int, n_initial: int = N_INITIAL,
              fit_opts: gp.FitOptions = gp.FitOptions(), embedding: Embedding | None = None) -> Trace:
    """GP-EI search over the embedded box; the trace stores ambient points and ``y``."""
    if problem.effective_dim is None:
        raise InputError("REMBO needs a problem with a known effective dimension")
    if budget < 1:
        raise InputError("budget must be positive")
    started = time.perf_counter()
    emb = embedding or draw_embedding(problem.dim, problem.effective_dim, seed)
    ybox = emb.box
    unit = Box.cube(0.0, 1.0, emb.reduced_dim)
    rng = np.random.default_rng([seed, 17])

    trace = Trace(meta={"algorithm": "rembo", "delta": emb.delta, "reduced_dim": emb.reduced_dim})
    ys = ybox.sample(rng, n_initial)
    for y in ys:
        x = project_up(emb, y, problem.domain)
        trace.append(0, x, problem(x), z=y)
    fvals = list(trace.f)
    ylist = list(ys)

    params = None
    for k in range(budget):
        u = (np.asarray(ylist) - ybox.lower) / ybox.widths
        try:
            model = gp.fit(u, fvals, fit_opts, seed=[seed, k], warm_start=params)
        except NumericalError:
            try:
                model = gp.fit(u, fvals, fit_opts, seed=[seed, k, 1])
            except NumericalError as exc:
                trace.meta["aborted"] = f"iteration {k + 1}: {exc}"
                break
        params = model.params
        prop = propose(AcquisitionQuery(model, min(fvals), unit, seed=[seed, k, 2]))
        y = ybox.lower + prop.x * ybox.widths
        x = project_up(emb, y, problem.domain)
        fx = problem(x)
        trace.append(k + 1, x, fx, z=y)
        fvals.append(fx)
        ylist.append(y)
    trace.meta["wall_time"] = time.perf_counter() - started
    return trace


__all__ = ["Embedding", "draw_embedding", "project_up", "run_rembo"]
