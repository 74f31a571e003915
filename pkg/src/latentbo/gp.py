"""Gaussian-process regression with an ARD Matern-5/2 kernel.

Targets are standardised before fitting and the prior mean is zero in the
standardised space; :func:`posterior` maps predictions back to the original
scale. Hyperparameters are fitted by maximising the log marginal likelihood
with bounded Nelder-Mead searches in log-space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .errors import InputError, NumericalError

SQRT5 = math.sqrt(5.0)

LENGTHSCALE_BOUNDS = (1e-2, 1e2)
SIGNAL_BOUNDS = (1e-3, 1e3)
NOISE_BOUNDS = (1e-8, 1e-1)

JITTER_START = 1e-10
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class KernelParams:
    signal_variance: float
    lengthscales: np.ndarray
    noise_variance: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if not self.signal_variance > 0:
            raise InputError("signal variance must be positive")
        if np.any(ls <= 0) or not np.all(np.isfinite(ls)):
            raise InputError("lengthscales must be positive and finite")
        if not self.noise_variance >= 0:
            raise InputError("noise variance must be non-negative")

    def to_log(self) -> np.ndarray:
        return np.concatenate([
            np.log(self.lengthscales),
            [math.log(self.signal_variance), math.log(max(self.noise_variance, NOISE_BOUNDS[0]))],
        ])

    @classmethod
    def from_log(cls, theta) -> "KernelParams":
        theta = np.asarray(theta, dtype=float)
        return cls(
            signal_variance=float(np.exp(theta[-2])),
            lengthscales=np.exp(theta[:-2]),
            noise_variance=float(np.exp(theta[-1])),
        )


@dataclass(frozen=True)
class GpModel:
    params: KernelParams
    train_inputs: np.ndarray
    train_targets: np.ndarray  # standardised
    target_mean: float
    target_std: float
    chol: np.ndarray
    alpha: np.ndarray  # (K + noise I)^-1 y
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.train_inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.train_inputs.shape[1]


def _scaled_distance(a, b, lengthscales):
    a = np.atleast_2d(a) / lengthscales
    b = np.atleast_2d(b) / lengthscales
    sq = np.sum(a**2, axis=1)[:, None] + np.sum(b**2, axis=1)[None, :] - 2.0 * a @ b.T
    return np.sqrt(np.maximum(sq, 0.0))


def _matern_from_r(r, signal_variance):
    sr = SQRT5 * r
    return signal_variance * (1.0 + sr + sr * sr / 3.0) * np.exp(-sr)


def matern52(a, b, p: KernelParams) -> float:
    """Matern-5/2 covariance between two points."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.shape[-1] != p.lengthscales.size:
        raise InputError("points and lengthscales must share one dimension")
    r = float(np.linalg.norm((a - b) / p.lengthscales))
    return float(_matern_from_r(r, p.signal_variance))


def kernel_matrix(a, b, p: KernelParams) -> np.ndarray:
    return _matern_from_r(_scaled_distance(a, b, p.lengthscales), p.signal_variance)


def _factor(k: np.ndarray):
    """Cholesky with jitter escalation; returns (L, jitter used)."""
    jitter = 0.0
    n = k.shape[0]
    while True:
        try:
            return np.linalg.cholesky(k + jitter * np.eye(n)), jitter
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX * (1 + 1e-9):
                raise NumericalError("kernel matrix is not positive definite after jitter") from None


def _standardise(y):
    mean = float(np.mean(y))
    std = float(np.std(y))
    if not std > 1e-12:
        std = 1.0
    return (y - mean) / std, mean, std


def condition(inputs, targets, params: KernelParams) -> GpModel:
    """Factorise the kernel matrix for fixed hyperparameters."""
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).ravel()
    if x.shape[0] != y.size:
        raise InputError("inputs and targets must have equal lengths")
    if x.shape[1] != params.lengthscales.size:
        raise InputError("lengthscales do not match the input dimension")
    ys, mean, std = _standardise(y)
    k = kernel_matrix(x, x, params) + params.noise_variance * np.eye(y.size)
    chol, jitter = _factor(k)
    alpha = cho_solve((chol, True), ys)
    return GpModel(params, x, ys, mean, std, chol, alpha, jitter)


def log_marginal_likelihood(model: GpModel) -> float:
    """Log evidence of the standardised targets."""
    y = model.train_targets
    n = y.size
    return float(
        -0.5 * y @ model.alpha
        - np.sum(np.log(np.diag(model.chol)))
        - 0.5 * n * math.log(2.0 * math.pi)
    )


def _negative_lml(theta, x, ys):
    p = KernelParams.from_log(theta)
    k = kernel_matrix(x, x, p)
    k[np.diag_indices_from(k)] += p.noise_variance
    try:
        chol, _ = _factor(k)
    except NumericalError:
        return 1e25
    alpha = cho_solve((chol, True), ys)
    return float(0.5 * ys @ alpha + np.sum(np.log(np.diag(chol))) + 0.5 * ys.size * math.log(2.0 * math.pi))


@dataclass(frozen=True)
class FitOptions:
    restarts: int = 8
    max_evals: int = 400
    warm_max_evals: int = 150


def _log_bounds(dim):
    lo = np.log([LENGTHSCALE_BOUNDS[0]] * dim + [SIGNAL_BOUNDS[0], NOISE_BOUNDS[0]])
    hi = np.log([LENGTHSCALE_BOUNDS[1]] * dim + [SIGNAL_BOUNDS[1], NOISE_BOUNDS[1]])
    return lo, hi


def fit(inputs, targets, opts: FitOptions = FitOptions(), seed: int = 0,
        warm_start: Optional[KernelParams] = None) -> GpModel:
    """Maximum-likelihood hyperparameters by multi-start Nelder-Mead.

    With ``warm_start`` a single local search starts from the given
    hyperparameters instead of the random restarts.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).ravel()
    if y.size < 2:
        raise InputError("need at least two training points")
    if x.shape[0] != y.size:
        raise InputError("inputs and targets must have equal lengths")
    ys, _, _ = _standardise(y)
    dim = x.shape[1]
    lo, hi = _log_bounds(dim)
    bounds = list(zip(lo, hi))

    if warm_start is not None and warm_start.lengthscales.size == dim:
        starts = [np.clip(warm_start.to_log(), lo, hi)]
        max_evals = opts.warm_max_evals
    else:
        rng = np.random.default_rng(seed)
        default = np.concatenate([np.zeros(dim), [0.0, math.log(1e-4)]])
        starts = [default] + [lo + rng.random(dim + 2) * (hi - lo) for _ in range(opts.restarts - 1)]
        max_evals = opts.max_evals

    best_theta, best_val = None, np.inf
    for start in starts:
        val0 = _negative_lml(start, x, ys)
        res = minimize(
            _negative_lml, start, args=(x, ys), method="Nelder-Mead", bounds=bounds,
            options={"maxfev": max_evals, "xatol": 1e-3, "fatol": 1e-6},
        )
        theta, val = (res.x, res.fun) if res.fun <= val0 else (start, val0)
        if val < best_val:
            best_theta, best_val = np.clip(theta, lo, hi), val
    if best_theta is None or not np.isfinite(best_val) or best_val >= 1e25:
        raise NumericalError("hyperparameter search found no factorisable kernel")
    return condition(x, y, KernelParams.from_log(best_theta))


def predict(model: GpModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at each row of ``x`` (original scale)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.dim:
        raise InputError(f"query dimension {x.shape[1]} does not match the model's {model.dim}")
    p = model.params
    k_star = kernel_matrix(model.train_inputs, x, p)
    mean = k_star.T @ model.alpha
    v = solve_triangular(model.chol, k_star, lower=True)
    var = p.signal_variance - np.sum(v * v, axis=0)
    var = np.maximum(var, 0.0)
    return model.target_mean + model.target_std * mean, var * model.target_std**2


def posterior(model: GpModel, x):
    """Posterior ``(mean, variance)``; scalars for a single point."""
    x = np.asarray(x, dtype=float)
    mean, var = predict(model, x)
    if x.ndim == 1:
        return float(mean[0]), float(var[0])
    return mean, var


def with_params(model: GpModel, params: KernelParams) -> GpModel:
    return condition(model.train_inputs, model.target_mean + model.target_std * model.train_targets, params)


__all__ = [
    "KernelParams",
    "GpModel",
    "FitOptions",
    "matern52",
    "kernel_matrix",
    "condition",
    "log_marginal_likelihood",
    "fit",
    "predict",
    "posterior",
    "with_params",
]
