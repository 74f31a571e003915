"""Benchmark problems, domain scaling and VAE training-data sampling.

Full-rank problems are defined for any ambient dimension on their canonical
boxes. Low-rank problems embed a 4-dimensional function into ``D``
dimensions: the base function is rescaled to ``[-1, 1]^4``, padded with
``D - 4`` dummy coordinates and composed with a random rotation ``Q``, so
``f(x) = h(Qx)`` is constant along the last ``D - 4`` rows of ``Q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, InputError

__all__ = [
    "Box",
    "Problem",
    "LabelledDataset",
    "eval_benchmark",
    "make_problem",
    "make_low_rank",
    "affine_scale",
    "sample_unlabelled",
    "subsample_labelled",
    "random_orthogonal",
    "VAE_BOX_HALF_WIDTH",
    "FULL_RANK",
    "LOW_RANK",
]

#: The fixed VAE input space is ``[-3, 3]^D``.
VAE_BOX_HALF_WIDTH = 3.0


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned hyper-rectangle ``lower <= x <= upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InputError(f"box bounds have mismatched shapes {lo.shape} and {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InputError("box bounds must be finite")
        if np.any(lo >= hi):
            raise InputError("box needs lower < upper in every coordinate")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, low: float, high: float, dim: int) -> "Box":
        return cls(np.full(dim, float(low)), np.full(dim, float(high)))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def centre(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lower + rng.random((n, self.dim)) * self.widths

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


@dataclass(frozen=True, eq=False)
class Problem:
    """A black-box objective on a box with a known global minimum.

    Calling the problem clips ``x`` into ``domain`` first, so projections that
    land outside the box (REMBO) are evaluated on the boundary.
    """

    name: str
    dim: int
    domain: Box
    f_star: float
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    effective_dim: Optional[int] = None
    rotation: Optional[np.ndarray] = field(default=None, repr=False)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise InputError(f"{self.name} expects dimension {self.dim}, got {x.shape[-1]}")
        out = self.func(self.domain.clip(x))
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class LabelledDataset:
    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        vals = np.atleast_1d(np.asarray(self.values, dtype=float))
        if pts.shape[0] != vals.shape[0]:
            raise InputError("points and values must have equal lengths")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# closed-form benchmark functions, vectorised over the last axis

def ackley(x):
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    s1 = np.sum(x**2, axis=-1) / d
    s2 = np.sum(np.cos(2.0 * np.pi * x), axis=-1) / d
    return -20.0 * np.exp(-0.2 * np.sqrt(s1)) - np.exp(s2) + 20.0 + math.e


def levy(x):
    x = np.asarray(x, dtype=float)
    w = 1.0 + (x - 1.0) / 4.0
    head = np.sin(np.pi * w[..., 0]) ** 2
    mid = np.sum((w[..., :-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * w[..., :-1] + 1.0) ** 2), axis=-1)
    tail = (w[..., -1] - 1.0) ** 2 * (1.0 + np.sin(2.0 * np.pi * w[..., -1]) ** 2)
    return head + mid + tail


def rosenbrock(x):
    x = np.asarray(x, dtype=float)
    return np.sum(100.0 * (x[..., 1:] - x[..., :-1] ** 2) ** 2 + (x[..., :-1] - 1.0) ** 2, axis=-1)


def styblinski_tang(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * np.sum(x**4 - 16.0 * x**2 + 5.0 * x, axis=-1)


def rastrigin(x):
    x = np.asarray(x, dtype=float)
    return 10.0 * x.shape[-1] + np.sum(x**2 - 10.0 * np.cos(2.0 * np.pi * x), axis=-1)


_SHEKEL_C = np.array([
    [4.0, 1.0, 8.0, 6.0, 3.0, 2.0, 5.0, 8.0, 6.0, 7.0],
    [4.0, 1.0, 8.0, 6.0, 7.0, 9.0, 3.0, 1.0, 2.0, 3.6],
    [4.0, 1.0, 8.0, 6.0, 3.0, 2.0, 5.0, 8.0, 6.0, 7.0],
    [4.0, 1.0, 8.0, 6.0, 7.0, 9.0, 3.0, 1.0, 2.0, 3.6],
])
_SHEKEL_BETA = 0.1 * np.array([1.0, 2.0, 2.0, 4.0, 4.0, 6.0, 3.0, 7.0, 5.0, 5.0])


def _shekel(m):
    def f(x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != 4:
            raise InputError(f"Shekel is 4-dimensional, got {x.shape[-1]}")
        diff = x[..., :, None] - _SHEKEL_C[:, :m]
        return -np.sum(1.0 / (np.sum(diff**2, axis=-2) + _SHEKEL_BETA[:m]), axis=-1)

    return f


shekel5 = _shekel(5)
shekel7 = _shekel(7)


@dataclass(frozen=True)
class _Spec:
    func: Callable
    low: float
    high: float
    minimizer: Optional[float]  # coordinate value of the (diagonal) minimizer
    f_star: Optional[float]  # None: f_star scales with D
    fixed_dim: Optional[int] = None


_BASE = {
    "ackley": _Spec(ackley, -30.0, 30.0, 0.0, 0.0),
    "levy": _Spec(levy, -10.0, 10.0, 1.0, 0.0),
    "rosenbrock": _Spec(rosenbrock, -5.0, 10.0, 1.0, 0.0),
    "styblinski_tang": _Spec(styblinski_tang, -5.0, 5.0, -2.903534, None),
    "rastrigin": _Spec(rastrigin, -5.12, 5.12, 0.0, 0.0),
    "shekel5": _Spec(shekel5, 0.0, 10.0, 4.0, -10.1532, fixed_dim=4),
    "shekel7": _Spec(shekel7, 0.0, 10.0, 4.0, -10.4029, fixed_dim=4),
}

# Low-rank bases use their own 4-dimensional domains.
_LOW_RANK_BASE = {
    "ackley": (-5.0, 5.0),
    "rosenbrock": (-5.0, 10.0),
    "shekel5": (0.0, 10.0),
    "shekel7": (0.0, 10.0),
    "styblinski_tang": (-5.0, 5.0),
}
LOW_RANK_EFFECTIVE_DIM = 4
ST_PER_DIM_MIN = -39.16599

FULL_RANK = ("ackley", "levy", "rosenbrock", "styblinski_tang", "rastrigin")
LOW_RANK = tuple(f"lr_{name}" for name in _LOW_RANK_BASE)


def _f_star(name: str, dim: int) -> float:
    spec = _BASE[name]
    if spec.f_star is None:
        return ST_PER_DIM_MIN * dim
    return spec.f_star


def eval_benchmark(name: str, x) -> float:
    """Evaluate a named benchmark function at ``x`` (no clipping)."""
    try:
        spec = _BASE[name]
    except KeyError:
        raise ConfigError(f"unknown benchmark function {name!r}") from None
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InputError(f"{name} needs a non-empty vector, got shape {x.shape}")
    if name == "rosenbrock" and x.size < 2:
        raise InputError("rosenbrock needs at least 2 coordinates")
    if spec.fixed_dim is not None and x.size != spec.fixed_dim:
        raise InputError(f"{name} is {spec.fixed_dim}-dimensional, got {x.size}")
    return float(spec.func(x))


def affine_scale(x, source: Box, target: Box, tol: float = 1e-9) -> np.ndarray:
    """Map ``x`` componentwise from ``source`` onto ``target``."""
    x = np.asarray(x, dtype=float)
    if not source.contains(x, tol=tol):
        raise InputError("point lies outside the source box")
    return target.lower + (x - source.lower) * (target.widths / source.widths)


def random_orthogonal(dim: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix from a seeded Gaussian QR."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def make_problem(name: str, dim: Optional[int] = None, seed: int = 0) -> Problem:
    """Build a registered problem by name (``ackley`` ... ``lr_styblinski_tang``)."""
    if name.startswith("lr_"):
        if dim is None:
            raise InputError("low-rank problems need an ambient dimension")
        return make_low_rank(name[3:], dim, seed)
    if name not in FULL_RANK:
        raise ConfigError(f"unknown problem {name!r}")
    if dim is None or dim < 1:
        raise InputError(f"problem {name!r} needs a positive dimension")
    spec = _BASE[name]
    return Problem(
        name=name,
        dim=dim,
        domain=Box.cube(spec.low, spec.high, dim),
        f_star=_f_star(name, dim),
        func=spec.func,
    )


def make_low_rank(base: str, ambient_dim: int, seed: int, rotation=None) -> Problem:
    """Low-rank embedding ``f(x) = h(Qx)`` of a 4-dimensional base function.

    ``rotation`` overrides the random ``Q`` (must be ``ambient_dim`` square).
    """
    if base not in _LOW_RANK_BASE:
        raise ConfigError(f"unknown low-rank base {base!r}")
    de = LOW_RANK_EFFECTIVE_DIM
    if ambient_dim < de:
        raise InputError(f"ambient dimension {ambient_dim} is below the effective dimension {de}")
    if rotation is None:
        q = random_orthogonal(ambient_dim, seed)
    else:
        q = np.asarray(rotation, dtype=float)
        if q.shape != (ambient_dim, ambient_dim):
            raise InputError("rotation must be a square matrix of the ambient dimension")
    q_eff = q[:de].copy()
    low, high = _LOW_RANK_BASE[base]
    inner = _BASE[base].func
    half = 0.5 * (high - low)
    mid = 0.5 * (high + low)

    def func(x):
        y = np.asarray(x, dtype=float) @ q_eff.T
        return inner(mid + half * y)

    f_star = _BASE[base].f_star if _BASE[base].f_star is not None else ST_PER_DIM_MIN * de
    return Problem(
        name=f"lr_{base}",
        dim=ambient_dim,
        domain=Box.cube(-1.0, 1.0, ambient_dim),
        f_star=float(f_star),
        func=func,
        effective_dim=de,
        rotation=q,
    )


def sample_unlabelled(dim: int, count: int, seed: int) -> np.ndarray:
    """Correlated Gaussian samples clipped to the VAE input box.

    Covariance ``exp(-|i - j| / (D / 4))`` has unit marginals, so neighbouring
    coordinates are strongly correlated for large ``D``.
    """
    if dim < 1 or count < 1:
        raise InputError("dimension and sample count must be positive")
    idx = np.arange(dim)
    cov = np.exp(-np.abs(idx[:, None] - idx[None, :]) / (dim / 4.0))
    chol = np.linalg.cholesky(cov)
    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((count, dim)) @ chol.T
    return np.clip(draws, -VAE_BOX_HALF_WIDTH, VAE_BOX_HALF_WIDTH)


def subsample_labelled(full: LabelledDataset, fraction: float, seed: int) -> LabelledDataset:
    """Uniform subset of ``ceil(fraction * n)`` elements without replacement."""
    n = len(full)
    if n == 0:
        raise InputError("cannot subsample an empty dataset")
    if not 0.0 < fraction <= 1.0:
        raise InputError("fraction must lie in (0, 1]")
    size = math.ceil(fraction * n - 1e-12)
    idx = np.random.default_rng(seed).choice(n, size=size, replace=False)
    return LabelledDataset(full.points[idx], full.values[idx])
