"""Optimisation drivers.

``bo_sdr``        GP-EI in the ambient box with SDR.
``v_bovae``       GP-EI in the latent space of a pre-trained VAE, latent SDR.
``v_bovae_nosdr`` as above with the latent box held fixed.
``r_bovae``       periodic VAE retraining on the labelled set, latent SDR
                  restarted after every retrain.
``s_bovae``       periodic retraining with the soft-triplet loss, no SDR.
``rembo``         random-embedding baseline (see :mod:`latentbo.rembo`).

VAE drivers only ever evaluate decoded points, mapped from the VAE box
``[-3, 3]^D`` onto the problem domain.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import gp, sdr
from . import vae as vae_mod
from .acquisition import AcquisitionQuery, propose
from .errors import ConfigError, InputError, NumericalError
from .rembo import run_rembo
from .testbed import (
    VAE_BOX_HALF_WIDTH,
    Box,
    LabelledDataset,
    Problem,
    affine_scale,
    make_problem,
    sample_unlabelled,
    subsample_labelled,
)
from .trace import Trace

log = logging.getLogger(__name__)

ALGORITHMS = ("bo_sdr", "v_bovae", "v_bovae_nosdr", "r_bovae", "s_bovae", "rembo")


@dataclass(frozen=True)
class RunConfig:
    problem: str
    algorithm: str
    dim: int
    budget: int = 350
    retrain_period: int = 50
    latent_dim: int = 2
    hidden: tuple = (30,)
    seed: int = 0
    sdr: sdr.SdrParams = field(default_factory=sdr.SdrParams)
    triplet: vae_mod.TripletParams = field(default_factory=vae_mod.TripletParams)
    latent_box: float = 5.0  # R0 = [-latent_box, latent_box]^d
    n_init: int = 10  # ambient initial design (bo_sdr)
    unlabelled: int = 50000  # M
    labelled_fraction: float = 0.01  # N = ceil(fraction * M)
    pretrain_epochs: int = 300
    pretrain_batch: int = 1024
    retrain_epochs: int = 2
    retrain_batch: int = 256
    lr: float = 1e-3
    gp_restarts: int = 8
    gp_max_evals: int = 400
    gp_warm_max_evals: int = 150

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.budget < 1:
            raise ConfigError("budget must be at least 1")
        if self.retrain_period < 1:
            raise ConfigError("retrain_period must be at least 1")
        if self.dim < 1:
            raise ConfigError("dim must be positive")
        if self.algorithm in ("v_bovae", "v_bovae_nosdr", "r_bovae", "s_bovae") and not self.latent_dim < self.dim:
            raise ConfigError("latent_dim must be smaller than dim")
        if uses_vae(self.algorithm) and math.ceil(self.labelled_fraction * self.unlabelled - 1e-12) < 2:
            raise ConfigError("the initial labelled set (labelled_fraction * unlabelled) needs at least 2 points")
        if self.algorithm in ("bo_sdr", "rembo") and self.n_init < 2:
            raise ConfigError("n_init must be at least 2")

    @property
    def cycles(self) -> int:
        return math.ceil(self.budget / self.retrain_period)

    @property
    def fit_opts(self) -> gp.FitOptions:
        return gp.FitOptions(self.gp_restarts, self.gp_max_evals, self.gp_warm_max_evals)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["hidden"] = list(self.hidden)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        if "sdr" in data and isinstance(data["sdr"], dict):
            data["sdr"] = sdr.SdrParams(**data["sdr"])
        if "triplet" in data and isinstance(data["triplet"], dict):
            data["triplet"] = vae_mod.TripletParams(**data["triplet"])
        if "hidden" in data:
            data["hidden"] = tuple(int(h) for h in data["hidden"])
        return cls(**data)


def build_problem(cfg: RunConfig) -> Problem:
    # randomised (low-rank) problems draw their rotation from the run seed
    return make_problem(cfg.problem, cfg.dim, seed=cfg.seed)


def vae_box(dim: int) -> Box:
    return Box.cube(-VAE_BOX_HALF_WIDTH, VAE_BOX_HALF_WIDTH, dim)


# ---------------------------------------------------------------------------
# VAE provisioning

def checkpoint_name(cfg: RunConfig) -> str:
    hidden = "-".join(str(h) for h in cfg.hidden)
    return (f"vae_D{cfg.dim}_d{cfg.latent_dim}_h{hidden}_M{cfg.unlabelled}"
            f"_e{cfg.pretrain_epochs}_b{cfg.pretrain_batch}_s{cfg.seed}.json")


def pretrained_vae(cfg: RunConfig, cache_dir: Optional[Path] = None) -> vae_mod.VaeModel:
    """Pre-train on correlated samples of the VAE box, reusing a cached checkpoint."""
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / checkpoint_name(cfg)
        if path.exists():
            return vae_mod.load_vae(path)
    data = sample_unlabelled(cfg.dim, cfg.unlabelled, seed=cfg.seed)
    model = vae_mod.VaeModel.init(cfg.dim, cfg.hidden, cfg.latent_dim, seed=cfg.seed)
    model = vae_mod.pretrain(
        model, data, vae_mod.AnnealSchedule(),
        vae_mod.TrainOptions(cfg.pretrain_epochs, cfg.pretrain_batch, cfg.lr), seed=cfg.seed,
    )
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        vae_mod.save_vae(model, tmp)
        tmp.replace(path)
    return model


def initial_labelled(cfg: RunConfig, problem: Problem):
    """1% subset of the unlabelled samples, evaluated through the domain scaling.

    Returns ``(points in the VAE box, ambient points, values)``.
    """
    data = sample_unlabelled(cfg.dim, cfg.unlabelled, seed=cfg.seed)
    subset = subsample_labelled(LabelledDataset(data, np.zeros(data.shape[0])), cfg.labelled_fraction,
                                seed=cfg.seed + 1)
    xv = subset.points
    xa = affine_scale(xv, vae_box(cfg.dim), problem.domain)
    return xv, xa, np.asarray(problem(xa), dtype=float).reshape(-1)


# ---------------------------------------------------------------------------
# shared pieces

def _fit(z, fvals, cfg, seed, warm, trace, k) -> Optional[gp.GpModel]:
    try:
        return gp.fit(z, fvals, cfg.fit_opts, seed=seed, warm_start=warm)
    except NumericalError:
        try:
            return gp.fit(z, fvals, cfg.fit_opts, seed=list(seed) + [1])
        except NumericalError as exc:
            trace.meta["aborted"] = f"iteration {k}: {exc}"
            log.warning("GP fit failed at iteration %d: %s", k, exc)
            return None


def _snapshot(roi: Optional[sdr.RoiState]):
    if roi is None:
        return None
    return [roi.roi.lower.tolist(), roi.roi.upper.tolist()]


def _note_fallback(trace: Trace, fallback: bool) -> None:
    if fallback:
        trace.meta["ei_fallbacks"] = trace.meta.get("ei_fallbacks", 0) + 1


def _start(cfg: RunConfig, name: str) -> Trace:
    return Trace(meta={"algorithm": name, "config": cfg.to_dict(), "roi": [], "ei_fallbacks": 0})


# ---------------------------------------------------------------------------
# drivers

def run_bo_sdr(cfg: RunConfig, problem: Optional[Problem] = None) -> Trace:
    """Ambient-space BO with SDR; the GP sees inputs rescaled to the unit cube."""
    problem = problem or build_problem(cfg)
    started = time.perf_counter()
    dom = problem.domain
    rng = np.random.default_rng([cfg.seed, 11])
    trace = _start(cfg, "bo_sdr")
    x0 = dom.sample(rng, cfg.n_init)
    f0 = np.asarray(problem(x0), dtype=float).reshape(-1)
    for x, fx in zip(x0, f0):
        trace.append(0, x, fx)
    xs, fvals = list(x0), list(f0)

    roi = sdr.init_roi(dom, xs[int(np.argmin(fvals))], min_size=cfg.sdr.min_size)
    params = None
    for k in range(cfg.budget):
        u = (np.asarray(xs) - dom.lower) / dom.widths
        model = _fit(u, fvals, cfg, [cfg.seed, k], params, trace, k + 1)
        if model is None:
            break
        params = model.params
        region = Box((roi.roi.lower - dom.lower) / dom.widths, (roi.roi.upper - dom.lower) / dom.widths)
        prop = propose(AcquisitionQuery(model, min(fvals), region, seed=[cfg.seed, k, 2]))
        _note_fallback(trace, prop.fallback)
        x = dom.clip(dom.lower + prop.x * dom.widths)
        fx = problem(x)
        trace.append(k + 1, x, fx)
        xs.append(x)
        fvals.append(fx)
        if sdr.due(roi, k, cfg.sdr):
            roi = sdr.update_roi(roi, xs[int(np.argmin(fvals))], cfg.sdr)
        trace.meta["roi"].append(_snapshot(roi))
    trace.meta["wall_time"] = time.perf_counter() - started
    return trace


def _latent_centre(z, fvals, outer: Box):
    return outer.clip(np.asarray(z)[int(np.argmin(fvals))])


def run_vanilla_bovae(cfg: RunConfig, with_sdr: bool = True, problem: Optional[Problem] = None,
                      vae: Optional[vae_mod.VaeModel] = None, cache_dir=None) -> Trace:
    """Latent-space BO on a frozen pre-trained VAE."""
    problem = problem or build_problem(cfg)
    started = time.perf_counter()
    model_vae = vae or pretrained_vae(cfg, cache_dir)
    trace = _start(cfg, "v_bovae" if with_sdr else "v_bovae_nosdr")
    vbox = vae_box(cfg.dim)
    outer = Box.cube(-cfg.latent_box, cfg.latent_box, cfg.latent_dim)

    xv, xa, f0 = initial_labelled(cfg, problem)
    z0, _ = vae_mod.encode(model_vae, xv)
    for x, fx, z in zip(xa, f0, z0):
        trace.append(0, x, fx, z=z)
    zs, fvals = list(z0), list(f0)

    roi = sdr.init_roi(outer, _latent_centre(zs, fvals, outer), min_size=cfg.sdr.min_size) if with_sdr else None
    params = None
    for k in range(cfg.budget):
        model = _fit(np.asarray(zs), fvals, cfg, [cfg.seed, k], params, trace, k + 1)
        if model is None:
            break
        params = model.params
        region = roi.roi if roi is not None else outer
        prop = propose(AcquisitionQuery(model, min(fvals), region, seed=[cfg.seed, k, 2]))
        _note_fallback(trace, prop.fallback)
        z = prop.x
        x = affine_scale(vae_mod.decode(model_vae, z), vbox, problem.domain)
        fx = problem(x)
        trace.append(k + 1, x, fx, z=z)
        zs.append(z)
        fvals.append(fx)
        if roi is not None and sdr.due(roi, k, cfg.sdr):
            roi = sdr.update_roi(roi, _latent_centre(zs, fvals, outer), cfg.sdr)
        trace.meta["roi"].append(_snapshot(roi))
    trace.meta["wall_time"] = time.perf_counter() - started
    return trace


def _run_retraining(cfg: RunConfig, use_dml: bool, with_sdr: bool, name: str,
                    problem: Optional[Problem], vae: Optional[vae_mod.VaeModel], cache_dir) -> Trace:
    problem = problem or build_problem(cfg)
    started = time.perf_counter()
    model_vae = vae or pretrained_vae(cfg, cache_dir)
    trace = _start(cfg, name)
    trace.meta["retrains"] = []
    vbox = vae_box(cfg.dim)
    outer = Box.cube(-cfg.latent_box, cfg.latent_box, cfg.latent_dim)
    retrain_opts = vae_mod.TrainOptions(cfg.retrain_epochs, cfg.retrain_batch, cfg.lr)

    xv, xa, f0 = initial_labelled(cfg, problem)
    z0, _ = vae_mod.encode(model_vae, xv)
    for x, fx, z in zip(xa, f0, z0):
        trace.append(0, x, fx, z=z)
    xl, fvals = list(xv), list(f0)
    zs = list(z0)

    evals = 0
    for cycle in range(cfg.cycles):
        model_vae = vae_mod.retrain(model_vae, np.asarray(xl), np.asarray(fvals), use_dml, cfg.triplet,
                                    retrain_opts, seed=[cfg.seed, cycle, 5])
        new_z, _ = vae_mod.encode(model_vae, np.asarray(xl))
        shift = float(np.max(np.abs(new_z - np.asarray(zs)))) if zs else 0.0
        zs = list(new_z)
        trace.meta["retrains"].append({"cycle": cycle + 1, "n_labelled": len(xl), "latent_shift": shift})
        roi = sdr.init_roi(outer, _latent_centre(zs, fvals, outer), min_size=cfg.sdr.min_size) if with_sdr else None
        params = None
        for k in range(cfg.retrain_period):
            if evals >= cfg.budget:
                break
            it = evals + 1
            model = _fit(np.asarray(zs), fvals, cfg, [cfg.seed, cycle, k], params, trace, it)
            if model is None:
                trace.meta["wall_time"] = time.perf_counter() - started
                return trace
            params = model.params
            region = roi.roi if roi is not None else outer
            prop = propose(AcquisitionQuery(model, min(fvals), region, seed=[cfg.seed, cycle, k, 2]))
            _note_fallback(trace, prop.fallback)
            z = prop.x
            x_v = vae_mod.decode(model_vae, z)
            x = affine_scale(x_v, vbox, problem.domain)
            fx = problem(x)
            trace.append(it, x, fx, z=z)
            evals += 1
            xl.append(x_v)
            zs.append(z)
            fvals.append(fx)
            if roi is not None and sdr.due(roi, k, cfg.sdr):
                roi = sdr.update_roi(roi, _latent_centre(zs, fvals, outer), cfg.sdr)
            trace.meta["roi"].append(_snapshot(roi) if roi is not None else [outer.lower.tolist(), outer.upper.tolist()])
    trace.meta["wall_time"] = time.perf_counter() - started
    return trace


def run_retrain_bovae(cfg: RunConfig, with_sdr: bool = True, problem=None, vae=None, cache_dir=None) -> Trace:
    """Retraining BO-VAE: plain-ELBO retrain every ``retrain_period`` evaluations."""
    return _run_retraining(cfg, False, with_sdr, "r_bovae", problem, vae, cache_dir)


def run_dml_bovae(cfg: RunConfig, problem=None, vae=None, cache_dir=None) -> Trace:
    """Retraining with the soft-triplet loss; the latent box stays at R0."""
    return _run_retraining(cfg, True, False, "s_bovae", problem, vae, cache_dir)


def run(cfg: RunConfig, cache_dir=None) -> Trace:
    """Dispatch on ``cfg.algorithm``."""
    alg = cfg.algorithm
    if alg == "bo_sdr":
        return run_bo_sdr(cfg)
    if alg == "v_bovae":
        return run_vanilla_bovae(cfg, True, cache_dir=cache_dir)
    if alg == "v_bovae_nosdr":
        return run_vanilla_bovae(cfg, False, cache_dir=cache_dir)
    if alg == "r_bovae":
        return run_retrain_bovae(cfg, cache_dir=cache_dir)
    if alg == "s_bovae":
        return run_dml_bovae(cfg, cache_dir=cache_dir)
    if alg == "rembo":
        problem = build_problem(cfg)
        if problem.effective_dim is None:
            raise InputError("rembo runs only on low-rank problems")
        tr = run_rembo(problem, cfg.budget, cfg.seed, n_initial=cfg.n_init, fit_opts=cfg.fit_opts)
        tr.meta["config"] = cfg.to_dict()
        return tr
    raise ConfigError(f"unknown algorithm {alg!r}")


def uses_vae(algorithm: str) -> bool:
    return algorithm in ("v_bovae", "v_bovae_nosdr", "r_bovae", "s_bovae")


__all__ = [
    "ALGORITHMS",
    "RunConfig",
    "build_problem",
    "pretrained_vae",
    "initial_labelled",
    "checkpoint_name",
    "run_bo_sdr",
    "run_vanilla_bovae",
    "run_retrain_bovae",
    "run_dml_bovae",
    "run",
    "uses_vae",
]
