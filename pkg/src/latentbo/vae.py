"""Variational autoencoder with Gaussian encoder and unit-variance Gaussian decoder.

The encoder MLP emits ``2 d`` numbers per input: the latent mean followed by
the log-variance. Losses are written in the to-be-minimised orientation,
``loss = mean(0.5 * ||x - x_hat||^2 + beta * KL)``, i.e. the negative ELBO up
to a constant. The deep-metric variant adds the soft triplet penalty, which
is the same as subtracting it from the ELBO.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import nn
from .errors import InputError, NumericalError
from .testbed import VAE_BOX_HALF_WIDTH

log = logging.getLogger(__name__)


@dataclass
class VaeModel:
    encoder: nn.Mlp
    decoder: nn.Mlp
    latent_dim: int
    ambient_dim: int

    def __post_init__(self):
        if self.encoder.layer_sizes[-1] != 2 * self.latent_dim:
            raise InputError("encoder output must hold a mean and a log-variance per latent unit")
        if self.decoder.layer_sizes[0] != self.latent_dim:
            raise InputError("decoder input size must equal the latent dimension")
        if self.encoder.layer_sizes[0] != self.ambient_dim or self.decoder.layer_sizes[-1] != self.ambient_dim:
            raise InputError("encoder input and decoder output must equal the ambient dimension")

    @classmethod
    def init(cls, ambient_dim: int, hidden: Sequence[int], latent_dim: int, seed: int) -> "VaeModel":
        rng = np.random.default_rng(seed)
        hidden = list(hidden)
        enc = nn.Mlp.init([ambient_dim, *hidden, 2 * latent_dim], rng)
        dec = nn.Mlp.init([latent_dim, *reversed(hidden), ambient_dim], rng)
        return cls(enc, dec, latent_dim, ambient_dim)

    @property
    def params(self) -> list[np.ndarray]:
        return self.encoder.params + self.decoder.params

    def with_params(self, params: Sequence[np.ndarray]) -> "VaeModel":
        params = list(params)
        k = len(self.encoder.params)
        return VaeModel(self.encoder.with_params(params[:k]), self.decoder.with_params(params[k:]),
                        self.latent_dim, self.ambient_dim)


@dataclass(frozen=True)
class AnnealSchedule:
    beta_init: float = 0.0
    beta_final: float = 1.0
    step_epochs: int = 10
    beta_add: float = 0.1

    def __post_init__(self):
        if self.beta_init > self.beta_final:
            raise InputError("beta_init must not exceed beta_final")
        if self.beta_add <= 0 or self.step_epochs < 1:
            raise InputError("beta_add must be positive and step_epochs at least 1")

    def beta(self, epoch: int) -> float:
        return min(self.beta_final, self.beta_init + self.beta_add * (epoch // self.step_epochs))


@dataclass(frozen=True)
class TripletParams:
    eta_threshold: float = 0.01
    nu: float = 0.2
    norm_p: float = 2.0
    per_base: int = 10

    def __post_init__(self):
        if self.eta_threshold <= 0 or self.nu <= 0:
            raise InputError("triplet threshold and smoothing must be positive")


@dataclass(frozen=True)
class TrainOptions:
    epochs: int
    batch_size: int
    lr: float = 1e-3


PRETRAIN = TrainOptions(epochs=300, batch_size=1024)
RETRAIN = TrainOptions(epochs=2, batch_size=256)


def _rngs(seed):
    ss = np.random.SeedSequence(seed)
    noise, triplets = ss.spawn(2)
    return np.random.default_rng(noise), np.random.default_rng(triplets)


def encode(vae: VaeModel, x):
    """Latent mean and log-variance for each row of ``x``."""
    x = np.asarray(x, dtype=float)
    out, _ = nn.forward(vae.encoder, x)
    mu, logvar = out[:, : vae.latent_dim], out[:, vae.latent_dim:]
    if x.ndim == 1:
        return mu[0], logvar[0]
    return mu, logvar


def decode(vae: VaeModel, z):
    """Decoder mean, clipped into the VAE input box."""
    z = np.asarray(z, dtype=float)
    out, _ = nn.forward(vae.decoder, z)
    out = np.clip(out, -VAE_BOX_HALF_WIDTH, VAE_BOX_HALF_WIDTH)
    return out[0] if z.ndim == 1 else out


def reparam_sample(mu, logvar, seed=None, xi=None):
    """``z = mu + exp(logvar / 2) * xi`` with ``xi ~ N(0, I)``."""
    mu = np.asarray(mu, dtype=float)
    logvar = np.asarray(logvar, dtype=float)
    if mu.shape != logvar.shape:
        raise InputError("mean and log-variance shapes differ")
    if xi is None:
        xi = np.random.default_rng(seed).standard_normal(mu.shape)
    return mu + np.exp(0.5 * logvar) * xi


def kl_divergence(mu, logvar):
    """KL(N(mu, diag exp(logvar)) || N(0, I)), summed over the last axis."""
    mu = np.asarray(mu, dtype=float)
    logvar = np.asarray(logvar, dtype=float)
    return 0.5 * np.sum(mu * mu + np.exp(logvar) - logvar - 1.0, axis=-1)


def _elbo_pass(vae: VaeModel, x, beta, xi):
    """Forward/backward of the mean negative ELBO; also returns z and the
    hooks needed to push extra latent gradients through the encoder."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    d = vae.latent_dim
    enc_out, enc_tape = nn.forward(vae.encoder, x)
    mu, logvar = enc_out[:, :d], enc_out[:, d:]
    std = np.exp(0.5 * logvar)
    z = mu + std * xi
    x_hat, dec_tape = nn.forward(vae.decoder, z)
    resid = x_hat - x
    recon = 0.5 * np.sum(resid * resid, axis=1)
    kl = kl_divergence(mu, logvar)
    loss = float(np.mean(recon + beta * kl))

    dec_grads, dz = nn.backward(vae.decoder, dec_tape, resid / n)

    def finish(extra_dz=None):
        g_z = dz if extra_dz is None else dz + extra_dz
        d_mu = g_z + beta * mu / n
        d_logvar = g_z * xi * 0.5 * std + beta * 0.5 * (np.exp(logvar) - 1.0) / n
        enc_grads, _ = nn.backward(vae.encoder, enc_tape, np.hstack([d_mu, d_logvar]))
        return enc_grads + dec_grads

    return loss, z, finish, float(np.mean(recon)), float(np.mean(kl))


def elbo_terms(vae: VaeModel, x, seed=None, xi=None):
    """Mean reconstruction and KL terms at the given noise."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if xi is None:
        xi = _rngs(seed)[0].standard_normal((x.shape[0], vae.latent_dim))
    _, _, _, recon, kl = _elbo_pass(vae, x, 0.0, xi)
    return recon, kl


def elbo_loss(vae: VaeModel, batch, beta: float = 1.0, seed=None, xi=None):
    """Mean negative ELBO of ``batch`` and its parameter gradients."""
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    if batch.shape[0] == 0:
        raise InputError("empty batch")
    if xi is None:
        xi = _rngs(seed)[0].standard_normal((batch.shape[0], vae.latent_dim))
    loss, _, finish, _, _ = _elbo_pass(vae, batch, beta, xi)
    return loss, finish()


def _f_nu(a, nu):
    return np.tanh(a / (2.0 * nu))


def _pnorm(v, p):
    return np.sum(np.abs(v) ** p, axis=-1) ** (1.0 / p)


def soft_triplet_loss(z_i, z_j, z_k, f_i, f_j, f_k, p: TripletParams) -> float:
    """Smoothed triplet penalty for base ``i``, positive ``j`` and negative ``k``."""
    eta, nu = p.eta_threshold, p.nu
    gap_pos = abs(f_i - f_j)
    gap_neg = abs(f_i - f_k)
    if not (gap_pos < eta and gap_neg >= eta):
        return 0.0
    d_pos = float(_pnorm(np.asarray(z_i, float) - np.asarray(z_j, float), p.norm_p))
    d_neg = float(_pnorm(np.asarray(z_i, float) - np.asarray(z_k, float), p.norm_p))
    w_ij = _f_nu(eta - gap_pos, nu) / _f_nu(eta, nu)
    w_ik = _f_nu(gap_neg - eta, nu) / _f_nu(1.0 - eta, nu)
    return float(np.logaddexp(0.0, d_pos - d_neg) * w_ij * w_ik)


def mine_triplets(values, p: TripletParams, rng: np.random.Generator) -> np.ndarray:
    """Index triplets ``(i, j, k)``: every point is a base, with at most
    ``p.per_base`` (positive, negative) pairs drawn without replacement."""
    f = np.asarray(values, dtype=float)
    n = f.size
    gaps = np.abs(f[:, None] - f[None, :])
    out = []
    for i in range(n):
        pos = np.flatnonzero(gaps[i] < p.eta_threshold)
        pos = pos[pos != i]
        neg = np.flatnonzero(gaps[i] >= p.eta_threshold)
        n_pairs = pos.size * neg.size
        if n_pairs == 0:
            continue
        take = min(p.per_base, n_pairs)
        flat = rng.choice(n_pairs, size=take, replace=False)
        for idx in np.sort(flat):
            out.append((i, pos[idx // neg.size], neg[idx % neg.size]))
    return np.asarray(out, dtype=int).reshape(-1, 3)


def _triplet_term(z, f, triplets, p: TripletParams, n):
    """Mean-per-point triplet penalty and its gradient w.r.t. ``z``."""
    dz = np.zeros_like(z)
    if triplets.shape[0] == 0:
        return 0.0, dz
    i, j, k = triplets.T
    eta, nu = p.eta_threshold, p.nu
    w = (_f_nu(eta - np.abs(f[i] - f[j]), nu) / _f_nu(eta, nu)) * (
        _f_nu(np.abs(f[i] - f[k]) - eta, nu) / _f_nu(1.0 - eta, nu)
    )
    u_pos = z[i] - z[j]
    u_neg = z[i] - z[k]
    d_pos = _pnorm(u_pos, p.norm_p)
    d_neg = _pnorm(u_neg, p.norm_p)
    margin = d_pos - d_neg
    total = float(np.sum(np.logaddexp(0.0, margin) * w)) / n
    s = (nn.sigmoid(margin) * w / n)[:, None]
    q = p.norm_p

    def grad_norm(u, dist):
        dist = np.maximum(dist, 1e-12)[:, None]
        return np.sign(u) * np.abs(u) ** (q - 1.0) / dist ** (q - 1.0)

    g_pos = s * grad_norm(u_pos, d_pos)
    g_neg = s * grad_norm(u_neg, d_neg)
    np.add.at(dz, i, g_pos - g_neg)
    np.add.at(dz, j, -g_pos)
    np.add.at(dz, k, g_neg)
    return total, dz


def dml_elbo_loss(vae: VaeModel, batch, values, p: TripletParams, seed=None, xi=None,
                  triplets: Optional[np.ndarray] = None):
    """Negative ELBO (beta = 1) plus the soft triplet penalty.

    ``values`` are the function values of ``batch``, already normalised to
    ``[0, 1]``. Noise and triplet sampling draw from independent streams of
    ``seed``, so a penalty that vanishes leaves the ELBO part untouched.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    values = np.asarray(values, dtype=float).ravel()
    n = batch.shape[0]
    if n < 3:
        raise InputError("deep-metric loss needs at least 3 points")
    if values.size != n:
        raise InputError("one function value per point is required")
    rng_noise, rng_trip = _rngs(seed)
    if xi is None:
        xi = rng_noise.standard_normal((n, vae.latent_dim))
    if triplets is None:
        triplets = mine_triplets(values, p, rng_trip)
    loss, z, finish, _, _ = _elbo_pass(vae, batch, 1.0, xi)
    metric, dz = _triplet_term(z, values, triplets, p, n)
    return loss + metric, finish(dz)


def normalise_values(values) -> np.ndarray:
    """Min-max scale to ``[0, 1]``; a constant set maps to zeros."""
    v = np.asarray(values, dtype=float)
    span = float(np.max(v) - np.min(v)) if v.size else 0.0
    if span <= 0.0:
        return np.zeros_like(v)
    return (v - np.min(v)) / span


def _check_finite(loss, epoch, step):
    if not math.isfinite(loss):
        raise NumericalError(f"non-finite VAE loss {loss!r} at epoch {epoch}, step {step}")


def pretrain(vae: VaeModel, unlabelled, schedule: AnnealSchedule = AnnealSchedule(),
             opts: TrainOptions = PRETRAIN, seed: int = 0, history: Optional[list] = None) -> VaeModel:
    """Beta-annealed ELBO training on unlabelled data with Adam."""
    data = np.atleast_2d(np.asarray(unlabelled, dtype=float))
    if data.shape[1] != vae.ambient_dim:
        raise InputError("training data dimension does not match the VAE")
    ss = np.random.SeedSequence(seed)
    shuffle_rng = np.random.default_rng(ss.spawn(1)[0])
    params = [p.copy() for p in vae.params]
    state = nn.AdamState.for_params(params, lr=opts.lr)
    model = vae.with_params(params)
    step = 0
    for epoch in range(opts.epochs):
        beta = schedule.beta(epoch)
        order = shuffle_rng.permutation(data.shape[0])
        epoch_loss = 0.0
        for start in range(0, data.shape[0], opts.batch_size):
            idx = order[start:start + opts.batch_size]
            loss, grads = elbo_loss(model, data[idx], beta, seed=(seed, epoch, step))
            _check_finite(loss, epoch, step)
            params, state = nn.adam_step(params, grads, state)
            model = vae.with_params(params)
            epoch_loss += loss * idx.size
            step += 1
        if history is not None:
            history.append(epoch_loss / data.shape[0])
        log.debug("pretrain epoch %d beta=%.2f loss=%.4f", epoch, beta, epoch_loss / data.shape[0])
    return model


def retrain(vae: VaeModel, points, values, use_dml: bool = False, p: TripletParams = TripletParams(),
            opts: TrainOptions = RETRAIN, seed: int = 0) -> VaeModel:
    """Fine-tune on the labelled set with beta fixed at 1 and a fresh Adam state."""
    data = np.atleast_2d(np.asarray(points, dtype=float))
    if data.shape[0] == 0:
        raise InputError("labelled set is empty")
    fvals = normalise_values(values)
    ss = np.random.SeedSequence(seed)
    shuffle_rng = np.random.default_rng(ss.spawn(1)[0])
    params = [q.copy() for q in vae.params]
    state = nn.AdamState.for_params(params, lr=opts.lr)
    model = vae.with_params(params)
    step = 0
    for epoch in range(opts.epochs):
        order = shuffle_rng.permutation(data.shape[0])
        for start in range(0, data.shape[0], opts.batch_size):
            idx = order[start:start + opts.batch_size]
            batch_seed = (seed, epoch, step)
            if use_dml and idx.size >= 3:
                loss, grads = dml_elbo_loss(model, data[idx], fvals[idx], p, seed=batch_seed)
            else:
                loss, grads = elbo_loss(model, data[idx], 1.0, seed=batch_seed)
            _check_finite(loss, epoch, step)
            params, state = nn.adam_step(params, grads, state)
            model = vae.with_params(params)
            step += 1
    return model


def vae_to_dict(vae: VaeModel) -> dict:
    return {
        "latent_dim": vae.latent_dim,
        "ambient_dim": vae.ambient_dim,
        "encoder": nn.mlp_to_dict(vae.encoder),
        "decoder": nn.mlp_to_dict(vae.decoder),
    }


def vae_from_dict(data: dict) -> VaeModel:
    return VaeModel(nn.mlp_from_dict(data["encoder"]), nn.mlp_from_dict(data["decoder"]),
                    int(data["latent_dim"]), int(data["ambient_dim"]))


def save_vae(vae: VaeModel, path) -> None:
    Path(path).write_text(json.dumps(vae_to_dict(vae)))


def load_vae(path) -> VaeModel:
    return vae_from_dict(json.loads(Path(path).read_text()))
