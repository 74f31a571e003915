"""Dense softplus networks with hand-written backprop and Adam.

Hidden layers apply softplus after the affine map; the output layer is
linear. Inputs are batches of row vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass
class Mlp:
    layer_sizes: list[int]
    weights: list[np.ndarray]  # (fan_in, fan_out) per layer
    biases: list[np.ndarray]

    def __post_init__(self):
        sizes = list(self.layer_sizes)
        if len(sizes) < 2:
            raise InputError("an MLP needs at least an input and an output layer")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise InputError("parameter count does not match the layer sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise InputError(f"layer {i} parameters have incompatible shapes")
        self.layer_sizes = sizes

    @classmethod
    def init(cls, layer_sizes: Sequence[int], rng: np.random.Generator) -> "Mlp":
        sizes = [int(s) for s in layer_sizes]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(sizes, weights, biases)

    @classmethod
    def zeros(cls, layer_sizes: Sequence[int]) -> "Mlp":
        sizes = [int(s) for s in layer_sizes]
        return cls(sizes, [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(b) for b in sizes[1:]])

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "Mlp":
        params = list(params)
        return Mlp(list(self.layer_sizes), params[0::2], params[1::2])

    def copy(self) -> "Mlp":
        return self.with_params([p.copy() for p in self.params])


@dataclass
class Tape:
    net: Mlp
    inputs: list[np.ndarray] = field(default_factory=list)  # input to each layer
    pre: list[np.ndarray] = field(default_factory=list)  # pre-activations of hidden layers


def forward(net: Mlp, x):
    """Return ``(output, tape)``; a 1-D ``x`` is treated as a batch of one."""
    h = np.atleast_2d(np.asarray(x, dtype=float))
    if h.shape[1] != net.layer_sizes[0]:
        raise InputError(f"expected {net.layer_sizes[0]} inputs, got {h.shape[1]}")
    tape = Tape(net)
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        tape.inputs.append(h)
        a = h @ w + b
        if i < last:
            tape.pre.append(a)
            h = softplus(a)
        else:
            h = a
    return h, tape


def backward(net: Mlp, tape: Tape, output_gradient):
    """Gradients of ``sum(output * output_gradient)``.

    Returns ``(param_grads, input_grad)`` with ``param_grads`` ordered like
    :attr:`Mlp.params`.
    """
    if tape.net is not net:
        raise RuntimeError("tape was recorded on a different network")
    g = np.atleast_2d(np.asarray(output_gradient, dtype=float))
    n_layers = len(net.weights)
    grads: list[np.ndarray] = [None] * (2 * n_layers)  # type: ignore[list-item]
    for i in range(n_layers - 1, -1, -1):
        if i < n_layers - 1:
            g = g * sigmoid(tape.pre[i])
        grads[2 * i] = tape.inputs[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ net.weights[i].T
    return grads, g


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float = 1e-3, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0, lr, **kw)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise InputError("params, grads and optimiser state disagree in length")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    new_params, m_out, v_out = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape:
            raise InputError("gradient shape does not match its parameter")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_params.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        m_out.append(m)
        v_out.append(v)
    return new_params, AdamState(m_out, v_out, t, state.lr, b1, b2, state.eps)


# checkpoints: layer sizes header plus row-major parameter arrays

def mlp_to_dict(net: Mlp) -> dict:
    return {
        "layer_sizes": list(net.layer_sizes),
        "weights": [w.ravel(order="C").tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def mlp_from_dict(data: dict) -> Mlp:
    sizes = [int(s) for s in data["layer_sizes"]]
    weights = [np.asarray(w, dtype=float).reshape(a, b) for w, a, b in zip(data["weights"], sizes[:-1], sizes[1:])]
    biases = [np.asarray(b, dtype=float) for b in data["biases"]]
    return Mlp(sizes, weights, biases)


def save_mlp(net: Mlp, path) -> None:
    Path(path).write_text(json.dumps(mlp_to_dict(net)))


def load_mlp(path) -> Mlp:
    return mlp_from_dict(json.loads(Path(path).read_text()))


__all__ = [
    "Mlp",
    "Tape",
    "AdamState",
    "softplus",
    "sigmoid",
    "forward",
    "backward",
    "adam_step",
    "mlp_to_dict",
    "mlp_from_dict",
    "save_mlp",
    "load_mlp",
]
