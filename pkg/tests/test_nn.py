import json
import math

import numpy as np
import pytest

from gradcheck import max_rel_error, numeric_grads
from latentbo import nn
from latentbo.errors import InputError


def _loss(net, x, g):
    out, _ = nn.forward(net, x)
    return float(np.sum(out * g))


class TestForward:
    def test_zero_net_hidden_is_ln2(self):
        net = nn.Mlp.zeros([3, 4, 2])
        _, tape = nn.forward(net, np.ones((2, 3)))
        assert np.all(tape.pre[0] == 0.0)
        assert np.allclose(nn.softplus(tape.pre[0]), math.log(2))

    def test_one_one_one(self):
        net = nn.Mlp([1, 1, 1], [np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
        x = np.linspace(-4, 4, 9)[:, None]
        out, _ = nn.forward(net, x)
        assert np.allclose(out[:, 0], np.log1p(np.exp(x[:, 0])))

    def test_extreme_inputs_finite(self):
        net = nn.Mlp.init([3, 5, 2], np.random.default_rng(0))
        x = np.array([[1e3, -1e3, 0.0], [-577.0, 577.0, 577.0]])
        out, _ = nn.forward(net, x)
        assert np.all(np.isfinite(out))

    def test_softplus_stable(self):
        assert nn.softplus(1000.0) == 1000.0
        assert nn.softplus(-1000.0) == 0.0
        assert nn.softplus(0.0) == pytest.approx(math.log(2))

    def test_wrong_width(self):
        with pytest.raises(InputError):
            nn.forward(nn.Mlp.zeros([3, 2]), np.ones((1, 4)))

    def test_bad_shapes(self):
        with pytest.raises(InputError):
            nn.Mlp([2, 3], [np.zeros((3, 2))], [np.zeros(3)])


class TestBackward:
    @pytest.mark.parametrize("seed", range(20))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        net = nn.Mlp.init([3, 4, 2], rng)
        x = rng.normal(size=(5, 3))
        g = rng.normal(size=(5, 2))
        out, tape = nn.forward(net, x)
        grads, _ = nn.backward(net, tape, g)
        num = numeric_grads(lambda ps: _loss(net.with_params(ps), x, g), net.params)
        assert max_rel_error(grads, num) < 1e-4

    @pytest.mark.parametrize("sizes", [[5, 4, 4], [2, 4, 5], [20, 30, 4], [4, 30, 20], [20, 25, 10], [5, 25, 20]])
    def test_vae_layer_shapes(self, sizes):
        rng = np.random.default_rng(len(sizes) * sum(sizes))
        net = nn.Mlp.init(sizes, rng)
        x = rng.normal(size=(3, sizes[0]))
        g = rng.normal(size=(3, sizes[-1]))
        _, tape = nn.forward(net, x)
        grads, _ = nn.backward(net, tape, g)
        num = numeric_grads(lambda ps: _loss(net.with_params(ps), x, g), net.params)
        assert max_rel_error(grads, num) < 1e-4

    def test_input_gradient(self):
        rng = np.random.default_rng(1)
        net = nn.Mlp.init([3, 6, 2], rng)
        x = rng.normal(size=(1, 3))
        g = rng.normal(size=(1, 2))
        _, tape = nn.forward(net, x)
        _, gx = nn.backward(net, tape, g)
        num = numeric_grads(lambda ps: _loss(net, ps[0], g), [x])
        assert max_rel_error([gx], num) < 1e-4

    def test_zero_output_gradient(self):
        net = nn.Mlp.init([3, 4, 2], np.random.default_rng(0))
        _, tape = nn.forward(net, np.ones((2, 3)))
        grads, _ = nn.backward(net, tape, np.zeros((2, 2)))
        assert all(np.all(gr == 0) for gr in grads)

    def test_linear_in_output_gradient(self):
        rng = np.random.default_rng(2)
        net = nn.Mlp.init([3, 4, 2], rng)
        _, tape = nn.forward(net, rng.normal(size=(4, 3)))
        g = rng.normal(size=(4, 2))
        a, _ = nn.backward(net, tape, g)
        b, _ = nn.backward(net, tape, 2 * g)
        assert all(np.allclose(2 * x, y, rtol=1e-14, atol=0) for x, y in zip(a, b))

    def test_stale_tape(self):
        rng = np.random.default_rng(0)
        net = nn.Mlp.init([2, 2], rng)
        _, tape = nn.forward(net, np.ones((1, 2)))
        with pytest.raises(RuntimeError):
            nn.backward(net.copy(), tape, np.ones((1, 2)))


class TestAdam:
    def test_first_step_magnitude(self):
        params = [np.zeros(4)]
        g = [np.array([0.5, -2.0, 3.0, 1e-3])]
        new, state = nn.adam_step(params, g, nn.AdamState.for_params(params, lr=1e-3))
        assert np.allclose(np.abs(new[0]), 1e-3, rtol=1e-4)
        assert np.all(np.sign(new[0]) == -np.sign(g[0]))
        assert state.step_count == 1

    def test_zero_gradient_is_noop(self):
        params = [np.array([1.0, -2.0])]
        state = nn.AdamState.for_params(params)
        for _ in range(10):
            params, state = nn.adam_step(params, [np.zeros(2)], state)
        assert np.array_equal(params[0], [1.0, -2.0])

    def test_deterministic(self):
        params = [np.ones(3)]
        g = [np.array([0.1, 0.2, -0.3])]
        a = nn.adam_step(params, g, nn.AdamState.for_params(params))[0]
        b = nn.adam_step(params, g, nn.AdamState.for_params(params))[0]
        assert np.array_equal(a[0], b[0])

    def test_regression_loss_decreases(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, size=(32, 2))
        y = np.sin(x[:, :1]) + x[:, 1:] ** 2
        net = nn.Mlp.init([2, 8, 1], rng)
        params = net.params
        state = nn.AdamState.for_params(params, lr=1e-3)
        losses = []
        for _ in range(50):
            out, tape = nn.forward(net, x)
            resid = out - y
            losses.append(0.5 * float(np.mean(resid**2)))
            grads, _ = nn.backward(net, tape, resid / x.shape[0])
            params, state = nn.adam_step(params, grads, state)
            net = net.with_params(params)
        assert np.all(np.diff(losses) < 0)

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            nn.adam_step([np.zeros(2)], [], nn.AdamState.for_params([np.zeros(2)]))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        net = nn.Mlp.init([4, 3, 2], np.random.default_rng(0))
        nn.save_mlp(net, tmp_path / "m.json")
        back = nn.load_mlp(tmp_path / "m.json")
        assert back.layer_sizes == [4, 3, 2]
        assert all(np.array_equal(a, b) for a, b in zip(net.params, back.params))

    def test_row_major_layout(self, tmp_path):
        w = np.arange(6.0).reshape(2, 3)
        net = nn.Mlp([2, 3], [w], [np.zeros(3)])
        nn.save_mlp(net, tmp_path / "m.json")
        data = json.loads((tmp_path / "m.json").read_text())
        assert data["layer_sizes"] == [2, 3]
        assert data["weights"][0] == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
