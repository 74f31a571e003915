import math

import numpy as np
import pytest

from latentbo.errors import InputError
from latentbo.gp import FitOptions
from latentbo.rembo import Embedding, draw_embedding, project_up, run_rembo
from latentbo.testbed import Box, make_problem

FAST = FitOptions(restarts=2, max_evals=150, warm_max_evals=60)


class TestEmbedding:
    def test_dimensions(self):
        emb = draw_embedding(20, 4, seed=0)
        assert emb.reduced_dim == 5
        assert emb.delta == pytest.approx(4.4)
        assert emb.box == Box.cube(-4.4, 4.4, 5)

    def test_gaussian_entries(self):
        a = draw_embedding(20000, 4, seed=1).matrix_a
        assert a.size == 100000
        assert abs(a.mean()) < 4 / math.sqrt(a.size)
        assert abs(a.var() - 1.0) < 0.02

    def test_seeded(self):
        assert np.array_equal(draw_embedding(10, 2, 3).matrix_a, draw_embedding(10, 2, 3).matrix_a)

    def test_too_small_ambient(self):
        with pytest.raises(InputError):
            draw_embedding(4, 4, 0)


class TestProjection:
    def test_origin(self):
        emb = draw_embedding(8, 2, 0)
        assert np.all(project_up(emb, np.zeros(3), Box.cube(-1, 1, 8)) == 0.0)

    def test_identity_columns(self):
        emb = Embedding(np.eye(6)[:, :2], 1.0)
        x = project_up(emb, np.array([0.3, -0.4]), Box.cube(-1, 1, 6))
        assert np.array_equal(x, [0.3, -0.4, 0, 0, 0, 0])

    def test_no_clip_inside(self):
        emb = draw_embedding(8, 2, 0)
        y = np.array([0.01, -0.02, 0.015])
        ay = emb.matrix_a @ y
        assert np.linalg.norm(project_up(emb, y, Box.cube(-1, 1, 8)) - ay) == 0.0

    def test_clips_outside(self):
        emb = draw_embedding(8, 2, 0)
        x = project_up(emb, np.full(3, 4.0), Box.cube(-1, 1, 8))
        assert np.all(np.abs(x) <= 1.0)


@pytest.fixture(scope="module")
def trace():
    prob = make_problem("lr_styblinski_tang", 12, seed=0)
    return prob, run_rembo(prob, budget=15, seed=0, fit_opts=FAST)


class TestRun:
    def test_length_and_monotone(self, trace):
        _, tr = trace
        assert len(tr) == 15 + 10
        assert np.all(np.diff(tr.best_f) <= 0)

    def test_reduced_objective(self, trace):
        prob, tr = trace
        emb = draw_embedding(12, 4, 0)
        for y, fx in zip(tr.z, tr.f):
            assert emb.box.contains(y, tol=1e-12)
            assert fx == prob(project_up(emb, y, prob.domain))

    def test_many_random_y(self):
        prob = make_problem("lr_ackley", 10, seed=1)
        emb = draw_embedding(10, 4, 2)
        ys = emb.box.sample(np.random.default_rng(0), 100)
        xs = project_up(emb, ys, prob.domain)
        assert np.array_equal(prob(xs), prob(np.clip(ys @ emb.matrix_a.T, -1, 1)))

    @pytest.mark.parametrize("seed", range(5))
    def test_improves_on_initial_design(self, seed):
        prob = make_problem("lr_styblinski_tang", 10, seed=seed)
        tr = run_rembo(prob, budget=8, seed=seed, fit_opts=FAST)
        assert tr.best <= min(tr.f[: tr.n_initial])

    def test_deterministic(self):
        prob = make_problem("lr_shekel5", 8, seed=0)
        a = run_rembo(prob, budget=5, seed=3, fit_opts=FAST)
        b = run_rembo(prob, budget=5, seed=3, fit_opts=FAST)
        assert a.to_csv() == b.to_csv()

    def test_needs_low_rank(self):
        with pytest.raises(InputError):
            run_rembo(make_problem("ackley", 5), budget=3, seed=0)
