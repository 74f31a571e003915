import numpy as np

from latentbo.plotting import convergence_figure, convergence_stats, plot_convergence, plot_profile, profile_figure

RUNS = {
    "ackley": {
        "v_bovae": [[5, 4, 3, 3], [6, 4, 2, 1], [5, 5, 5, 2], [7, 3, 3, 3], [6, 6, 2, 2]],
        "v_bovae_nosdr": [[5, 5, 4, 4], [6, 6, 6, 5], [5, 5, 5, 5], [7, 6, 5, 4], [6, 6, 6, 6]],
    }
}


def test_one_line_and_band_per_algorithm():
    ax = convergence_figure(RUNS).axes[0]
    assert len(ax.lines) == 2
    assert len(ax.collections) == 2


def test_stats():
    mean, std = convergence_stats(RUNS["ackley"]["v_bovae"])
    arr = np.array(RUNS["ackley"]["v_bovae"], float)
    assert np.allclose(mean, arr.mean(0)) and np.allclose(std, arr.std(0))


def test_single_seed_zero_band():
    _, std = convergence_stats([[3.0, 2.0, 2.0]])
    assert np.all(std == 0)
    ax = convergence_figure({"p": {"a": [[3.0, 2.0, 2.0]]}}).axes[0]
    verts = ax.collections[0].get_paths()[0].vertices
    # the band collapses onto the mean line
    assert set(np.round(verts[:, 1], 12)) <= {3.0, 2.0}


def test_unequal_lengths_truncate():
    mean, _ = convergence_stats([[3, 2, 1], [4, 4]])
    assert mean.size == 2


def test_deterministic_svg(tmp_path):
    plot_convergence(RUNS, tmp_path / "a.svg")
    plot_convergence(RUNS, tmp_path / "b.svg")
    a, b = (tmp_path / "a.svg").read_bytes(), (tmp_path / "b.svg").read_bytes()
    assert a == b
    assert a.startswith(b"<?xml")
    assert b"<dc:date>" not in a


def test_profile_steps(tmp_path):
    fig = profile_figure([1.0, 2.0, 4.0], {"A": [0.5, 1.0, 1.0], "B": [0.0, 0.5, 1.0]})
    assert len(fig.axes[0].lines) == 2
    plot_profile([1.0, 2.0], {"A": [0.5, 1.0]}, tmp_path / "p.svg")
    first = (tmp_path / "p.svg").read_bytes()
    plot_profile([1.0, 2.0], {"A": [0.5, 1.0]}, tmp_path / "p.svg")
    assert (tmp_path / "p.svg").read_bytes() == first
