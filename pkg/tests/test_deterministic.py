import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from consensus_dynamics import (
    WeightedDigraph,
    build_laplacian,
    exact_symmetric,
    fit_decay_rate,
    integrate,
    make_ring,
    predict_limit,
    spectrum,
    variance,
)
from consensus_dynamics.deterministic import (
    decay_rate,
    default_horizon,
    integrate_on_grid,
    pairwise_variance,
    read_trajectory_csv,
    read_variance_csv,
    write_trajectory_csv,
    write_variance_csv,
)
from _graphs import random_balanced_strong, random_connected_symmetric, random_digraph

PAIR = np.array([[1.0, -1.0], [-1.0, 1.0]])
FAN_IN = build_laplacian(WeightedDigraph(3, ((2, 0, 1.0), (2, 1, 1.0))))


def pair_closed_form(t):
    return np.array([1 - math.exp(-2 * t), 1 + math.exp(-2 * t)])


class TestIntegrate:
    def test_pair_closed_form(self):
        # the default step (0.1) is accurate to ~3e-6 here; 1e-6 needs a finer one
        traj = integrate(PAIR, [0.0, 2.0], 1.0, dt=0.01)
        assert traj.times[-1] == 1.0
        np.testing.assert_allclose(traj.states[-1], pair_closed_form(1.0), atol=1e-6)
        np.testing.assert_allclose(traj.states[-1], [0.8647, 1.1353], atol=1e-4)
        coarse = integrate(PAIR, [0.0, 2.0], 1.0)
        np.testing.assert_allclose(coarse.states[-1], pair_closed_form(1.0), atol=1e-5)

    def test_constant_start(self):
        lap = build_laplacian(make_ring(8, 2))
        traj = integrate(lap, np.full(8, 5.0), 10.0)
        np.testing.assert_allclose(traj.states, 5.0, rtol=0, atol=1e-13)

    def test_fan_in(self):
        traj = integrate(FAN_IN, [0.0, 1.0, 1.0], 40.0)
        np.testing.assert_array_equal(traj.states[:, 0], 0.0)
        np.testing.assert_array_equal(traj.states[:, 1], 1.0)
        assert traj.states[-1, 2] == pytest.approx(0.5, abs=1e-12)

    def test_decimation(self):
        traj = integrate(PAIR, [0.0, 2.0], 1000.0, dt=0.01, max_samples=500)
        assert len(traj.times) <= 500
        assert traj.meta["n_steps"] == 100_000
        assert traj.times[-1] == pytest.approx(1000.0)

    def test_stability_warning(self):
        assert integrate(PAIR, [0.0, 2.0], 1.0).meta["warnings"] == []
        w = integrate(PAIR, [0.0, 2.0], 10.0, dt=2.5).meta["warnings"]
        assert len(w) == 1 and "step exceeds stability heuristic" in w[0]

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            integrate(PAIR, [0.0, 1.0, 2.0], 1.0)
        with pytest.raises(ValueError):
            integrate(PAIR, [0.0, 1.0], 0.0)
        with pytest.raises(ValueError):
            integrate(PAIR, [0.0, 1.0], 1.0, dt=-1)

    def test_on_grid_matches_closed_form(self):
        grid = np.array([0.0, 0.1, 0.5, 2.0])
        traj = integrate_on_grid(PAIR, [0.0, 2.0], grid, dt=1e-3)
        for t, s in zip(grid, traj.states):
            np.testing.assert_allclose(s, pair_closed_form(t), atol=1e-8)
        with pytest.raises(ValueError):
            integrate_on_grid(PAIR, [0.0, 2.0], [0.5, 1.0])

    def test_rk4_fourth_order(self):
        rng = np.random.default_rng(2)
        lap = build_laplacian(random_connected_symmetric(rng, 6))
        s0 = rng.normal(size=6)
        exact = exact_symmetric(lap, s0, 2.0)
        dt = 0.2 / np.diag(lap).max()
        e1 = np.abs(integrate(lap, s0, 2.0, dt=dt).states[-1] - exact).max()
        e2 = np.abs(integrate(lap, s0, 2.0, dt=dt / 2).states[-1] - exact).max()
        assert 13 < e1 / e2 < 19


class TestExactSymmetric:
    def test_pair(self):
        np.testing.assert_allclose(exact_symmetric(PAIR, [0, 2], 1.0), pair_closed_form(1.0),
                                   atol=1e-12)

    def test_time_zero_and_array(self):
        rng = np.random.default_rng(0)
        lap = build_laplacian(random_connected_symmetric(rng, 7))
        s0 = rng.normal(size=7)
        np.testing.assert_allclose(exact_symmetric(lap, s0, 0.0), s0, atol=1e-12)
        out = exact_symmetric(lap, s0, [0.0, 1.0, 1e3])
        assert out.shape == (3, 7)
        np.testing.assert_allclose(out[2], s0.mean(), atol=1e-10)

    def test_rejects_directed(self):
        with pytest.raises(ValueError):
            exact_symmetric(FAN_IN, [0, 1, 2], 1.0)


class TestVariance:
    def test_examples(self):
        assert variance([3.0, 3.0, 3.0]) == 0.0
        assert variance([0.0, 2.0]) == pytest.approx(1.0)
        assert variance([1.0, 2.0, 3.0]) == pytest.approx(2 / 3)
        assert pairwise_variance([0.0, 2.0]) == pytest.approx(1.0)

    def test_exact_zero_for_consensus(self):
        assert variance(np.full(7, 0.1)) == 0.0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20))
    def test_two_formulas_agree(self, s):
        assert variance(s) == pytest.approx(pairwise_variance(s), rel=1e-9, abs=1e-9)

    def test_row_wise(self):
        v = variance(np.array([[0.0, 2.0], [1.0, 1.0]]))
        np.testing.assert_allclose(v, [1.0, 0.0])


class TestDecayRate:
    def test_pair_rate_four(self):
        fit = fit_decay_rate(integrate(PAIR, [0.0, 2.0], 5.0))
        assert fit.rate == pytest.approx(4.0, rel=1e-4)
        assert not fit.floor_detected

    def test_ring_rate_at_least_twice_lambda2(self):
        lap = build_laplacian(make_ring(20, 2))
        lam2 = spectrum(lap).lambda2
        s0 = np.random.default_rng(1).uniform(-1, 1, 20)
        fit = fit_decay_rate(integrate(lap, s0, 40 / lam2))
        assert fit.rate >= 2 * 0.4798 * (1 - 1e-3)

    def test_floor_on_disconnected_graph(self):
        g = WeightedDigraph(4, ((0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)))
        lap = build_laplacian(g)
        fit = fit_decay_rate(integrate(lap, [0.0, 1.0, 4.0, 6.0], 20.0))
        assert fit.floor_detected
        # a tail that flattens after decaying
        t = np.linspace(0, 10, 101)
        assert decay_rate(t, np.exp(-2 * t) + 1e-3).floor_detected

    def test_truncates_underflow(self):
        t = np.linspace(0, 20, 201)
        v = np.exp(-3 * t)
        v[t > 8] = 0.0
        fit = decay_rate(t, v)
        assert fit.rate == pytest.approx(3.0, rel=1e-9)
        assert fit.window[1] <= 8.0

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="fewer than 4"):
            decay_rate([0, 1, 2], [1.0, 0.5, 0.25])


class TestProperties:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 10), st.integers(0, 2**32 - 1), st.booleans())
    def test_average_conservation(self, n, seed, symmetric):
        rng = np.random.default_rng(seed)
        g = random_connected_symmetric(rng, n) if symmetric else random_balanced_strong(rng, n)
        lap = build_laplacian(g)
        s0 = rng.normal(size=n)
        traj = integrate(lap, s0, 10.0)
        assert np.abs(traj.means - s0.mean()).max() <= 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 10), st.integers(0, 2**32 - 1))
    def test_hull_contraction(self, n, seed):
        rng = np.random.default_rng(seed)
        lap = build_laplacian(random_digraph(rng, n, 0.4))
        s0 = rng.normal(size=n)
        states = integrate(lap, s0, 10.0).states
        assert np.all(np.diff(states.max(axis=1)) <= 1e-12)
        assert np.all(np.diff(states.min(axis=1)) >= -1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 9), st.integers(0, 2**32 - 1))
    def test_converges_to_predicted_limit(self, n, seed):
        rng = np.random.default_rng(seed)
        lap = build_laplacian(random_digraph(rng, n, float(rng.uniform(0.1, 0.9))))
        summary = spectrum(lap)
        if summary.lambda2 is None or summary.lambda2 < 1e-2:
            return
        s0 = rng.normal(size=n)
        final = integrate(lap, s0, default_horizon(summary)).states[-1]
        assert np.abs(final - predict_limit(lap, s0, summary)).max() < 1e-6


def test_csv_round_trip(tmp_path):
    traj = integrate(FAN_IN, [0.1, -0.3, 1 / 3], 2.0)
    write_trajectory_csv(tmp_path / "t.csv", traj, tmp_path / "t.meta.json")
    back = read_trajectory_csv(tmp_path / "t.csv", tmp_path / "t.meta.json")
    np.testing.assert_array_equal(back.times, traj.times)
    np.testing.assert_array_equal(back.states, traj.states)
    assert back.meta == traj.meta
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,s_0,s_1,s_2"

    write_variance_csv(tmp_path / "v.csv", traj.times, traj.variances)
    t, v = read_variance_csv(tmp_path / "v.csv")
    np.testing.assert_array_equal(t, traj.times)
    np.testing.assert_array_equal(v, traj.variances)
