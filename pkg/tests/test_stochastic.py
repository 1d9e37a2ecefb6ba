import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from consensus_dynamics import (
    WeightedDigraph,
    build_laplacian,
    exact_chain,
    monte_carlo,
    simulate,
    simulate_embedded,
)
from consensus_dynamics.deterministic import integrate_on_grid
from consensus_dynamics.stochastic import (
    StateSpaceTooLarge,
    read_batch_csv,
    read_events_csv,
    write_batch_csv,
    write_events_csv,
)
from _graphs import random_balanced_strong, random_digraph

PAIR = WeightedDigraph(2, ((0, 1, 1.0), (1, 0, 1.0)))
FAN_IN = WeightedDigraph(3, ((2, 0, 1.0), (2, 1, 1.0)))
CYCLE3 = WeightedDigraph(3, ((1, 0, 1.0), (2, 1, 1.0), (0, 2, 1.0)))


class TestSimulate:
    def test_consensus_start(self):
        tr = simulate(CYCLE3, [2.0, 2.0, 2.0], 10.0, seed=0)
        assert tr.n_events == 0
        assert tr.absorbed_at == 0.0 and tr.frozen_at == 0.0

    def test_fan_in_keeps_switching(self):
        tr = simulate(FAN_IN, [0.0, 1.0, 0.5], 200.0, seed=4)
        assert tr.absorbed_at is None and tr.frozen_at is None
        assert set(tr.i.tolist()) == {2}
        s = tr.initial.copy()
        for a, b in zip(tr.i, tr.j):
            s[a] = s[b]
            assert s[0] == 0.0 and s[1] == 1.0 and s[2] in (0.0, 1.0)
        # node 2 flips back and forth at rate 1
        assert tr.n_events > 100

    def test_fan_in_equal_sources_freezes(self):
        tr = simulate(FAN_IN, [1.0, 1.0, 0.0], 50.0, seed=0)
        assert tr.n_events == 1
        assert tr.absorbed_at == tr.frozen_at == tr.times[0]

    @pytest.mark.parametrize("seed", range(20))
    def test_strongly_connected_absorbs(self, seed):
        rng = np.random.default_rng(seed)
        g = random_balanced_strong(rng, 6)
        tr = simulate(g, rng.normal(size=6), 1e4, seed=seed)
        assert tr.absorbed_at is not None
        assert np.all(tr.final == tr.final[0])

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            simulate(PAIR, [0.0], 1.0, seed=0)
        with pytest.raises(ValueError):
            simulate(PAIR, [0.0, np.nan], 1.0, seed=0)
        with pytest.raises(ValueError):
            simulate(PAIR, [0.0, 1.0], 0.0, seed=0)

    def test_reproducible(self):
        rng = np.random.default_rng(0)
        g = random_digraph(rng, 6, 0.5)
        a = simulate(g, np.arange(6.0), 5.0, seed=42)
        b = simulate(g, np.arange(6.0), 5.0, seed=42)
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.i, b.i)
        c = simulate(g, np.arange(6.0), 5.0, seed=43)
        assert not np.array_equal(a.times, c.times)

    def test_two_node_law(self):
        # rates 1 (0 adopts 1) and 2 (1 adopts 0): first jump ~ Exp(3), P(0 adopts 1) = 1/3
        g = WeightedDigraph(2, ((0, 1, 1.0), (1, 0, 2.0)))
        grid = np.array([0.0, 0.2, 0.5])
        b = monte_carlo(g, [0.0, 1.0], grid, 20_000, master_seed=9)
        p = 1 - np.exp(-3 * grid)
        se = np.sqrt(p * (1 - p) / b.n_reps)
        assert np.all(np.abs(b.absorbed_fraction - p) <= 4 * se + 1e-12)
        # at t = 0.5 the mean of node 0 is P(jumped and 0 adopted 1) = p / 3
        assert abs(b.mean_estimate[2, 0] - p[2] / 3) <= 4 * b.mean_se[2, 0]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2**32 - 1))
    def test_event_invariants(self, n, seed):
        rng = np.random.default_rng(seed)
        g = random_digraph(rng, n, 0.5)
        s0 = rng.integers(0, 4, n).astype(float)
        tr = simulate(g, s0, 5.0, seed=seed)
        edges = {(i, j) for i, j, _ in g.edges}
        s = s0.copy()
        assert np.all(np.diff(tr.times) >= 0) and np.all(tr.times <= 5.0)
        for a, b in zip(tr.i, tr.j):
            assert (a, b) in edges
            assert s[a] != s[b]  # only state-changing events are logged
            s[a] = s[b]
            assert set(s.tolist()) <= set(s0.tolist())
        np.testing.assert_array_equal(s, tr.final)
        np.testing.assert_array_equal(tr.replay(), tr.final)

    def test_states_at_matches_replay(self):
        tr = simulate(CYCLE3, [0.0, 1.0, 2.0], 3.0, seed=5)
        grid = np.linspace(0, 3, 13)
        for t, row in zip(grid, tr.states_at(grid)):
            np.testing.assert_array_equal(row, tr.replay(t))


class TestEmbedded:
    def test_pair_one_step(self):
        finals = [tuple(simulate_embedded(PAIR, [0.0, 1.0], 1, seed=s)[1]) for s in range(2000)]
        assert set(finals) == {(0.0, 0.0), (1.0, 1.0)}
        frac = finals.count((1.0, 1.0)) / len(finals)
        assert abs(frac - 0.5) <= 4 * math.sqrt(0.25 / len(finals))

    def test_single_edge(self):
        g = WeightedDigraph(2, ((0, 1, 1.0),))
        out = simulate_embedded(g, [3.0, 7.0], 5, seed=1)
        np.testing.assert_array_equal(out[1:], [[7.0, 7.0]] * 5)

    def test_no_edges(self):
        out = simulate_embedded(WeightedDigraph(2), [1.0, 2.0], 3, seed=0)
        np.testing.assert_array_equal(out, [[1.0, 2.0]] * 4)

    @pytest.mark.parametrize("steps", [1, 2, 5])
    def test_fan_in_marginal(self, steps):
        # brute force: every sequence of edge picks, each with probability 1/2
        s0 = (0.0, 1.0, 0.5)
        exact = {}
        for seq in itertools.product([(2, 0), (2, 1)], repeat=steps):
            s = list(s0)
            for a, b in seq:
                s[a] = s[b]
            exact[s[2]] = exact.get(s[2], 0.0) + 0.5**steps
        assert exact == {0.0: 0.5, 1.0: 0.5}

        n = 4000
        hits = sum(simulate_embedded(FAN_IN, s0, steps, seed=s)[-1, 2] == 1.0 for s in range(n))
        assert abs(hits / n - 0.5) <= 4 * math.sqrt(0.25 / n)

    def test_keeps_null_steps(self):
        # weight 3 on an edge between equal opinions: the chain mostly idles
        g = WeightedDigraph(3, ((0, 1, 3.0), (2, 0, 1.0)))
        out = simulate_embedded(g, [1.0, 1.0, 0.0], 400, seed=3)
        changes = np.flatnonzero(np.any(np.diff(out, axis=0) != 0, axis=1))
        assert changes.size == 1 and changes[0] > 0


class TestExactChain:
    def test_pair(self):
        r = exact_chain(PAIR, [0.0, 1.0])
        assert sorted(zip(r.absorbing_states, r.absorption_probabilities)) == [
            ((0.0, 0.0), pytest.approx(0.5)), ((1.0, 1.0), pytest.approx(0.5))]
        np.testing.assert_allclose(r.expected_final, [0.5, 0.5], atol=1e-12)
        assert r.is_absorbing_chain and r.consensus_probability == pytest.approx(1.0)

    def test_cycle(self):
        r = exact_chain(CYCLE3, [0.0, 1.0, 2.0])
        np.testing.assert_allclose(r.expected_final, [1.0, 1.0, 1.0], atol=1e-12)
        assert r.total_absorption == pytest.approx(1.0, abs=1e-12)

    def test_fan_in_not_absorbing(self):
        r = exact_chain(FAN_IN, [0.0, 1.0, 0.5])
        assert not r.is_absorbing_chain
        assert r.absorbing_states == []
        assert r.expected_final is None
        assert r.n_states == 3

    def test_consensus_start(self):
        r = exact_chain(CYCLE3, [4.0, 4.0, 4.0])
        assert r.n_states == 1
        np.testing.assert_array_equal(r.expected_final, [4.0, 4.0, 4.0])

    def test_biased_pair(self):
        # P(0 adopts 1 first) = 1 / (1 + 3)
        g = WeightedDigraph(2, ((0, 1, 1.0), (1, 0, 3.0)))
        r = exact_chain(g, [0.0, 8.0])
        np.testing.assert_allclose(r.expected_final, [2.0, 2.0], atol=1e-12)

    def test_size_limit(self):
        with pytest.raises(StateSpaceTooLarge, match="monte_carlo"):
            exact_chain(random_digraph(np.random.default_rng(0), 9, 0.5), np.arange(9.0))
        with pytest.raises(StateSpaceTooLarge, match="monte_carlo"):
            exact_chain(random_balanced_strong(np.random.default_rng(0), 6), np.arange(6.0),
                        max_states=10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 5), st.integers(0, 2**32 - 1))
    def test_balanced_martingale(self, n, seed):
        rng = np.random.default_rng(seed)
        g = random_balanced_strong(rng, n)
        s0 = rng.integers(-3, 4, n).astype(float)
        r = exact_chain(g, s0)
        assert r.is_absorbing_chain
        assert r.consensus_probability == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(r.expected_final, s0.mean(), atol=1e-9)

    def test_matches_monte_carlo_on_unbalanced_graph(self):
        # fan-in plus a feedback edge: strongly connected but not balanced
        g = WeightedDigraph(3, ((2, 0, 1.0), (2, 1, 1.0), (0, 2, 2.0), (1, 0, 0.5)))
        s0 = [0.0, 1.0, 5.0]
        r = exact_chain(g, s0)
        b = monte_carlo(g, s0, [0.0, 200.0], 10_000, master_seed=1)
        assert b.absorbed_fraction[-1] == 1.0
        assert np.all(np.abs(b.mean_estimate[-1] - r.expected_final) <= 4 * b.mean_se[-1])


class TestMonteCarlo:
    def test_identical_seeds(self):
        rng = np.random.default_rng(1)
        g = random_digraph(rng, 5, 0.5)
        grid = np.linspace(0, 3, 7)
        a = monte_carlo(g, np.arange(5.0), grid, 2, master_seed=7, keep_samples=True)
        b = monte_carlo(g, np.arange(5.0), grid, 2, master_seed=7, keep_samples=True)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_replicate_zero_is_simulate(self):
        rng = np.random.default_rng(2)
        g = random_digraph(rng, 6, 0.4)
        grid = np.linspace(0, 4, 9)
        s0 = rng.normal(size=6)
        b = monte_carlo(g, s0, grid, 3, master_seed=11, keep_samples=True)
        np.testing.assert_array_equal(b.samples[0], simulate(g, s0, 4.0, seed=11).states_at(grid))

    def test_prefix_batches_agree(self):
        g = CYCLE3
        grid = np.linspace(0, 2, 5)
        a = monte_carlo(g, [0.0, 1.0, 2.0], grid, 5, master_seed=3, keep_samples=True)
        b = monte_carlo(g, [0.0, 1.0, 2.0], grid, 8, master_seed=3, keep_samples=True)
        np.testing.assert_array_equal(a.samples, b.samples[:5])

    def test_mean_tracks_deterministic(self):
        g = CYCLE3
        grid = np.linspace(0, 3, 10)
        s0 = np.array([0.0, 1.0, 2.0])
        b = monte_carlo(g, s0, grid, 5000, master_seed=0)
        det = integrate_on_grid(build_laplacian(g), s0, grid, dt=1e-3).states
        assert np.all(np.abs(b.mean_estimate - det) <= 4 * b.mean_se + 1e-12)

    def test_balanced_mean_martingale(self):
        rng = np.random.default_rng(8)
        g = random_balanced_strong(rng, 5)
        s0 = rng.normal(size=5)
        grid = np.linspace(0, 5, 6)
        b = monte_carlo(g, s0, grid, 4000, master_seed=2, keep_samples=True)
        row_means = b.samples.mean(axis=2)
        se = row_means.std(axis=0, ddof=1) / math.sqrt(b.n_reps)
        assert np.all(np.abs(row_means.mean(axis=0) - s0.mean()) <= 4 * se + 1e-12)

    def test_two_isolated_blocks_never_absorb(self):
        b = monte_carlo(FAN_IN, [0.0, 1.0, 0.3], np.linspace(0, 50, 11), 500, master_seed=0)
        assert np.all(b.absorbed_fraction == 0.0)
        assert np.all(b.frozen_fraction == 0.0)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            monte_carlo(PAIR, [0.0, 1.0], [0.0, 1.0], 1, master_seed=0)
        with pytest.raises(ValueError):
            monte_carlo(PAIR, [0.0, 1.0], [1.0, 0.5], 4, master_seed=0)


def test_event_csv_round_trip(tmp_path):
    tr = simulate(CYCLE3, [0.0, 1.0, 2.0], 10.0, seed=3)
    write_events_csv(tmp_path / "e.csv", tr, tmp_path / "e.json")
    back = read_events_csv(tmp_path / "e.csv", tmp_path / "e.json")
    np.testing.assert_array_equal(back.times, tr.times)
    np.testing.assert_array_equal(back.i, tr.i)
    np.testing.assert_array_equal(back.j, tr.j)
    np.testing.assert_array_equal(back.final, tr.final)
    assert back.absorbed_at == tr.absorbed_at


def test_batch_csv_round_trip(tmp_path):
    b = monte_carlo(CYCLE3, [0.0, 1.0, 2.0], np.linspace(0, 2, 5), 50, master_seed=3)
    write_batch_csv(tmp_path / "b.csv", b)
    grid, means, var, se, absorbed = read_batch_csv(tmp_path / "b.csv")
    np.testing.assert_array_equal(grid, b.grid)
    np.testing.assert_array_equal(means, b.mean_estimate)
    np.testing.assert_array_equal(var, b.variance_estimate)
    np.testing.assert_array_equal(se, b.variance_se)
    np.testing.assert_array_equal(absorbed, b.absorbed_fraction)
