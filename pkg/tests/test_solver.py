"""Replica projections and the monitored reflect-reflect iteration."""

import numpy as np
import pytest

from binattr import (
    SolverConfig,
    SyntheticSpec,
    TrainingView,
    center,
    full_view,
    initialize,
    project_A,
    project_B,
    round_bits,
    rrr_step,
    solve,
    state_rmse,
    synthesize,
    write_stats_csv,
)
from binattr.solver import ReplicaState, relaxed_double_reflection


def make_view(viewer_count, n_movies, edges):
    """edges: list of (viewer, movie_slot, residual), any order."""
    edges = sorted(edges, key=lambda e: (e[1], e[0]))
    ev = [e[0] for e in edges]
    em = [e[1] for e in edges]
    r = [e[2] for e in edges]
    return TrainingView(viewer_count, np.arange(n_movies), ev, em, r)


def small_view():
    return make_view(3, 2, [(0, 0, 0.25), (0, 1, -0.5), (1, 0, 1.0), (2, 1, 0.75)])


class TestInitialize:
    def test_d8_ranges(self):
        view = small_view()
        state = initialize(SolverConfig(d=8, seed=0), view)
        assert state.w.min() >= -0.25 and state.w.max() < 0.25
        assert state.b.min() >= 0.0 and state.b.max() < 0.5
        assert state.c.min() >= 0.0 and state.c.max() < 0.5

    def test_d1_weight_range(self):
        state = initialize(SolverConfig(d=1, seed=0), small_view())
        assert state.w.min() >= -2.0 and state.w.max() < 2.0

    def test_same_seed_identical(self):
        view = small_view()
        cfg = SolverConfig(d=3, seed=42)
        s1 = initialize(cfg, view)
        s2 = initialize(cfg, view)
        assert np.array_equal(s1.x, s2.x)

    def test_restart_streams_differ(self):
        view = small_view()
        cfg = SolverConfig(d=3, seed=42)
        s0 = initialize(cfg, view, restart=0)
        s1 = initialize(cfg, view, restart=1)
        assert not np.array_equal(s0.x, s1.x)

    def test_sparse_mode_shapes(self):
        view = small_view()
        state = initialize(SolverConfig(d=2, mode="sparse", seed=1), view)
        assert state.w.shape == (view.n_edges, 2)
        assert state.c.shape == (3, 2)

    def test_bad_config_rejected(self):
        for bad in (dict(d=0), dict(d=2, beta=0.0), dict(d=2, beta=2.5),
                    dict(d=2, gamma=0.0), dict(d=2, mode="other")):
            with pytest.raises(ValueError):
                initialize(SolverConfig(**bad), small_view())


class TestProjectA:
    def test_in_set_state_unchanged(self):
        view = small_view()
        cfg = SolverConfig(d=2, seed=0)
        state = ReplicaState.zeros("dense", 3, 2, view.n_edges, 2)
        # zero replicas satisfy every |r| <= 0.5 edge; give violating edges slack
        state.w[...] = 0.0
        state.b[...] = 0.0
        # make residuals all small so the zero state is feasible
        feasible = make_view(3, 2, [(0, 0, 0.25), (1, 1, -0.4)])
        st2 = ReplicaState.zeros("dense", 3, 2, feasible.n_edges, 2)
        out = project_A(st2, feasible, cfg)
        assert np.array_equal(out.x, st2.x)

    def test_c_rounding_example(self):
        view = make_view(2, 1, [(0, 0, 0.0), (1, 0, 0.0)])
        cfg = SolverConfig(d=2, seed=0)
        state = ReplicaState.zeros("dense", 2, 1, view.n_edges, 2)
        state.c[0] = [0.3, 0.6]
        state.c[1] = [0.5, 1.7]
        out = project_A(state, view, cfg)
        assert list(out.c[0]) == [0.0, 1.0]
        assert list(out.c[1]) == [1.0, 1.0]   # ties at 0.5 round to 1; clipped to bits

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        view = small_view()
        cfg = SolverConfig(d=3, seed=0)
        for mode in ("dense", "sparse"):
            cfg.mode = mode
            state = initialize(cfg, view)
            state.x[:] = rng.uniform(-2, 2, state.x.size)
            once = project_A(state, view, cfg)
            twice = project_A(once, view, cfg)
            assert np.max(np.abs(twice.x - once.x)) <= 1e-9

    def test_band_satisfied_on_every_edge(self):
        rng = np.random.default_rng(5)
        view = small_view()
        cfg = SolverConfig(d=2, seed=0, mode="sparse")
        state = initialize(cfg, view)
        state.x[:] = rng.uniform(-3, 3, state.x.size)
        out = project_A(state, view, cfg)
        prod = np.einsum("nd,nd->n", out.b, out.w)
        assert np.all(np.abs(view.edge_residual - prod) <= 0.5 + 1e-9)

    def test_unrated_pairs_untouched_in_dense_mode(self):
        view = make_view(2, 2, [(0, 0, 2.0)])   # single rated edge
        cfg = SolverConfig(d=1, seed=0)
        state = initialize(cfg, view)
        before = state.w.copy()
        out = project_A(state, view, cfg)
        # pair (1, 1) has no rating: replicas identical
        assert out.w[1, 1] == before[1, 1]
        assert out.w[0, 1] == before[0, 1]
        assert out.w[0, 0] != before[0, 0]  # the rated edge moved


class TestProjectB:
    def test_viewer_mean_example(self):
        # viewer 0 has bit replicas 0.2, 0.4 and c 0.6: plain average is 0.4
        view = make_view(1, 2, [(0, 0, 0.0), (0, 1, 0.0)])
        cfg = SolverConfig(d=1, seed=0)
        state = ReplicaState.zeros("dense", 1, 2, view.n_edges, 1)
        state.b[0, 0, 0] = 0.2
        state.b[0, 1, 0] = 0.4
        state.c[0, 0] = 0.6
        out = project_B(state, view, cfg)
        assert np.allclose(out.b, 0.4)
        assert np.allclose(out.c, 0.4)

    def test_gamma_weighted_mean_example(self):
        view = make_view(1, 1, [(0, 0, 0.0)])
        cfg = SolverConfig(d=1, seed=0, gamma=2.0)
        state = ReplicaState.zeros("dense", 1, 1, view.n_edges, 1)
        state.b[0, 0, 0] = 0.3
        state.c[0, 0] = 0.6
        out = project_B(state, view, cfg)
        assert out.b[0, 0, 0] == pytest.approx(0.5, abs=1e-15)
        assert out.c[0, 0] == pytest.approx(0.5, abs=1e-15)

    def test_already_concurring_state_unchanged(self):
        view = small_view()
        cfg = SolverConfig(d=2, seed=0)
        state = ReplicaState.zeros("dense", 3, 2, view.n_edges, 2)
        state.w[...] = np.array([0.25, -0.5])[None, None, :]
        state.b[...] = np.array([1.0, 0.0])[None, None, :]
        state.c[...] = np.array([1.0, 0.0])[None, :]
        out = project_B(state, view, cfg)
        assert np.array_equal(out.x, state.x)

    def test_concur_exactness(self):
        rng = np.random.default_rng(9)
        view = small_view()
        for mode in ("dense", "sparse"):
            cfg = SolverConfig(d=3, seed=0, mode=mode)
            state = initialize(cfg, view)
            state.x[:] = rng.uniform(-2, 2, state.x.size)
            out = project_B(state, view, cfg)
            if mode == "dense":
                assert np.max(np.abs(out.w - out.w[:1])) == 0.0
                assert np.max(np.abs(out.b - out.c[:, None, :])) == 0.0
            else:
                assert np.max(np.abs(out.w - out.w[view.edge_movie_slot[0]])) >= 0.0
                assert np.max(np.abs(out.b - out.c[view.edge_viewer])) == 0.0

    def test_idempotent(self):
        rng = np.random.default_rng(11)
        view = small_view()
        for mode in ("dense", "sparse"):
            cfg = SolverConfig(d=2, seed=0, mode=mode)
            state = initialize(cfg, view)
            state.x[:] = rng.uniform(-2, 2, state.x.size)
            once = project_B(state, view, cfg)
            twice = project_B(once, view, cfg)
            assert np.max(np.abs(twice.x - once.x)) <= 1e-9

    def test_zero_edge_viewer_keeps_its_c(self):
        view = make_view(2, 1, [(0, 0, 0.1)])   # viewer 1 rated nothing
        cfg = SolverConfig(d=1, seed=0, mode="sparse")
        state = ReplicaState.zeros("sparse", 2, 1, view.n_edges, 1)
        state.c[1, 0] = 0.37
        out = project_B(state, view, cfg)
        assert out.c[1, 0] == 0.37


class TestRrrStep:
    def test_fixed_point_is_exact(self):
        # dyadic weights keep every average exact, so the constructed point
        # of A intersect B must be returned bit-for-bit with delta_x == 0
        bits = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        weights = np.array([[0.25, -0.5], [0.75, 0.5]])
        edges = [(v, m, float(bits[v] @ weights[m])) for v in range(3) for m in range(2)]
        view = make_view(3, 2, edges)
        cfg = SolverConfig(d=2, seed=0)
        state = ReplicaState.zeros("dense", 3, 2, view.n_edges, 2)
        state.w[...] = weights[None, :, :]
        state.b[...] = bits[:, None, :]
        state.c[...] = bits
        new_state, delta_x = rrr_step(state, view, cfg)
        assert delta_x == 0.0
        assert np.array_equal(new_state.x, state.x)

    def test_scalar_caricature(self):
        # P_A(0) = 1, P_B(2) = 0 with beta = 0.5 must land on -0.5
        x = np.array([0.0])
        new_x, _ = relaxed_double_reflection(
            x, lambda v: np.ones_like(v), lambda v: np.zeros_like(v), 0.5)
        assert new_x[0] == pytest.approx(-0.5, abs=1e-15)

    def test_beta_two_is_pure_double_reflection(self):
        rng = np.random.default_rng(21)
        x = rng.uniform(-1, 1, 5)
        pa = lambda v: np.round(v)
        pb = lambda v: 0.5 * v
        new_x, _ = relaxed_double_reflection(x, pa, pb, 2.0)
        ra = 2 * pa(x) - x
        expected = 2 * pb(ra) - ra
        assert np.allclose(new_x, expected, atol=1e-15)

    def test_delta_x_is_rms_per_component(self):
        view = small_view()
        cfg = SolverConfig(d=2, seed=3)
        state = initialize(cfg, view)
        new_state, delta_x = rrr_step(state, view, cfg)
        assert delta_x == pytest.approx(
            float(np.sqrt(np.mean((new_state.x - state.x) ** 2))), rel=1e-12)


class TestSolve:
    def planted_view(self, seed=0):
        spec = SyntheticSpec(viewers=60, movies=20, d=2, density=0.5,
                             noise_sigma=0.1, quantize=False, seed=seed)
        ds, _ = synthesize(spec)
        return full_view(center(ds))

    def test_zero_iterations_rejected(self):
        view = self.planted_view()
        with pytest.raises(ValueError, match="max_iterations"):
            solve(SolverConfig(d=2, max_iterations=0, seed=0), view)

    def test_beats_all_zero_bit_model_on_representable_view(self):
        # residuals constructed exactly as bits.weights: the all-zero start
        # already scores the residual RMS, so the best must be below it
        rng = np.random.default_rng(13)
        bits = (rng.random((40, 2)) < 0.5).astype(float)
        weights = rng.uniform(-1, 1, (12, 2))
        edges = [(v, m, float(bits[v] @ weights[m]))
                 for v in range(40) for m in range(12) if rng.random() < 0.6]
        view = make_view(40, 12, edges)
        res = solve(SolverConfig(d=2, max_iterations=200, seed=1), view)
        assert res.best_rmse < view.residual_rms()

    def test_best_rmse_is_series_minimum(self):
        view = self.planted_view()
        res = solve(SolverConfig(d=2, max_iterations=50, seed=2), view)
        assert res.best_rmse == min(s.rmse for s in res.stats)
        assert res.stats[res.best_iteration - 1].rmse == res.best_rmse

    def test_running_best_nonincreasing(self):
        view = self.planted_view()
        res = solve(SolverConfig(d=2, max_iterations=80, seed=3), view)
        best = np.minimum.accumulate([s.rmse for s in res.stats])
        assert np.all(np.diff(best) <= 0.0 + 1e-15)

    def test_deterministic_across_runs_and_threads(self):
        view = self.planted_view()
        cfg = SolverConfig(d=2, max_iterations=40, seed=5)
        r1 = solve(cfg, view, threads=1)
        r2 = solve(cfg, view, threads=1)
        r4 = solve(cfg, view, threads=4)
        assert np.array_equal(r1.bits, r2.bits)
        assert np.array_equal(r1.weights, r2.weights)
        assert [s.rmse for s in r1.stats] == [s.rmse for s in r2.stats]
        for a, b in zip(r1.stats, r4.stats):
            assert abs(a.rmse - b.rmse) <= 1e-6

    def test_restart_flags_and_warning(self):
        view = self.planted_view()
        cfg = SolverConfig(d=2, max_iterations=20, seed=7,
                           restart_rmse_threshold=0.0)   # force restarts
        res = solve(cfg, view)
        assert all(s.restarted for s in res.stats)
        assert res.all_restarts
        assert res.best_rmse == min(s.rmse for s in res.stats)

    def test_no_restarts_below_threshold(self):
        view = self.planted_view()
        res = solve(SolverConfig(d=2, max_iterations=30, seed=8), view)
        assert not any(s.restarted for s in res.stats)
        assert not res.all_restarts

    def test_sparse_mode_runs_and_is_deterministic(self):
        view = self.planted_view()
        cfg = SolverConfig(d=2, max_iterations=40, seed=9, mode="sparse")
        r1 = solve(cfg, view)
        r2 = solve(cfg, view)
        assert np.array_equal(r1.bits, r2.bits)
        assert r1.best_rmse == r2.best_rmse

    def test_stats_csv(self, tmp_path):
        view = self.planted_view()
        res = solve(SolverConfig(d=2, max_iterations=12, seed=4), view)
        path = tmp_path / "stats.csv"
        write_stats_csv(res.stats, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "#schema=1"
        assert lines[1] == "iteration,delta_x,rmse,restarted"
        assert len(lines) == 2 + 12
        first = lines[2].split(",")
        assert first[0] == "1"
        assert float(first[2]) == res.stats[0].rmse


class TestStateRmse:
    def test_matches_direct_computation(self):
        view = small_view()
        cfg = SolverConfig(d=2, seed=1)
        state = initialize(cfg, view)
        rmse, bits, wbar = state_rmse(state, view, cfg)
        pred = np.einsum("nd,nd->n", bits[view.edge_viewer], wbar[view.edge_movie_slot])
        expected = float(np.sqrt(np.mean((view.edge_residual - pred) ** 2)))
        assert rmse == pytest.approx(expected, rel=1e-12)
        assert set(np.unique(bits)) <= {0.0, 1.0}

    def test_round_bits_tie_goes_up(self):
        assert list(round_bits(np.array([0.49999, 0.5, -0.2, 1.2]))) == [0, 1, 0, 1]
