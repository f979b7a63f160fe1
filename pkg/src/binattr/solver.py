"""Divide-and-concur training of viewer bits by relaxed reflect-reflect.

The constraint system replicates the bit vector and weight vector once per
viewer-movie pair, adds one extra bit replica per viewer that is forced to
be binary, and alternates between two projections: constraint set A
(per-edge rating band plus bit rounding) and constraint set B (all replicas
of a variable agree).  The iteration

    x -> x + (beta/2) * (R_B(R_A(x)) - x),   R(x) = 2 P(x) - x

searches for a point whose A-projection lies in both sets.  The run is
monitored by the model RMSE that the current state implies; the best
snapshot over all iterations is the answer.

Dense mode carries replicas for every viewer-movie pair of the training
view (unrated pairs are simply unconstrained in A); sparse mode keeps only
rated edges and reweights the per-viewer averaging by `gamma`.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .centering import TrainingView
from .projection import project_band_batch

DENSE = "dense"
SPARSE = "sparse"


@dataclass
class SolverConfig:
    d: int
    beta: float = 0.5
    max_iterations: int = 1000
    restart_rmse_threshold: float = 1.1
    seed: int = 0
    mode: str = DENSE
    gamma: float = 1.0
    rounding_tolerance: float = 0.5  # half-width of the rating band; fixed
    root_find_tolerance: float = 1e-12

    def validate(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not (0.0 < self.beta <= 2.0):
            raise ValueError(f"beta must be in (0, 2], got {self.beta}")
        if self.gamma <= 0.0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.mode not in (DENSE, SPARSE):
            raise ValueError(f"mode must be '{DENSE}' or '{SPARSE}'")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class IterationStats:
    iteration: int
    delta_x: float
    rmse: float
    restarted: bool


@dataclass
class SolveResult:
    bits: np.ndarray            # (V, d) uint8, best snapshot
    weights: np.ndarray         # (Ms, d) concurred weights of the best snapshot
    movies: np.ndarray          # original movie indices the weights cover
    best_rmse: float
    best_iteration: int
    stats: list
    config: SolverConfig
    all_restarts: bool = False


class ReplicaState:
    """Flat replica vector with (w, b, c) views.

    Layout is [all w | all b | all c].  In dense mode w and b are
    (V, Ms, d); in sparse mode they are (E, d) aligned with the view's
    edge arrays.  c is always (V, d).
    """

    def __init__(self, x: np.ndarray, mode: str, V: int, Ms: int, E: int, d: int):
        self.x = x
        self.mode = mode
        self.V = V
        self.Ms = Ms
        self.E = E
        self.d = d
        n_pair = V * Ms * d if mode == DENSE else E * d
        self._n_pair = n_pair
        if x.size != 2 * n_pair + V * d:
            raise ValueError("state size does not match layout")

    @classmethod
    def zeros(cls, mode: str, V: int, Ms: int, E: int, d: int):
        n_pair = V * Ms * d if mode == DENSE else E * d
        return cls(np.zeros(2 * n_pair + V * d), mode, V, Ms, E, d)

    def _pair_shape(self):
        return (self.V, self.Ms, self.d) if self.mode == DENSE else (self.E, self.d)

    @property
    def w(self) -> np.ndarray:
        return self.x[:self._n_pair].reshape(self._pair_shape())

    @property
    def b(self) -> np.ndarray:
        return self.x[self._n_pair:2 * self._n_pair].reshape(self._pair_shape())

    @property
    def c(self) -> np.ndarray:
        return self.x[2 * self._n_pair:].reshape(self.V, self.d)

    def like(self, x: np.ndarray) -> "ReplicaState":
        return ReplicaState(x, self.mode, self.V, self.Ms, self.E, self.d)

    def copy(self) -> "ReplicaState":
        return self.like(self.x.copy())


def _rng_for_restart(seed, restart: int):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(restart,)))


def initialize(config: SolverConfig, view: TrainingView, restart: int = 0) -> ReplicaState:
    """Random starting state: w in [-2/d, 2/d), b and c in [0, 1/2).

    Bits start nearer to "off" so the iteration chooses which ones to turn
    on while it tunes the weights, instead of freezing a random bit
    assignment.  Each restart draws from its own child seed stream.
    """
    config.validate()
    if view.n_edges < 1:
        raise ValueError("view has no edges")
    rng = _rng_for_restart(config.seed, restart)
    state = ReplicaState.zeros(config.mode, view.viewer_count, view.movie_count,
                               view.n_edges, config.d)
    lim = 2.0 / config.d
    state.w[...] = rng.uniform(-lim, lim, state.w.shape)
    state.b[...] = rng.uniform(0.0, 0.5, state.b.shape)
    state.c[...] = rng.uniform(0.0, 0.5, state.c.shape)
    return state


def round_bits(c: np.ndarray) -> np.ndarray:
    """Nearest bit per component; components at exactly 0.5 round to 1."""
    return np.clip(np.floor(c + 0.5), 0.0, 1.0)


def project_A(state: ReplicaState, view: TrainingView, config: SolverConfig,
              pool=None) -> ReplicaState:
    """Per-edge rating-band projection plus bit rounding of the c block.

    Replicas of unrated pairs (dense mode) are untouched: with no rating
    there is no constraint, and keeping them is distance minimizing.
    """
    out = state.copy()
    if state.mode == DENSE:
        ev, em = view.edge_viewer, view.edge_movie_slot
        b1, w1 = project_band_batch(state.b[ev, em], state.w[ev, em], view.edge_residual,
                                    half_width=config.rounding_tolerance,
                                    tol=config.root_find_tolerance, pool=pool)
        out.b[ev, em] = b1
        out.w[ev, em] = w1
    else:
        b1, w1 = project_band_batch(state.b, state.w, view.edge_residual,
                                    half_width=config.rounding_tolerance,
                                    tol=config.root_find_tolerance, pool=pool)
        out.b[...] = b1
        out.w[...] = w1
    out.c[...] = round_bits(state.c)
    return out


def concurred_weights(state: ReplicaState, view: TrainingView) -> np.ndarray:
    """Per-movie mean of the weight replicas over the state's pair domain."""
    if state.mode == DENSE:
        return state.w.mean(axis=0)
    wbar = np.zeros((view.movie_count, state.d))
    counts = np.bincount(view.edge_movie_slot, minlength=view.movie_count)
    for j in range(state.d):
        wbar[:, j] = np.bincount(view.edge_movie_slot, weights=state.w[:, j],
                                 minlength=view.movie_count)
    nonzero = counts > 0
    wbar[nonzero] /= counts[nonzero, None]
    return wbar


def _concurred_bits(state: ReplicaState, view: TrainingView, gamma: float) -> np.ndarray:
    """Weighted per-viewer mean of bit replicas and the extra c replica."""
    if state.mode == DENSE:
        bsum = state.b.sum(axis=1)
        counts = np.full(state.V, float(state.Ms))
    else:
        bsum = np.zeros((state.V, state.d))
        counts = np.bincount(view.edge_viewer, minlength=state.V).astype(np.float64)
        for j in range(state.d):
            bsum[:, j] = np.bincount(view.edge_viewer, weights=state.b[:, j],
                                     minlength=state.V)
    return (bsum + gamma * state.c) / (counts + gamma)[:, None]


def project_B(state: ReplicaState, view: TrainingView, config: SolverConfig) -> ReplicaState:
    """Concur projection: replace every replica family by its (weighted) mean."""
    out = state.copy()
    wbar = concurred_weights(state, view)
    bbar = _concurred_bits(state, view, config.gamma)
    if state.mode == DENSE:
        out.w[...] = wbar[None, :, :]
        out.b[...] = bbar[:, None, :]
    else:
        out.w[...] = wbar[view.edge_movie_slot]
        out.b[...] = bbar[view.edge_viewer]
    out.c[...] = bbar
    return out


def relaxed_double_reflection(x, pa, pb, beta):
    """One step of x -> x + (beta/2) (R_B(R_A(x)) - x) for any projections.

    Written in increment form so an exact fixed point of both projections
    is returned bit-for-bit unchanged.  Returns (new_x, increment).
    """
    ra = 2.0 * pa(x) - x
    rb = 2.0 * pb(ra) - ra
    step = (beta / 2.0) * (rb - x)
    return x + step, step


def rrr_step(state: ReplicaState, view: TrainingView, config: SolverConfig,
             pool=None):
    """Advance one iteration; returns (new_state, delta_x).

    delta_x is the root-mean-square per-component change of the full
    replica vector, so it is comparable across problem sizes.
    """
    new_x, step = relaxed_double_reflection(
        state.x,
        lambda x: project_A(state.like(x), view, config, pool=pool).x,
        lambda x: project_B(state.like(x), view, config).x,
        config.beta)
    delta_x = float(np.sqrt(np.mean(step ** 2)))
    return state.like(new_x), delta_x


def state_rmse(state: ReplicaState, view: TrainingView, config: SolverConfig):
    """Model RMSE implied by the state: rounded c bits, concurred weights.

    Returns (rmse, bits, weights) so the monitoring loop can snapshot the
    model without recomputation.
    """
    bits = round_bits(state.c)
    wbar = concurred_weights(state, view)
    pred = np.einsum("nd,nd->n", bits[view.edge_viewer], wbar[view.edge_movie_slot])
    err = view.edge_residual - pred
    return float(np.sqrt(np.mean(err ** 2))), bits, wbar


def solve(config: SolverConfig, view: TrainingView, threads: int = 1) -> SolveResult:
    """Run the full monitored iteration and return the best snapshot.

    Each iteration advances the state, evaluates the implied model's RMSE
    on the view's edges, and reinitializes from a fresh seed stream when
    the RMSE exceeds the restart threshold.  The reported solution is the
    iteration with the lowest RMSE, not the last one.
    """
    config.validate()
    if config.max_iterations < 1:
        raise ValueError("max_iterations must be >= 1: the stats series may not be empty")
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        state = initialize(config, view, restart=0)
        restarts = 0
        stats = []
        best = None
        for it in range(1, config.max_iterations + 1):
            state, delta_x = rrr_step(state, view, config, pool=pool)
            rmse, bits, wbar = state_rmse(state, view, config)
            restarted = rmse > config.restart_rmse_threshold
            stats.append(IterationStats(it, delta_x, rmse, restarted))
            if best is None or rmse < best[0]:
                best = (rmse, it, bits.astype(np.uint8), wbar.copy())
            if restarted:
                restarts += 1
                state = initialize(config, view, restart=restarts)
    finally:
        if pool is not None:
            pool.shutdown()
    best_rmse, best_it, bits, weights = best
    return SolveResult(bits=bits, weights=weights, movies=view.movies.copy(),
                       best_rmse=best_rmse, best_iteration=best_it, stats=stats,
                       config=config, all_restarts=all(s.restarted for s in stats))


def write_stats_csv(stats, path) -> None:
    """Iteration series as CSV: iteration,delta_x,rmse,restarted."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("#schema=1\n")
        fh.write("iteration,delta_x,rmse,restarted\n")
        for s in stats:
            fh.write(f"{s.iteration},{s.delta_x!r},{s.rmse!r},{int(s.restarted)}\n")
