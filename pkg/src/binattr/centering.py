"""Two-stage mean removal, baseline-error ranking, and training views.

Centering subtracts each movie's mean rating, then each viewer's mean of
what remains, leaving residuals that the bit/weight model has to explain.
Means are computed from the train partition only; probe rows get residuals
formed with the train-derived means.
"""

from __future__ import annotations

import numpy as np

from .datasets import RatingsDataset, TRAIN, PROBE


class CenteredRatings:
    """Residual ratings plus the means that were removed from them."""

    def __init__(self, dataset: RatingsDataset, movie_means, viewer_means, residuals):
        self.dataset = dataset
        self.movie_means = np.asarray(movie_means, dtype=np.float64)
        self.viewer_means = np.asarray(viewer_means, dtype=np.float64)
        self.residuals = np.asarray(residuals, dtype=np.float64)
        train = dataset.partition == TRAIN
        self.train_entries = np.flatnonzero(train)
        self.probe_entries = np.flatnonzero(~train)
        self.n_train = self.train_entries.size
        # train entries grouped by movie and by viewer, CSR style
        m = dataset.movie_idx[self.train_entries]
        v = dataset.viewer_idx[self.train_entries]
        order_m = np.argsort(m, kind="stable")
        self.movie_sorted_entries = self.train_entries[order_m]
        self.movie_indptr = _indptr(m[order_m], dataset.movie_count)
        order_v = np.argsort(v, kind="stable")
        self.viewer_sorted_entries = self.train_entries[order_v]
        self.viewer_indptr = _indptr(v[order_v], dataset.viewer_count)

    @property
    def viewer_count(self) -> int:
        return self.dataset.viewer_count

    @property
    def movie_count(self) -> int:
        return self.dataset.movie_count

    @property
    def global_train_mean(self) -> float:
        stars = self.dataset.stars[self.train_entries]
        return float(stars.mean()) if stars.size else 0.0

    def stage1_residuals(self, entries) -> np.ndarray:
        """Residuals after movie-mean removal only (stars - movie_mean)."""
        ds = self.dataset
        return ds.stars[entries] - self.movie_means[ds.movie_idx[entries]]


def _indptr(sorted_keys: np.ndarray, n: int) -> np.ndarray:
    counts = np.bincount(sorted_keys, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr


def center(dataset: RatingsDataset) -> CenteredRatings:
    """Remove movie means, then viewer means of the remainder.

    Movies or viewers with no train ratings get mean 0, which keeps the
    reconstruction identity stars = movie_mean + viewer_mean + residual
    valid for every entry.
    """
    if dataset.n_entries == 0:
        raise ValueError("cannot center an empty dataset")
    train = dataset.partition == TRAIN
    M, V = dataset.movie_count, dataset.viewer_count

    m_counts = np.bincount(dataset.movie_idx[train], minlength=M)
    m_sums = np.bincount(dataset.movie_idx[train], weights=dataset.stars[train], minlength=M)
    movie_means = np.divide(m_sums, m_counts, out=np.zeros(M), where=m_counts > 0)

    stage1 = dataset.stars - movie_means[dataset.movie_idx]
    v_counts = np.bincount(dataset.viewer_idx[train], minlength=V)
    v_sums = np.bincount(dataset.viewer_idx[train], weights=stage1[train], minlength=V)
    viewer_means = np.divide(v_sums, v_counts, out=np.zeros(V), where=v_counts > 0)

    residuals = stage1 - viewer_means[dataset.viewer_idx]
    return CenteredRatings(dataset, movie_means, viewer_means, residuals)


class BaselineRanking:
    """Movies ordered by their squared error under the movie-mean predictor."""

    def __init__(self, errors, order, cumulative_fractions, total_error):
        self.errors = np.asarray(errors, dtype=np.float64)
        self.order = np.asarray(order, dtype=np.int64)
        self.cumulative_fractions = np.asarray(cumulative_fractions, dtype=np.float64)
        self.total_error = float(total_error)


def rank_baseline(centered: CenteredRatings) -> BaselineRanking:
    """Rank movies by how much squared error the movie-mean predictor leaves.

    Descending error, ties broken by ascending movie index.  When the total
    error is zero every cumulative fraction is reported as 1.0.
    """
    if centered.n_train == 0:
        raise ValueError("ranking requires at least one train entry")
    ds = centered.dataset
    stage1 = centered.stage1_residuals(centered.train_entries)
    errors = np.bincount(ds.movie_idx[centered.train_entries], weights=stage1 ** 2,
                         minlength=ds.movie_count)
    # argsort on (-error, index): stable sort of -errors keeps index order in ties
    order = np.argsort(-errors, kind="stable")
    total = float(errors.sum())
    cum = np.cumsum(errors[order])
    if total > 0:
        fractions = cum / total
        fractions[-1] = 1.0
    else:
        fractions = np.ones_like(cum)
    return BaselineRanking(errors, order, fractions, total)


def select_subset(ranking: BaselineRanking, fraction: float) -> np.ndarray:
    """Smallest ranking prefix covering `fraction` of the total baseline error.

    Returns movie indices sorted ascending.
    """
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    target = fraction * ranking.total_error
    cum = np.cumsum(ranking.errors[ranking.order])
    # tiny slack so exact-fraction targets are not missed to round-off
    k = int(np.searchsorted(cum, target - 1e-9 * max(target, 1.0), side="left"))
    k = min(k, ranking.order.size - 1)
    return np.sort(ranking.order[:k + 1])


class TrainingView:
    """Train edges restricted to a movie subset; means stay as computed.

    Edges are stored sorted by (movie slot, viewer).  `movies` maps the
    compact movie slots back to original movie indices.  Viewers keep their
    original indexing even when they have no edge inside the subset.
    """

    def __init__(self, viewer_count, movies, edge_viewer, edge_movie_slot,
                 edge_residual, centered=None, edge_entry=None):
        self.viewer_count = int(viewer_count)
        self.movies = np.asarray(movies, dtype=np.int64)
        self.edge_viewer = np.asarray(edge_viewer, dtype=np.int64)
        self.edge_movie_slot = np.asarray(edge_movie_slot, dtype=np.int64)
        self.edge_residual = np.asarray(edge_residual, dtype=np.float64)
        self.centered = centered
        self.edge_entry = edge_entry

    @classmethod
    def from_centered(cls, centered: CenteredRatings, movies: np.ndarray):
        movies = np.asarray(movies, dtype=np.int64)
        ds = centered.dataset
        blocks = [centered.movie_sorted_entries[centered.movie_indptr[m]:centered.movie_indptr[m + 1]]
                  for m in movies]
        entries = (np.concatenate(blocks) if blocks else np.zeros(0, dtype=np.int64))
        slots = np.repeat(np.arange(movies.size), [b.size for b in blocks])
        return cls(ds.viewer_count, movies, ds.viewer_idx[entries], slots,
                   centered.residuals[entries], centered=centered, edge_entry=entries)

    @property
    def movie_count(self) -> int:
        return self.movies.size

    @property
    def n_edges(self) -> int:
        return self.edge_residual.size

    def residual_rms(self) -> float:
        if self.n_edges == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.edge_residual ** 2)))


def restrict(centered: CenteredRatings, movies) -> TrainingView:
    """View of the train edges whose movie lies in `movies` (means untouched)."""
    movies = np.unique(np.asarray(movies, dtype=np.int64))
    if movies.size == 0:
        raise ValueError("movie subset must be nonempty")
    if movies.min() < 0 or movies.max() >= centered.movie_count:
        raise ValueError("movie index out of range")
    return TrainingView.from_centered(centered, movies)


def full_view(centered: CenteredRatings) -> TrainingView:
    """View over every movie."""
    return TrainingView.from_centered(centered, np.arange(centered.movie_count))
