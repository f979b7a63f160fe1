"""The bit/weight rating model: least-squares weight fitting and evaluation.

A model assigns every viewer a binary attribute vector and every covered
movie a real weight vector.  A predicted rating is
movie_mean + viewer_mean + bits . weights; training happens in the
mean-removed residual space, where the same dot product has to match the
residuals.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .centering import CenteredRatings
from .datasets import RatingsDataset

RIDGE = 1e-8


class BarModel:
    """Viewer bits, movie weights, and the means removed during centering.

    `weight_movies` lists the movie indices covered by `weights`; a freshly
    trained subset model covers only its training movies, an extended model
    covers the whole catalog.
    """

    def __init__(self, bits, weights, movie_means, viewer_means, *,
                 weight_movies=None, viewer_ids=None, movie_ids=None, titles=None,
                 global_mean=0.0, provenance=None):
        self.bits = np.ascontiguousarray(bits, dtype=np.uint8)
        self.weights = np.ascontiguousarray(weights, dtype=np.float64)
        self.movie_means = np.asarray(movie_means, dtype=np.float64)
        self.viewer_means = np.asarray(viewer_means, dtype=np.float64)
        if weight_movies is None:
            weight_movies = np.arange(self.weights.shape[0])
        self.weight_movies = np.asarray(weight_movies, dtype=np.int64)
        self.viewer_ids = list(viewer_ids) if viewer_ids is not None else None
        self.movie_ids = list(movie_ids) if movie_ids is not None else None
        self.titles = list(titles) if titles is not None else None
        self.global_mean = float(global_mean)
        self.provenance = dict(provenance) if provenance else {}
        self._validate()
        # weight lookup by original movie index; -1 marks uncovered movies
        self._slot_of_movie = np.full(self.movie_means.size, -1, dtype=np.int64)
        self._slot_of_movie[self.weight_movies] = np.arange(self.weight_movies.size)

    def _validate(self):
        if self.bits.ndim != 2 or self.weights.ndim != 2:
            raise ValueError("bits and weights must be 2-d")
        if self.bits.shape[0] == 0:
            raise ValueError("model needs at least one viewer")
        if self.bits.shape[1] != self.weights.shape[1]:
            raise ValueError(
                f"attribute count mismatch: bits d={self.bits.shape[1]}, "
                f"weights d={self.weights.shape[1]}")
        if np.any(self.bits > 1):
            raise ValueError("bits must be 0 or 1")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        if self.bits.shape[0] != self.viewer_means.size:
            raise ValueError("bits and viewer_means disagree on viewer count")
        if self.weight_movies.size != self.weights.shape[0]:
            raise ValueError("weight_movies must align with weights")
        if self.weight_movies.size and (self.weight_movies.min() < 0
                                        or self.weight_movies.max() >= self.movie_means.size):
            raise ValueError("weight_movies index out of range")

    @property
    def d(self) -> int:
        return self.bits.shape[1]

    @property
    def viewer_count(self) -> int:
        return self.bits.shape[0]

    @property
    def movie_count(self) -> int:
        return self.movie_means.size

    def covers_all_movies(self) -> bool:
        return self.weight_movies.size == self.movie_count

    def title(self, movie_index: int) -> str:
        if self.titles is not None and self.titles[movie_index]:
            return self.titles[movie_index]
        if self.movie_ids is not None:
            return self.movie_ids[movie_index]
        return str(movie_index)


@dataclass
class EvalReport:
    rmse: float
    edge_count: int
    partition: str

    def csv_row(self) -> str:
        return f"{self.partition},{self.edge_count},{self.rmse!r}"


def config_hash(config_dict: dict) -> str:
    """Stable short hash of a configuration mapping."""
    blob = json.dumps(config_dict, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def fit_weights(bits, centered: CenteredRatings, movies=None, ridge=RIDGE, pool=None):
    """Per-movie least squares for the weight vectors, bits held fixed.

    For each movie the d x d ridge-regularized normal equations
    (B'B + ridge*I) w = B'r are solved over that movie's train raters.
    Movies with no raters get the zero vector.  Each movie's solve is
    self-contained, so threading over movies cannot change the result.
    """
    bits = np.asarray(bits, dtype=np.float64)
    if bits.shape[0] != centered.viewer_count:
        raise ValueError("bits must cover every viewer")
    d = bits.shape[1]
    if movies is None:
        movies = np.arange(centered.movie_count)
    movies = np.asarray(movies, dtype=np.int64)
    gram = np.zeros((movies.size, d, d))
    rhs = np.zeros((movies.size, d))

    def accumulate(span):
        for k in span:
            m = movies[k]
            entries = centered.movie_sorted_entries[
                centered.movie_indptr[m]:centered.movie_indptr[m + 1]]
            if entries.size == 0:
                continue
            B = bits[centered.dataset.viewer_idx[entries]]
            gram[k] = B.T @ B
            rhs[k] = B.T @ centered.residuals[entries]

    if pool is None:
        accumulate(range(movies.size))
    else:
        spans = np.array_split(np.arange(movies.size), pool._max_workers)
        list(pool.map(accumulate, [s for s in spans if s.size]))

    gram += ridge * np.eye(d)
    return np.linalg.solve(gram, rhs[:, :, None])[:, :, 0]


def assemble(bits, weights, centered: CenteredRatings, provenance=None) -> BarModel:
    """Package bits and full-catalog weights with the centering means."""
    bits = np.asarray(bits)
    weights = np.asarray(weights, dtype=np.float64)
    if bits.ndim != 2 or bits.shape[0] != centered.viewer_count:
        raise ValueError("bits must be (viewer_count, d)")
    if weights.shape[0] != centered.movie_count:
        raise ValueError("weights must cover every movie")
    if bits.shape[1] != weights.shape[1]:
        raise ValueError("bits and weights disagree on attribute count")
    ds = centered.dataset
    return BarModel(bits, weights, centered.movie_means, centered.viewer_means,
                    viewer_ids=ds.viewer_ids, movie_ids=ds.movie_ids, titles=ds.titles,
                    global_mean=centered.global_train_mean, provenance=provenance)


def predict(model: BarModel, viewer: int, movie: int, clamp: bool = False) -> float:
    """Predicted stars for a (viewer, movie) pair.

    Unknown viewers fall back to the movie mean, unknown movies to the
    global train mean.  Predictions are not clamped to [1, 5] unless asked.
    """
    known_viewer = 0 <= viewer < model.viewer_count
    known_movie = 0 <= movie < model.movie_count
    if not known_movie:
        value = model.global_mean
    elif not known_viewer:
        value = float(model.movie_means[movie])
    else:
        value = float(model.movie_means[movie] + model.viewer_means[viewer])
        slot = model._slot_of_movie[movie]
        if slot >= 0:
            value += float(model.bits[viewer].astype(np.float64) @ model.weights[slot])
    if clamp:
        value = min(max(value, 1.0), 5.0)
    return value


def _covered_partition_entries(model: BarModel, dataset: RatingsDataset, partition: str):
    mask = dataset.partition_mask(partition)
    covered = model._slot_of_movie[dataset.movie_idx] >= 0
    return np.flatnonzero(mask & covered)


def evaluate(model: BarModel, dataset: RatingsDataset, partition: str = "train") -> EvalReport:
    """RMSE of the model's predictions over one partition's raw stars.

    Only entries whose movie carries weights are scored; for an extended
    model that is the entire partition.
    """
    entries = _covered_partition_entries(model, dataset, partition)
    if entries.size == 0:
        raise ValueError(f"partition {partition!r} has no entries covered by the model")
    v = dataset.viewer_idx[entries]
    m = dataset.movie_idx[entries]
    slots = model._slot_of_movie[m]
    pred = (model.movie_means[m] + model.viewer_means[v]
            + np.einsum("nd,nd->n", model.bits[v].astype(np.float64), model.weights[slots]))
    err = dataset.stars[entries] - pred
    return EvalReport(rmse=float(np.sqrt(np.mean(err ** 2))),
                      edge_count=int(entries.size), partition=partition)


def export_weights_csv(model: BarModel, path) -> None:
    """Plain-text weight table: movie_id,attr_0,...,attr_{d-1}."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("#schema=1\n")
        fh.write("movie_id," + ",".join(f"attr_{j}" for j in range(model.d)) + "\n")
        for slot, m in enumerate(model.weight_movies):
            mid = model.movie_ids[m] if model.movie_ids is not None else str(m)
            fh.write(mid + "," + ",".join(repr(float(x)) for x in model.weights[slot]) + "\n")


def export_bits_csv(model: BarModel, path) -> None:
    """Plain-text bit table: viewer_id,bitstring."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("#schema=1\n")
        fh.write("viewer_id,bitstring\n")
        for v in range(model.viewer_count):
            vid = model.viewer_ids[v] if model.viewer_ids is not None else str(v)
            fh.write(vid + "," + "".join(str(int(x)) for x in model.bits[v]) + "\n")
