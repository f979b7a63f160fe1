"""Versioned binary files for datasets, caches, models, and solve results.

All files share one container layout: a magic tag, a format version, and a
sequence of named items, each either a JSON document or a raw numpy array.
Writing is fully deterministic (sorted JSON keys, fixed dtypes, no
timestamps), so identical inputs produce bytewise-identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .centering import BaselineRanking, CenteredRatings, center
from .datasets import RatingsDataset
from .model import BarModel
from .solver import IterationStats, SolveResult, SolverConfig

MAGIC = b"BARF"
FORMAT_VERSION = 1

_KIND_JSON = 0
_KIND_ARRAY = 1


class FileFormatError(ValueError):
    pass


def _write_item(fh, name: str, payload: bytes, kind: int):
    name_b = name.encode("utf-8")
    fh.write(struct.pack("<HBQ", len(name_b), kind, len(payload)))
    fh.write(name_b)
    fh.write(payload)


def _array_bytes(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    head = json.dumps({"dtype": arr.dtype.str, "shape": list(arr.shape)},
                      sort_keys=True).encode()
    return struct.pack("<I", len(head)) + head + arr.tobytes()


def _array_from_bytes(payload: bytes) -> np.ndarray:
    (hlen,) = struct.unpack_from("<I", payload, 0)
    head = json.loads(payload[4:4 + hlen])
    data = payload[4 + hlen:]
    return np.frombuffer(data, dtype=np.dtype(head["dtype"])).reshape(head["shape"]).copy()


def write_container(path, file_kind: str, items: dict) -> None:
    """items maps names to numpy arrays or JSON-serializable objects."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        meta = json.dumps({"file_kind": file_kind, "n_items": len(items)},
                          sort_keys=True).encode()
        fh.write(struct.pack("<I", len(meta)) + meta)
        for name in sorted(items):
            value = items[name]
            if isinstance(value, np.ndarray):
                _write_item(fh, name, _array_bytes(value), _KIND_ARRAY)
            else:
                _write_item(fh, name, json.dumps(value, sort_keys=True).encode(), _KIND_JSON)


def read_container(path, expect_kind: str | None = None):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FileFormatError(f"{path}: not a binattr file (magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise FileFormatError(f"{path}: unsupported format version {version}")
        (mlen,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(mlen))
        if expect_kind is not None and meta["file_kind"] != expect_kind:
            raise FileFormatError(
                f"{path}: expected a {expect_kind} file, found {meta['file_kind']}")
        items = {}
        for _ in range(meta["n_items"]):
            nlen, kind, plen = struct.unpack("<HBQ", fh.read(11))
            name = fh.read(nlen).decode("utf-8")
            payload = fh.read(plen)
            if kind == _KIND_ARRAY:
                items[name] = _array_from_bytes(payload)
            else:
                items[name] = json.loads(payload)
        return meta["file_kind"], items


# ---------------------------------------------------------------- datasets

def _dataset_items(dataset: RatingsDataset, prefix="") -> dict:
    items = {
        prefix + "viewer_ids": list(dataset.viewer_ids),
        prefix + "movie_ids": list(dataset.movie_ids),
        prefix + "viewer_idx": dataset.viewer_idx.astype(np.int64),
        prefix + "movie_idx": dataset.movie_idx.astype(np.int64),
        prefix + "stars": dataset.stars,
        prefix + "partition": dataset.partition.astype(np.int8),
        prefix + "titles": dataset.titles,
    }
    return items


def _dataset_from_items(items: dict, prefix="") -> RatingsDataset:
    return RatingsDataset(
        items[prefix + "viewer_ids"], items[prefix + "movie_ids"],
        items[prefix + "viewer_idx"], items[prefix + "movie_idx"],
        items[prefix + "stars"], partition=items[prefix + "partition"],
        titles=items[prefix + "titles"])


def save_dataset(dataset: RatingsDataset, path) -> None:
    write_container(path, "dataset", _dataset_items(dataset))


def load_dataset(path) -> RatingsDataset:
    _, items = read_container(path, "dataset")
    return _dataset_from_items(items)


# ------------------------------------------------------------------ caches

def save_cache(centered: CenteredRatings, ranking: BaselineRanking, path) -> None:
    """Dataset plus centering means plus baseline ranking, in one file."""
    items = _dataset_items(centered.dataset)
    items.update({
        "movie_means": centered.movie_means,
        "viewer_means": centered.viewer_means,
        "rank_errors": ranking.errors,
        "rank_order": ranking.order,
        "rank_fractions": ranking.cumulative_fractions,
        "rank_total": {"total_error": ranking.total_error},
    })
    write_container(path, "cache", items)


def load_cache(path):
    """Returns (centered, ranking); residuals are rebuilt from the means."""
    _, items = read_container(path, "cache")
    dataset = _dataset_from_items(items)
    movie_means = items["movie_means"]
    viewer_means = items["viewer_means"]
    residuals = (dataset.stars - movie_means[dataset.movie_idx]
                 - viewer_means[dataset.viewer_idx])
    centered = CenteredRatings(dataset, movie_means, viewer_means, residuals)
    ranking = BaselineRanking(items["rank_errors"], items["rank_order"],
                              items["rank_fractions"], items["rank_total"]["total_error"])
    return centered, ranking


def build_cache(dataset: RatingsDataset):
    """Center and rank in one go (the prep step)."""
    from .centering import rank_baseline
    centered = center(dataset)
    return centered, rank_baseline(centered)


# ------------------------------------------------------------------ models

def save_model(model: BarModel, path) -> None:
    """Bits packed 8-per-byte, weights and means as doubles, JSON metadata."""
    items = {
        "bits_packed": np.packbits(model.bits, axis=1),
        "weights": model.weights,
        "weight_movies": model.weight_movies,
        "movie_means": model.movie_means,
        "viewer_means": model.viewer_means,
        "meta": {
            "d": model.d,
            "viewer_count": model.viewer_count,
            "global_mean": model.global_mean,
            "provenance": model.provenance,
        },
        "viewer_ids": model.viewer_ids,
        "movie_ids": model.movie_ids,
        "titles": model.titles,
    }
    write_container(path, "model", items)


def load_model(path) -> BarModel:
    _, items = read_container(path, "model")
    meta = items["meta"]
    bits = np.unpackbits(items["bits_packed"], axis=1, count=meta["d"])
    return BarModel(bits, items["weights"], items["movie_means"], items["viewer_means"],
                    weight_movies=items["weight_movies"],
                    viewer_ids=items["viewer_ids"], movie_ids=items["movie_ids"],
                    titles=items["titles"], global_mean=meta["global_mean"],
                    provenance=meta["provenance"])


# ----------------------------------------------------------- solve results

def save_solve_result(result: SolveResult, path) -> None:
    items = {
        "bits_packed": np.packbits(result.bits, axis=1),
        "weights": result.weights,
        "movies": result.movies,
        "stats": np.array([[s.iteration, s.delta_x, s.rmse, float(s.restarted)]
                           for s in result.stats]),
        "meta": {
            "d": result.config.d,
            "viewer_count": int(result.bits.shape[0]),
            "best_rmse": result.best_rmse,
            "best_iteration": result.best_iteration,
            "all_restarts": result.all_restarts,
            "config": result.config.to_dict(),
        },
    }
    write_container(path, "solve_result", items)


def load_solve_result(path) -> SolveResult:
    _, items = read_container(path, "solve_result")
    meta = items["meta"]
    bits = np.unpackbits(items["bits_packed"], axis=1, count=meta["d"])
    stats = [IterationStats(int(row[0]), float(row[1]), float(row[2]), bool(row[3]))
             for row in items["stats"]]
    return SolveResult(bits=bits.astype(np.uint8), weights=items["weights"],
                       movies=items["movies"], best_rmse=meta["best_rmse"],
                       best_iteration=meta["best_iteration"], stats=stats,
                       config=SolverConfig(**meta["config"]),
                       all_restarts=meta["all_restarts"])


def model_kind(path) -> str:
    """Peek at a file's kind ('model' or 'solve_result')."""
    kind, _ = read_container(path)
    return kind
