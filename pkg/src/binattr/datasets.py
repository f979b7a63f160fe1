"""Sparse viewer-by-movie ratings: loading, validation, CSV round trips.

A dataset is a list of (viewer, movie, stars) triples plus dense id maps.
Entries may carry a partition tag separating training rows from held-out
"probe" rows; all statistics downstream are computed on the train rows.
"""

from __future__ import annotations

import datetime
from pathlib import Path

import numpy as np

TRAIN = 0
PROBE = 1

_PARTITION_CODES = {"": TRAIN, "train": TRAIN, "probe": PROBE}
_PARTITION_NAMES = {TRAIN: "train", PROBE: "probe"}

CSV_HEADER = "viewer_id,movie_id,rating"

# files living alongside the per-movie ratings files in a Netflix-style
# directory that must not be parsed as ratings
_NETFLIX_AUX_NAMES = {"movie_titles.txt", "movie_titles.csv", "probe.txt", "qualifying.txt", "README"}


class DataFormatError(ValueError):
    """An input file violates the ratings format (message carries file/line)."""


class _IdMap:
    """Dense index assignment by first appearance."""

    def __init__(self):
        self.index = {}
        self.ids = []

    def get(self, external_id: str) -> int:
        idx = self.index.get(external_id)
        if idx is None:
            idx = len(self.ids)
            self.index[external_id] = idx
            self.ids.append(external_id)
        return idx

    def __len__(self):
        return len(self.ids)


class RatingsDataset:
    """Immutable sparse ratings matrix with dense viewer/movie indices.

    Parameters
    ----------
    viewer_ids, movie_ids : sequences of external id strings; position is
        the dense index.
    viewer_idx, movie_idx : int arrays, one entry per rating.
    stars : float array; loaders enforce integers 1..5, synthetic data may
        carry non-integer values inside [1, 5] when generated unquantized.
    partition : optional int array of TRAIN/PROBE codes (default all TRAIN).
    titles : optional list of title strings per movie.
    """

    def __init__(self, viewer_ids, movie_ids, viewer_idx, movie_idx, stars,
                 partition=None, titles=None):
        self.viewer_ids = list(viewer_ids)
        self.movie_ids = list(movie_ids)
        self.viewer_idx = np.asarray(viewer_idx, dtype=np.int64)
        self.movie_idx = np.asarray(movie_idx, dtype=np.int64)
        self.stars = np.asarray(stars, dtype=np.float64)
        n = self.stars.size
        if partition is None:
            partition = np.zeros(n, dtype=np.int8)
        self.partition = np.asarray(partition, dtype=np.int8)
        self.titles = list(titles) if titles is not None else None
        self._validate()

    def _validate(self):
        n = self.stars.size
        if not (self.viewer_idx.size == self.movie_idx.size == self.partition.size == n):
            raise ValueError("entry arrays must have equal length")
        if self.titles is not None and len(self.titles) != len(self.movie_ids):
            raise ValueError("titles must align with movie_ids")
        if n == 0:
            return
        if self.viewer_idx.min() < 0 or self.viewer_idx.max() >= len(self.viewer_ids):
            raise ValueError("viewer index out of range")
        if self.movie_idx.min() < 0 or self.movie_idx.max() >= len(self.movie_ids):
            raise ValueError("movie index out of range")
        if np.any(self.stars < 1.0) or np.any(self.stars > 5.0):
            raise ValueError("stars outside [1, 5]")
        # one rating per (viewer, movie) pair within each partition
        key = (self.viewer_idx * len(self.movie_ids) + self.movie_idx) * 2 + self.partition
        if np.unique(key).size != n:
            raise ValueError("duplicate (viewer, movie) pair within a partition")

    @property
    def viewer_count(self) -> int:
        return len(self.viewer_ids)

    @property
    def movie_count(self) -> int:
        return len(self.movie_ids)

    @property
    def n_entries(self) -> int:
        return self.stars.size

    def partition_mask(self, partition: str) -> np.ndarray:
        if partition not in ("train", "probe"):
            raise ValueError(f"unknown partition {partition!r}")
        return self.partition == _PARTITION_CODES[partition]

    def title(self, movie_index: int) -> str:
        if self.titles is not None and self.titles[movie_index]:
            return self.titles[movie_index]
        return self.movie_ids[movie_index]

    def __repr__(self):
        return (f"RatingsDataset({self.viewer_count} viewers, {self.movie_count} movies, "
                f"{self.n_entries} entries)")


def _parse_rating(text: str, where: str, integer_only: bool) -> float:
    try:
        value = int(text) if integer_only else float(text)
    except ValueError:
        raise DataFormatError(f"{where}: unreadable rating {text!r}") from None
    if not (1 <= value <= 5):
        raise DataFormatError(f"{where}: rating {text} outside 1-5")
    return float(value)


def _parse_date(text: str, where: str):
    try:
        datetime.date.fromisoformat(text)
    except ValueError:
        raise DataFormatError(f"{where}: bad date {text!r}") from None
    # dates are validated then dropped; the representation never uses them


def load_netflix(directory, probe_path=None) -> RatingsDataset:
    """Load a directory of per-movie rating files.

    Each file starts with a ``<movieId>:`` header line followed by
    ``<customerId>,<rating>,<YYYY-MM-DD>`` lines.  A ``movie_titles.txt``
    file in the directory or its parent supplies titles when present.
    `probe_path` optionally names a file of ``<movieId>:`` headers followed
    by customer ids; matching entries are tagged as the probe partition.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataFormatError(f"{directory}: not a directory")
    viewers = _IdMap()
    movies = _IdMap()
    v_idx, m_idx, stars = [], [], []
    seen_movie_headers = set()
    for path in sorted(p for p in directory.iterdir() if p.is_file()):
        if path.name in _NETFLIX_AUX_NAMES:
            continue
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\r\n")
            if not header.endswith(":") or not header[:-1]:
                raise DataFormatError(f"{path}:1: malformed movie header {header!r}")
            movie_id = header[:-1]
            if movie_id in seen_movie_headers:
                raise DataFormatError(f"{path}:1: movie {movie_id!r} already loaded")
            seen_movie_headers.add(movie_id)
            mi = movies.get(movie_id)
            seen_customers = set()
            for lineno, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != 3:
                    raise DataFormatError(f"{path}:{lineno}: expected customer,rating,date")
                customer, rating_text, date_text = parts
                where = f"{path}:{lineno}"
                if not customer:
                    raise DataFormatError(f"{where}: empty customer id")
                if customer in seen_customers:
                    raise DataFormatError(
                        f"{where}: duplicate rating of movie {movie_id!r} by customer {customer!r}")
                seen_customers.add(customer)
                rating = _parse_rating(rating_text, where, integer_only=True)
                _parse_date(date_text, where)
                v_idx.append(viewers.get(customer))
                m_idx.append(mi)
                stars.append(rating)
    titles = _load_titles(directory, movies)
    partition = None
    if probe_path is not None:
        partition = _apply_probe(Path(probe_path), viewers, movies, v_idx, m_idx)
    return RatingsDataset(viewers.ids, movies.ids, v_idx, m_idx, stars,
                          partition=partition, titles=titles)


def _load_titles(directory: Path, movies: _IdMap):
    for candidate in (directory / "movie_titles.txt", directory / "movie_titles.csv",
                      directory.parent / "movie_titles.txt", directory.parent / "movie_titles.csv"):
        if candidate.is_file():
            titles = [""] * len(movies)
            with open(candidate, encoding="utf-8", errors="replace") as fh:
                for line in fh:
                    parts = line.rstrip("\r\n").split(",", 2)
                    if len(parts) < 3:
                        continue
                    movie_id, _year, title = parts
                    idx = movies.index.get(movie_id)
                    if idx is not None:
                        titles[idx] = title
            return titles
    return None


def _apply_probe(probe_path: Path, viewers: _IdMap, movies: _IdMap, v_idx, m_idx):
    """Tag entries listed in a Netflix-style probe file."""
    entry_of = {}
    for i, (v, m) in enumerate(zip(v_idx, m_idx)):
        entry_of[(v, m)] = i
    partition = np.zeros(len(v_idx), dtype=np.int8)
    current_movie = None
    with open(probe_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.endswith(":"):
                movie_id = line[:-1]
                if movie_id not in movies.index:
                    raise DataFormatError(f"{probe_path}:{lineno}: unknown movie {movie_id!r}")
                current_movie = movies.index[movie_id]
                continue
            if current_movie is None:
                raise DataFormatError(f"{probe_path}:{lineno}: customer line before any movie header")
            vi = viewers.index.get(line)
            if vi is None or (vi, current_movie) not in entry_of:
                raise DataFormatError(
                    f"{probe_path}:{lineno}: probe pair ({line!r}, movie) not in the loaded ratings")
            partition[entry_of[(vi, current_movie)]] = PROBE
    return partition


def load_csv(path) -> RatingsDataset:
    """Load the generic ``viewer_id,movie_id,rating[,partition]`` format.

    UTF-8, LF or CRLF, header mandatory.  Lines starting with ``#`` are
    skipped, except registration comments ``#viewer=<id>`` and
    ``#movie=<id>[,<title>]`` which pre-assign dense indices (this is how
    `write_csv` preserves index maps across a round trip).
    """
    path = Path(path)
    viewers = _IdMap()
    movies = _IdMap()
    titles = {}
    v_idx, m_idx, stars, partition = [], [], [], []
    seen = set()
    header_seen = False
    has_partition_col = False
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("#viewer="):
                    viewers.get(line[len("#viewer="):])
                elif line.startswith("#movie="):
                    body = line[len("#movie="):]
                    movie_id, _, title = body.partition(",")
                    mi = movies.get(movie_id)
                    if title:
                        titles[mi] = title
                continue
            if not header_seen:
                if line == CSV_HEADER:
                    has_partition_col = False
                elif line == CSV_HEADER + ",partition":
                    has_partition_col = True
                else:
                    raise DataFormatError(
                        f"{path}:{lineno}: header must be '{CSV_HEADER}[,partition]', got {line!r}")
                header_seen = True
                continue
            parts = line.split(",")
            expected = 4 if has_partition_col else 3
            if len(parts) != expected:
                raise DataFormatError(f"{path}:{lineno}: expected {expected} fields")
            where = f"{path}:{lineno}"
            viewer_id, movie_id, rating_text = parts[0], parts[1], parts[2]
            if not viewer_id or not movie_id:
                raise DataFormatError(f"{where}: empty id field")
            part_text = parts[3] if has_partition_col else ""
            if part_text not in _PARTITION_CODES:
                raise DataFormatError(f"{where}: partition must be train or probe, got {part_text!r}")
            part = _PARTITION_CODES[part_text]
            rating = _parse_rating(rating_text, where, integer_only=False)
            vi = viewers.get(viewer_id)
            mi = movies.get(movie_id)
            if (vi, mi, part) in seen:
                raise DataFormatError(
                    f"{where}: duplicate pair ({viewer_id!r}, {movie_id!r}) in partition "
                    f"'{_PARTITION_NAMES[part]}'")
            seen.add((vi, mi, part))
            v_idx.append(vi)
            m_idx.append(mi)
            stars.append(rating)
            partition.append(part)
    if not header_seen:
        raise DataFormatError(f"{path}: missing header line")
    title_list = None
    if titles:
        title_list = [titles.get(i, "") for i in range(len(movies))]
    return RatingsDataset(viewers.ids, movies.ids, v_idx, m_idx, stars,
                          partition=partition, titles=title_list)


def _format_stars(value: float) -> str:
    if value == int(value):
        return str(int(value))
    return repr(value)


def write_csv(dataset: RatingsDataset, path) -> None:
    """Write a dataset in the generic CSV format.

    Registration comments pin the id maps so that ``load_csv(write_csv(ds))``
    reproduces indices exactly, entry order included.
    """
    has_probe = bool(np.any(dataset.partition == PROBE))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("#schema=1\n")
        for vid in dataset.viewer_ids:
            fh.write(f"#viewer={vid}\n")
        for i, mid in enumerate(dataset.movie_ids):
            if dataset.titles is not None and dataset.titles[i]:
                fh.write(f"#movie={mid},{dataset.titles[i]}\n")
            else:
                fh.write(f"#movie={mid}\n")
        fh.write(CSV_HEADER + (",partition\n" if has_probe else "\n"))
        for v, m, s, p in zip(dataset.viewer_idx, dataset.movie_idx,
                              dataset.stars, dataset.partition):
            row = f"{dataset.viewer_ids[v]},{dataset.movie_ids[m]},{_format_stars(s)}"
            if has_probe:
                row += f",{_PARTITION_NAMES[int(p)]}"
            fh.write(row + "\n")
