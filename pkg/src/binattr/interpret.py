"""Reading a trained model: weight histograms, extreme titles, bit rates.

Attribute indices carry no intrinsic meaning (solutions are equivalent
under permutation), so `match_attributes` aligns a learned model with a
reference by weight-vector correlation before any per-attribute comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import BarModel

DEFAULT_BINS = 40


@dataclass
class AttributeReport:
    attribute: int
    bin_edges: np.ndarray
    bin_counts: np.ndarray
    top: list
    bottom: list
    prevalence: float


def histogram(model: BarModel, attribute: int, bins: int = DEFAULT_BINS):
    """Equal-width histogram of one attribute's weights over [min, max].

    Returns (edges, counts).  Identical weights collapse to a single
    degenerate bin.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if not (0 <= attribute < model.d):
        raise ValueError(f"attribute {attribute} out of range for d={model.d}")
    col = model.weights[:, attribute]
    lo, hi = float(col.min()), float(col.max())
    if lo == hi:
        return np.array([lo, hi]), np.array([col.size])
    counts, edges = np.histogram(col, bins=bins, range=(lo, hi))
    return edges, counts


def rank_attribute(model: BarModel, attribute: int, k: int):
    """The k largest and k smallest weights with their movies.

    Returns (top, bottom): lists of (movie_index, title, weight), top sorted
    descending, bottom ascending, ties broken by movie index.  Lists are
    truncated when k exceeds the covered catalog.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not (0 <= attribute < model.d):
        raise ValueError(f"attribute {attribute} out of range for d={model.d}")
    col = model.weights[:, attribute]
    k = min(k, col.size)
    asc = np.argsort(col, kind="stable")     # ascending weight, index-stable ties
    desc = np.argsort(-col, kind="stable")

    def rows(slots):
        out = []
        for s in slots:
            m = int(model.weight_movies[s])
            out.append((m, model.title(m), float(col[s])))
        return out

    return rows(desc[:k]), rows(asc[:k])


def bit_prevalence(model: BarModel) -> np.ndarray:
    """Fraction of viewers with each attribute bit set."""
    if model.viewer_count < 1:
        raise ValueError("model has no viewers")
    return model.bits.astype(np.float64).mean(axis=0)


def attribute_report(model: BarModel, attribute: int, k: int = 10,
                     bins: int = DEFAULT_BINS) -> AttributeReport:
    edges, counts = histogram(model, attribute, bins)
    top, bottom = rank_attribute(model, attribute, k)
    prev = bit_prevalence(model)[attribute]
    return AttributeReport(attribute, edges, counts, top, bottom, float(prev))


def match_attributes(learned: np.ndarray, reference: np.ndarray):
    """Align attribute columns of two weight matrices by |correlation|.

    Both arguments are (movies, d) weight matrices over the same movies.
    Returns (perm, signs): learned column perm[j] corresponds to reference
    column j, with sign -1 when the correlation is negative (a learned
    attribute may be the complement of a reference one, flipping both the
    weight sign and the bit sense).
    """
    learned = np.asarray(learned, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if learned.shape != reference.shape:
        raise ValueError("weight matrices must have the same shape")
    d = learned.shape[1]
    lc = learned - learned.mean(axis=0)
    rc = reference - reference.mean(axis=0)
    ln = np.linalg.norm(lc, axis=0)
    rn = np.linalg.norm(rc, axis=0)
    corr = np.zeros((d, d))
    for j in range(d):
        for i in range(d):
            denom = rn[j] * ln[i]
            corr[j, i] = (rc[:, j] @ lc[:, i]) / denom if denom > 0 else 0.0
    ref_rows, learned_cols = linear_sum_assignment(-np.abs(corr))
    perm = np.zeros(d, dtype=np.int64)
    signs = np.zeros(d, dtype=np.int64)
    for j, i in zip(ref_rows, learned_cols):
        perm[j] = i
        signs[j] = 1 if corr[j, i] >= 0 else -1
    return perm, signs


# ------------------------------------------------------------- CSV outputs

def write_histograms_csv(model: BarModel, path, bins: int = DEFAULT_BINS) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("#schema=1\n")
        fh.write("attr,bin_lo,bin_hi,count\n")
        for a in range(model.d):
            edges, counts = histogram(model, a, bins)
            for i, n in enumerate(counts):
                fh.write(f"{a},{float(edges[i])!r},{float(edges[i + 1])!r},{int(n)}\n")


def write_ranking_csv(model: BarModel, attribute: int, k: int, path) -> None:
    top, bottom = rank_attribute(model, attribute, k)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("#schema=1\n")
        fh.write("attr,rank,movie_id,title,weight,end\n")
        for end, rows in (("top", top), ("bottom", bottom)):
            for rank, (m, title, weight) in enumerate(rows, start=1):
                mid = model.movie_ids[m] if model.movie_ids is not None else str(m)
                title = title.replace(",", ";")
                fh.write(f"{attribute},{rank},{mid},{title},{weight!r},{end}\n")


def write_prevalence_csv(model: BarModel, path) -> None:
    prev = bit_prevalence(model)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("#schema=1\n")
        fh.write("attr,prevalence\n")
        for a in range(model.d):
            fh.write(f"{a},{float(prev[a])!r}\n")
