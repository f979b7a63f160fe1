"""Planted-model dataset generator used as a recovery oracle in tests.

The generator draws a ground-truth bit/weight model, samples a sparse set
of (viewer, movie) pairs, and emits ratings base_mean + bits.weights plus
Gaussian noise, optionally quantized to whole stars.  Everything is a
deterministic function of the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .datasets import RatingsDataset
from .model import BarModel

_MAX_PAIR_ATTEMPTS = 64


@dataclass(frozen=True)
class SyntheticSpec:
    viewers: int
    movies: int
    d: int
    density: float = 0.3
    bit_prob: float = 0.5
    weight_scale: float = 1.0
    noise_sigma: float = 0.25
    quantize: bool = True
    seed: int = 0

    def validate(self):
        if min(self.viewers, self.movies, self.d) < 1:
            raise ValueError("viewers, movies, and d must all be >= 1")
        if not (0.0 < self.density <= 1.0):
            raise ValueError(f"density must be in (0, 1], got {self.density}")
        if not (0.0 < self.bit_prob <= 1.0):
            raise ValueError(f"bit_prob must be in (0, 1], got {self.bit_prob}")
        if self.noise_sigma < 0 or self.weight_scale < 0:
            raise ValueError("noise_sigma and weight_scale must be nonnegative")


def synthesize(spec: SyntheticSpec):
    """Generate (dataset, planted model) from the spec.

    Raises ValueError when the density is so low that some viewer or movie
    ends up unrated after repeated pair re-draws.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    V, M, d = spec.viewers, spec.movies, spec.d

    bits = (rng.random((V, d)) < spec.bit_prob).astype(np.uint8)
    weights = rng.uniform(-spec.weight_scale, spec.weight_scale, (M, d))
    base_means = rng.uniform(2.5, 4.0, M)

    n_pairs = math.ceil(spec.density * V * M)
    pair_ids = None
    for _ in range(_MAX_PAIR_ATTEMPTS):
        candidate = np.sort(rng.choice(V * M, size=n_pairs, replace=False))
        v_idx = candidate // M
        m_idx = candidate % M
        if (np.bincount(v_idx, minlength=V).min() > 0
                and np.bincount(m_idx, minlength=M).min() > 0):
            pair_ids = candidate
            break
    if pair_ids is None:
        raise ValueError(
            f"density {spec.density} leaves some viewer or movie unrated "
            f"after {_MAX_PAIR_ATTEMPTS} redraws")
    v_idx = pair_ids // M
    m_idx = pair_ids % M

    signal = np.einsum("nd,nd->n", bits[v_idx].astype(np.float64), weights[m_idx])
    raw = base_means[m_idx] + signal + rng.normal(0.0, spec.noise_sigma, n_pairs)
    if spec.quantize:
        stars = np.clip(np.floor(raw + 0.5), 1.0, 5.0)
    else:
        stars = np.clip(raw, 1.0, 5.0)

    viewer_ids = [f"v{i}" for i in range(V)]
    movie_ids = [f"m{j}" for j in range(M)]
    dataset = RatingsDataset(viewer_ids, movie_ids, v_idx, m_idx, stars)
    planted = BarModel(
        bits, weights, base_means, np.zeros(V),
        viewer_ids=viewer_ids, movie_ids=movie_ids,
        global_mean=float(stars.mean()),
        provenance={"kind": "planted", "spec": asdict(spec)})
    return dataset, planted
