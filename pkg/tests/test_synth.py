"""Planted-model generator."""

import numpy as np
import pytest

from binattr import SyntheticSpec, center, full_view, synthesize, write_csv


class TestSynthesize:
    def test_deterministic_given_seed(self, tmp_path):
        spec = SyntheticSpec(viewers=40, movies=15, d=3, density=0.4, seed=123)
        ds1, pl1 = synthesize(spec)
        ds2, pl2 = synthesize(spec)
        assert np.array_equal(ds1.stars, ds2.stars)
        assert np.array_equal(ds1.viewer_idx, ds2.viewer_idx)
        assert np.array_equal(pl1.bits, pl2.bits)
        assert np.array_equal(pl1.weights, pl2.weights)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(ds1, a)
        write_csv(ds2, b)
        assert a.read_bytes() == b.read_bytes()

    def test_zero_noise_flat_model_gives_base_means(self):
        # every weight times any bit contributes nothing when the scale is 0
        spec = SyntheticSpec(viewers=20, movies=8, d=1, density=0.8, weight_scale=0.0,
                             noise_sigma=0.0, quantize=False, seed=7)
        ds, planted = synthesize(spec)
        assert np.allclose(ds.stars, planted.movie_means[ds.movie_idx])
        cent = center(ds)
        assert np.max(np.abs(cent.residuals)) <= 1e-12

    def test_quantized_stars_are_whole(self):
        ds, _ = synthesize(SyntheticSpec(viewers=30, movies=10, d=2, density=0.5, seed=3))
        assert np.all(ds.stars == np.floor(ds.stars))
        assert ds.stars.min() >= 1 and ds.stars.max() <= 5

    def test_every_viewer_and_movie_rated(self):
        ds, _ = synthesize(SyntheticSpec(viewers=25, movies=12, d=2, density=0.2, seed=5))
        assert np.bincount(ds.viewer_idx, minlength=25).min() > 0
        assert np.bincount(ds.movie_idx, minlength=12).min() > 0

    def test_too_sparse_errors(self):
        # fewer pairs than movies: some movie must stay unrated
        spec = SyntheticSpec(viewers=4, movies=50, d=1, density=0.2, seed=0)
        with pytest.raises(ValueError, match="unrated"):
            synthesize(spec)

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError):
            SyntheticSpec(viewers=0, movies=5, d=1).validate()
        with pytest.raises(ValueError):
            SyntheticSpec(viewers=5, movies=5, d=1, density=1.5).validate()
        with pytest.raises(ValueError):
            SyntheticSpec(viewers=5, movies=5, d=1, bit_prob=0.0).validate()

    def test_acceptance_scale_residual_rms_exceeds_noise_sigma(self):
        # the planted signal must add variance beyond the 0.25-star noise
        spec = SyntheticSpec(viewers=300, movies=60, d=4, density=0.3,
                             noise_sigma=0.25, quantize=True, seed=0)
        ds, _ = synthesize(spec)
        rms = full_view(center(ds)).residual_rms()
        assert rms > 0.25

    def test_planted_model_predicts_unclamped_zero_noise_data(self):
        spec = SyntheticSpec(viewers=30, movies=10, d=2, density=0.6, weight_scale=0.2,
                             noise_sigma=0.0, quantize=False, seed=11)
        ds, planted = synthesize(spec)
        pred = (planted.movie_means[ds.movie_idx]
                + np.einsum("nd,nd->n", planted.bits[ds.viewer_idx].astype(float),
                            planted.weights[ds.movie_idx]))
        assert np.allclose(pred, ds.stars, atol=1e-12)
