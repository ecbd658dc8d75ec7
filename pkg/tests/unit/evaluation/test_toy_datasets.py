import numpy as np
import pytest

from src.core.exceptions import ValidationError
from src.core.random import make_rng
from src.evaluation.domain.toy_datasets import (
    clustered_images,
    collapsed_codebook,
    pattern_distribution,
    product_distribution,
    single_grid_distribution,
)


class TestPatternDistribution:
    """Tests for the enumerable toys."""

    def test_default_toy(self, pattern_dist):
        assert (pattern_dist.h, pattern_dist.w, pattern_dist.K) == (2, 2, 4)
        assert len(pattern_dist.probs) == 8
        assert pattern_dist.probs.sum() == pytest.approx(1.0)
        assert np.all(pattern_dist.support[:, 1, 1] == 2)

    def test_product_probabilities(self):
        dist = product_distribution(1, 2, 3, [((0, 1), (0.25, 0.75)), ((2,), (1.0,))])
        assert dist.as_dict()[np.array([[1, 2]], dtype="<i8").tobytes()] == pytest.approx(0.75)

    def test_random_sizes_need_rng(self):
        with pytest.raises(ValidationError):
            pattern_distribution(3, 3, 4)
        dist = pattern_distribution(3, 3, 5, make_rng(1))
        assert len(dist.probs) == 2 ** 9

    def test_large_grids_cap_support(self):
        assert len(pattern_distribution(4, 4, 3, make_rng(2)).probs) == 2 ** 12

    def test_rejects_wrong_marginal_count(self):
        with pytest.raises(ValidationError):
            product_distribution(2, 2, 3, [((0,), (1.0,))])

    def test_single_grid(self):
        dist = single_grid_distribution(np.array([[1, 0]]), 2)
        assert dist.probs.tolist() == [1.0]


class TestClusteredImages:
    def test_shapes_and_range(self, rng):
        data = clustered_images(3, 2, 4, 5, 16, rng)
        assert data.images.shape == (3, 1, 8, 16)
        assert data.centres.shape == (5, 16)
        assert data.images.min() >= 0.0 and data.images.max() <= 1.0

    def test_noise_free_patches_are_centres(self, rng):
        data = clustered_images(2, 2, 2, 3, 4, rng, noise=0.0)
        patch = data.images[0, 0, :2, 2:].ravel()
        assert np.any(np.all(data.centres == patch, axis=1))

    def test_rejects_non_square_d(self, rng):
        with pytest.raises(ValidationError):
            clustered_images(1, 1, 1, 1, 5, rng)

    def test_collapsed_codebook(self, rng):
        centres = rng.uniform(size=(10, 4))
        vectors = collapsed_codebook(centres, 8, 3, rng)
        assert vectors.shape == (8, 4)
        assert all(np.any(np.all(centres == v, axis=1)) for v in vectors[:3])
        assert np.all(vectors[3:] >= 10.0)
