"""
Unit tests for evaluation metrics.
"""

import csv

import numpy as np
import pytest

from src.core.exceptions import DomainError
from src.core.random import make_rng
from src.denoising.domain.denoiser_model import DenoiserConfig, DenoiserModel
from src.denoising.domain.oracle_denoiser import OracleDenoiser
from src.diffusion.domain.distribution import LatentDistribution
from src.diffusion.domain.grids import LatentGrid
from src.evaluation.application.evaluation_service import (
    MetricRecord,
    nll_bits,
    sampling_cost,
    tv_distance_empirical,
    usage_report,
    write_metrics_csv,
)
from src.quantization.domain.autoencoder import ToyAutoencoder
from src.quantization.domain.codebook import Codebook

# Entropy of the pattern toy in bits per position: (H(0.7) + H(0.6) + H(0.5)) / 4.
PATTERN_ENTROPY = 0.71307


@pytest.fixture
def two_grids():
    return LatentDistribution(np.array([[[0, 1]], [[1, 1]]]), np.array([0.5, 0.5]), 2)


class TestTvDistance:
    """Tests for tv_distance_empirical."""

    def test_exact_histogram(self, two_grids):
        samples = LatentGrid(np.array([[[0, 1]], [[1, 1]]]), 2)
        assert tv_distance_empirical(samples, two_grids) == 0.0

    def test_one_sided_histogram(self, two_grids):
        samples = LatentGrid(np.array([[[0, 1]]] * 4), 2)
        assert tv_distance_empirical(samples, two_grids) == pytest.approx(0.5)

    def test_outside_support_counts_fully(self, two_grids):
        samples = LatentGrid(np.array([[[0, 0]]]), 2)
        assert tv_distance_empirical(samples, two_grids) == pytest.approx(1.0)

    def test_rejects_no_samples(self, two_grids):
        with pytest.raises(DomainError):
            tv_distance_empirical(LatentGrid(np.zeros((0, 1, 2), dtype=int), 2), two_grids)


class TestNllBits:
    """Tests for the exact-mode bound in bits per position."""

    def test_oracle_close_to_entropy(self, pattern_dist, short_schedule):
        data = pattern_dist.sample(400, make_rng(3))
        bits = nll_bits(data, OracleDenoiser(pattern_dist, short_schedule), short_schedule, make_rng(4))
        assert abs(bits - PATTERN_ENTROPY) < 0.1

    def test_oracle_beats_untrained_model(self, pattern_dist, short_schedule):
        data = pattern_dist.sample(20, make_rng(5))
        oracle = nll_bits(data, OracleDenoiser(pattern_dist, short_schedule), short_schedule, make_rng(6), passes=2)
        zero = DenoiserModel.zeros(4, 2, 2, DenoiserConfig(embed_dim=2, time_dim=4, hidden=(4, 4)))
        assert oracle < nll_bits(data, zero, short_schedule, make_rng(6), passes=2)

    def test_rejects_zero_passes(self, pattern_dist, short_schedule, rng):
        with pytest.raises(DomainError):
            nll_bits(pattern_dist.sample(1, rng), OracleDenoiser(pattern_dist, short_schedule), short_schedule, rng, 0)


class TestUsageReport:
    def test_counts_codes_without_touching_codebook(self):
        images = np.array([[[[0.0, 0.0], [1.0, 0.2]]]])
        cb = Codebook(np.array([[0.0], [1.0], [5.0]]))
        used, hist = usage_report(images, ToyAutoencoder.identity(patch=1), cb)
        assert used == pytest.approx(2 / 3)
        assert hist.tolist() == [3, 1, 0]
        assert cb.hit_counts.sum() == 0


class TestSamplingCost:
    def test_one_entry_per_chain_length(self):
        model = DenoiserModel.zeros(3, 2, 2, DenoiserConfig(embed_dim=2, time_dim=4, hidden=(4, 4)))
        costs = sampling_cost(model, [2, 5], (2, 2, 3), seed=0, count=4)
        assert [c.T for c in costs] == [2, 5]
        assert all(c.seconds_per_sample > 0 for c in costs)


class TestMetricsCsv:
    def test_header_and_rows(self, tmp_path):
        path = tmp_path / "out" / "metrics.csv"
        write_metrics_csv(str(path), [MetricRecord("nll_bits", 0.75, 3, "abc123", 1.5)])
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["metric", "value", "seed", "config_hash", "wall_seconds"]
        assert rows[1] == ["nll_bits", "0.75", "3", "abc123", "1.5"]

    def test_missing_timing_is_empty(self, tmp_path):
        path = tmp_path / "metrics.csv"
        write_metrics_csv(str(path), [MetricRecord("tv", 0.01, 1, "abc123")])
        assert path.read_text().splitlines()[1] == "tv,0.01,1,abc123,"
