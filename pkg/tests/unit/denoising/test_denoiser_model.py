"""
Unit tests for the reference denoising network and its training loss.
"""

import math

import numpy as np
import pytest
import torch

from src.core.exceptions import NonFiniteError, ValidationError
from src.denoising.domain.denoiser_model import DenoiserConfig, DenoiserModel, time_embedding
from src.denoising.domain.losses import vlb_term_torch
from src.diffusion.domain.grids import LatentGrid, ProbGrid, one_hot, uniform_grid
from src.diffusion.domain.transitions import kl_step, sample_q

SMALL = DenoiserConfig(embed_dim=3, time_dim=4, hidden=(5, 5))


@pytest.fixture
def model(rng):
    return DenoiserModel.init(3, 2, 2, SMALL, rng)


class TestTimeEmbedding:
    def test_zero_time(self):
        emb = time_embedding(np.array([0]), 6, 10000.0).numpy()
        np.testing.assert_array_equal(emb[0], [0, 0, 0, 1, 1, 1])

    def test_odd_dim_pads(self):
        assert time_embedding(np.array([1, 2]), 5, 100.0).shape == (2, 5)


class TestDenoiserModel:
    """Tests for forward predictions."""

    def test_zero_params_favour_current_code(self, rng):
        z_t = uniform_grid((2, 2), 3, rng)
        p = DenoiserModel.zeros(3, 2, 2, SMALL).predict_z0(z_t, 5).p
        for i in range(2):
            for j in range(2):
                k = z_t.idx[i, j]
                others = np.delete(p[i, j], k)
                np.testing.assert_allclose(p[i, j, k] / others, math.e, rtol=1e-12)

    def test_predictions_are_normalized(self, model, rng):
        z_t = uniform_grid((7, 2, 2), 3, rng)
        pred = model.predict_z0(z_t, rng.integers(1, 20, size=7))
        assert pred.p.shape == (7, 2, 2, 3)
        assert pred.is_normalized(1e-12)

    def test_logits_alias(self, model, rng):
        z_t = uniform_grid((2, 2), 3, rng)
        np.testing.assert_array_equal(model.predict_z0_logits(z_t, 3).p, model.predict_z0(z_t, 3).p)

    def test_rejects_grid_mismatch(self, model, rng):
        with pytest.raises(ValidationError):
            model.predict_z0(uniform_grid((3, 2), 3, rng), 1)
        with pytest.raises(ValidationError):
            model.predict_z0(uniform_grid((2, 2), 4, rng), 1)

    def test_overflow_raises_non_finite(self, rng):
        huge = DenoiserModel(3, 2, 2, SMALL, np.full(DenoiserModel.zeros(3, 2, 2, SMALL).params.size, 1e200))
        with pytest.raises(NonFiniteError) as exc:
            huge.predict_z0(uniform_grid((2, 2), 3, rng), 2)
        assert exc.value.exit_code == 7

    def test_rejects_infinite_params(self):
        params = np.zeros(DenoiserModel.zeros(3, 2, 2, SMALL).params.size)
        params[0] = np.inf
        with pytest.raises(ValidationError):
            DenoiserModel(3, 2, 2, SMALL, params)

    def test_array_round_trip(self, model, rng):
        restored = DenoiserModel.from_arrays(model.to_arrays())
        assert restored.config == model.config
        z_t = uniform_grid((2, 2), 3, rng)
        np.testing.assert_array_equal(restored.predict_z0(z_t, 4).p, model.predict_z0(z_t, 4).p)


class TestDenoiserGradient:
    """Autograd gradients against central finite differences."""

    def test_directional_derivative(self, model, rng, short_schedule):
        z0 = uniform_grid((6, 2, 2), 3, rng)
        t = rng.integers(1, short_schedule.T + 1, size=6)
        z_t = sample_q(z0, t, short_schedule, rng)
        weights = rng.uniform(0.5, 2.0, size=6)

        _, grad, _ = model.loss_and_grad(z0, z_t, t, weights, short_schedule)
        h = 1e-5
        for _ in range(5):
            v = rng.normal(size=model.params.size)
            plus = model.loss_at(model.params + h * v, z0, z_t, t, weights, short_schedule)
            minus = model.loss_at(model.params - h * v, z0, z_t, t, weights, short_schedule)
            numeric = (plus - minus) / (2 * h)
            analytic = float(grad @ v)
            assert abs(numeric - analytic) <= 1e-4 * max(abs(numeric), 1e-8)

    def test_gradcheck(self, model, rng, short_schedule):
        z0 = uniform_grid((2, 2, 2), 3, rng)
        t = np.array([1, 7])
        z_t = sample_q(z0, t, short_schedule, rng)
        flat = torch.tensor(model.params, requires_grad=True)
        assert torch.autograd.gradcheck(
            lambda p: model.loss(p, z0, z_t, t, np.ones(2), short_schedule)[0], (flat,), eps=1e-6, atol=1e-6
        )

    def test_loss_value_matches_loss_at(self, model, rng, short_schedule):
        z0 = uniform_grid((3, 2, 2), 3, rng)
        t = np.array([1, 4, 20])
        z_t = sample_q(z0, t, short_schedule, rng)
        value, _, per_sample = model.loss_and_grad(z0, z_t, t, np.ones(3), short_schedule)
        assert value == pytest.approx(model.loss_at(model.params, z0, z_t, t, np.ones(3), short_schedule), rel=1e-12)
        assert value == pytest.approx(per_sample.mean() / 4, rel=1e-12)


class TestVlbTermTorch:
    """Tests for the differentiable per-grid bound term."""

    def test_perfect_prediction_costs_nothing(self, rng, short_schedule):
        z0 = rng.integers(0, 4, size=(3, 2, 3))
        t = np.array([1, 2, 11])
        z_t = sample_q(LatentGrid(z0, 4), t, short_schedule, rng).idx
        terms = vlb_term_torch(z0, z_t, t, torch.from_numpy(one_hot(z0, 4)), short_schedule)
        np.testing.assert_allclose(terms.numpy(), 0.0, atol=1e-12)

    def test_first_step_is_negative_log_likelihood(self, rng, short_schedule):
        z0 = rng.integers(0, 3, size=(1, 2, 2))
        z0_hat = rng.dirichlet(np.ones(3), size=(1, 2, 2))
        term = vlb_term_torch(z0, z0, np.array([1]), torch.from_numpy(z0_hat), short_schedule)
        expected = -np.log(np.take_along_axis(z0_hat, z0[..., None], -1)).sum()
        assert float(term[0]) == pytest.approx(expected, rel=1e-12)

    def test_later_steps_match_numpy_kl(self, rng, short_schedule):
        for t in (2, 9, 20):
            z0 = LatentGrid(rng.integers(0, 5, size=(2, 3)), 5)
            z_t = sample_q(z0, t, short_schedule, rng)
            z0_hat = rng.dirichlet(np.ones(5), size=(2, 3))
            term = vlb_term_torch(z0.idx[None], z_t.idx[None], np.array([t]), torch.from_numpy(z0_hat[None]),
                                  short_schedule)
            assert float(term[0]) == pytest.approx(kl_step(z_t, z0, ProbGrid(z0_hat), t, short_schedule), rel=1e-10)
