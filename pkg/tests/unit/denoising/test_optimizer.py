import numpy as np
import pytest
import torch

from src.core.exceptions import ValidationError
from src.denoising.domain.optimizer import AdamState, adam_step


class TestAdamStep:
    """Tests for the flat-vector Adam update."""

    def test_zero_gradient_leaves_params(self, rng):
        params = rng.normal(size=6)
        new, state = adam_step(params.copy(), np.zeros(6), AdamState.zeros(6, lr=0.1))
        np.testing.assert_array_equal(new, params)
        assert state.step == 1

    def test_first_step_is_signed_lr(self):
        grads = np.array([3.0, -0.5, 1e-3])
        new, _ = adam_step(np.zeros(3), grads, AdamState.zeros(3, lr=0.01))
        np.testing.assert_allclose(new, -0.01 * np.sign(grads), rtol=1e-4)

    def test_gradient_scale_invariance(self, rng):
        grads = [rng.normal(size=4) for _ in range(5)]
        a, sa = np.zeros(4), AdamState.zeros(4, lr=0.01)
        b, sb = np.zeros(4), AdamState.zeros(4, lr=0.01)
        for g in grads:
            a, sa = adam_step(a, g, sa)
            b, sb = adam_step(b, 1000.0 * g, sb)
        np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-8)

    def test_matches_torch_adam(self, rng):
        grads = [rng.normal(size=5) for _ in range(10)]
        params = rng.normal(size=5)
        reference = torch.tensor(params.copy(), requires_grad=True)
        optimizer = torch.optim.Adam([reference], lr=1e-3, betas=(0.9, 0.999), eps=1e-8)

        state = AdamState.zeros(5, lr=1e-3)
        for g in grads:
            params, state = adam_step(params, g, state)
            reference.grad = torch.from_numpy(g)
            optimizer.step()
        np.testing.assert_allclose(params, reference.detach().numpy(), rtol=1e-10, atol=1e-12)

    def test_skips_non_finite_gradients(self, rng):
        params = rng.normal(size=3)
        state = AdamState.zeros(3)
        new, state = adam_step(params, np.array([1.0, np.nan, 0.0]), state)
        assert new is params
        assert (state.step, state.skipped_steps) == (0, 1)
        assert np.all(state.m == 0)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValidationError):
            adam_step(np.zeros(3), np.zeros(4), AdamState.zeros(3))

    def test_array_round_trip(self, rng):
        state = AdamState.zeros(4, lr=0.5, beta1=0.8)
        adam_step(np.zeros(4), rng.normal(size=4), state)
        restored = AdamState.from_arrays(state.to_arrays())
        assert (restored.step, restored.lr, restored.beta1) == (1, 0.5, 0.8)
        np.testing.assert_array_equal(restored.v, state.v)
