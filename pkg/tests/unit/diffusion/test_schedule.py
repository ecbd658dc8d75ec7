"""
Unit tests for the cosine noise schedule.
"""

import numpy as np
import pytest
from pydantic import ValidationError as PydanticValidationError

from src.core.exceptions import DomainError
from src.diffusion.domain.schedule import ScheduleConfig, build_schedule, cosine_alpha_bar


class TestCosineAlphaBar:
    """Tests for the raw cosine curve."""

    def test_starts_at_one(self):
        """Test that alpha_bar(0) is exactly one."""
        assert cosine_alpha_bar(0, 4000) == 1.0

    def test_decreasing(self):
        """Test that the curve decreases in t."""
        values = [cosine_alpha_bar(t, 50) for t in range(51)]
        assert all(a > b for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("t,T,s", [(-1, 10, 0.008), (11, 10, 0.008), (0, 0, 0.008), (1, 10, 0.0)])
    def test_rejects_out_of_domain(self, t, T, s):
        """Test that invalid t, T or s raise DomainError."""
        with pytest.raises(DomainError):
            cosine_alpha_bar(t, T, s)


class TestBuildSchedule:
    """Tests for build_schedule."""

    @pytest.fixture
    def full_schedule(self):
        return build_schedule(T=4000, s=0.008)

    def test_endpoints(self, full_schedule):
        """Test alpha_bar_0 = 1 exactly and alpha_bar_T nearly zero but positive."""
        assert full_schedule.alpha_bar[0] == 1.0
        assert 0.0 < full_schedule.alpha_bar[full_schedule.T] < 1e-3

    def test_betas_in_range(self, full_schedule):
        """Test that every beta lies in (0, beta_cap]."""
        beta = full_schedule.beta[1:]
        assert np.all(beta > 0.0)
        assert np.all(beta <= 0.999)

    def test_product_identity(self, full_schedule):
        """Test that alpha_bar is the running product of alpha."""
        np.testing.assert_allclose(np.cumprod(full_schedule.alpha[1:]), full_schedule.alpha_bar[1:], rtol=1e-12, atol=0)

    def test_beta_nondecreasing_before_clipping(self, full_schedule):
        """Test monotone betas on the unclipped range."""
        beta = full_schedule.beta[1:]
        unclipped = beta[beta < full_schedule.beta_cap]
        assert np.all(np.diff(unclipped) >= -1e-12)

    def test_matches_cosine_curve_where_unclipped(self):
        """Test that only the clipped tail departs from the raw curve."""
        sched = build_schedule(T=100)
        raw = np.array([cosine_alpha_bar(t, 100) for t in range(100)])
        np.testing.assert_allclose(sched.alpha_bar[:100], raw, rtol=1e-10)
        assert sched.beta[100] == sched.beta_cap

    def test_single_step(self):
        """Test the T = 1 edge case."""
        sched = build_schedule(T=1)
        assert sched.alpha_bar.shape == (2,)
        assert sched.beta[1] == pytest.approx(sched.beta_cap)

    def test_arrays_are_read_only(self, short_schedule):
        """Test that the shared schedule cannot be mutated."""
        with pytest.raises(ValueError):
            short_schedule.alpha_bar[1] = 0.5

    def test_alpha_bar_at_vectorised(self, short_schedule):
        """Test lookup for an array of timesteps."""
        t = np.array([0, 3, 20])
        np.testing.assert_array_equal(short_schedule.alpha_bar_at(t), short_schedule.alpha_bar[t])

    @pytest.mark.parametrize("kwargs", [{"T": 0}, {"beta_cap": 1.0}, {"beta_cap": 0.0}, {"s": -0.1}])
    def test_rejects_bad_parameters(self, kwargs):
        """Test that invalid parameters raise DomainError."""
        with pytest.raises(DomainError):
            build_schedule(**kwargs)


class TestScheduleConfig:
    """Tests for the schedule config section model."""

    def test_defaults(self):
        """Test the documented defaults."""
        cfg = ScheduleConfig()
        assert (cfg.T, cfg.s, cfg.beta_cap) == (4000, 0.008, 0.999)

    def test_rejects_cap_of_one(self):
        """Test that beta_cap must stay below one."""
        with pytest.raises(PydanticValidationError):
            ScheduleConfig(beta_cap=1.0)
