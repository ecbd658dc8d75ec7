import numpy as np
import pytest

from src.core import exceptions
from src.core.random import make_rng, spawn_streams


class TestExitCodes:
    """Every failure class maps to a documented exit code."""

    @pytest.mark.parametrize("error,code", [
        (exceptions.ApplicationError("x"), 1),
        (exceptions.ResourceNotFoundError("x"), 3),
        (exceptions.ValidationError("x"), 4),
        (exceptions.DomainError("x"), 4),
        (exceptions.ConfigurationError("x"), 5),
        (exceptions.BadMagicError("x"), 6),
        (exceptions.DatasetFormatError("x"), 6),
        (exceptions.ChecksumError("table", 1, 2), 6),
        (exceptions.TrainingDivergenceError(3, float("nan"), "vq training"), 7),
        (exceptions.NonFiniteError("hidden1"), 7),
    ])
    def test_exit_code(self, error, code):
        assert error.exit_code == code
        assert isinstance(error, exceptions.ApplicationError)

    def test_messages(self):
        assert str(exceptions.ChecksumError("codebook", 0xAB, 0x1)) == (
            "checksum mismatch in section 'codebook' (expected 000000ab, got 00000001)"
        )
        assert "step 3" in str(exceptions.TrainingDivergenceError(3, 1e9, "denoiser training"))
        assert exceptions.NonFiniteError("logits").layer == "logits"


class TestRandomStreams:
    def test_same_seed_same_stream(self):
        assert np.array_equal(make_rng(3).random(5), make_rng(3).random(5))

    def test_rejects_negative_seed(self):
        with pytest.raises(ValueError):
            make_rng(-1)

    def test_spawned_streams_differ(self):
        a, b = spawn_streams(0, 2)
        assert not np.array_equal(a.random(4), b.random(4))
        c, _ = spawn_streams(0, 2)
        assert np.array_equal(spawn_streams(0, 2)[0].random(4), c.random(4))
