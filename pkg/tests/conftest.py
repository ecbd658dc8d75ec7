import pytest

from src.core.random import make_rng
from src.diffusion.domain.schedule import build_schedule
from src.evaluation.domain.toy_datasets import pattern_distribution


@pytest.fixture
def rng():
    """A fresh seeded random stream."""
    return make_rng(1234)


@pytest.fixture
def short_schedule():
    """A short cosine schedule that keeps exact bound evaluation cheap."""
    return build_schedule(T=20)


@pytest.fixture
def pattern_dist():
    """The 2x2, K=4 toy with support 8."""
    return pattern_distribution()


@pytest.fixture
def clean_env(monkeypatch):
    """Remove VQDDM_* variables so configuration defaults apply."""
    for name in ("VQDDM_LOG_LEVEL", "VQDDM_T", "VQDDM_THREADS"):
        monkeypatch.delenv(name, raising=False)
    return monkeypatch
