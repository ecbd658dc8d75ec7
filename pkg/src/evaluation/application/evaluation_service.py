"""
Quantitative evaluation: bound in bits per position, codebook usage,
distribution distances on enumerable toys and sampling cost.
"""

import csv
import logging
import math
import time
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.core.exceptions import DomainError
from src.core.random import make_rng
from src.diffusion.domain.distribution import LatentDistribution, grid_key
from src.diffusion.domain.grids import LatentGrid
from src.diffusion.domain.interfaces.denoiser_interface import Denoiser
from src.diffusion.domain.schedule import Schedule, build_schedule
from src.diffusion.domain.vlb import VlbMode, vlb
from src.generation.application.sampling_service import sample
from src.quantization.domain.autoencoder import ToyAutoencoder
from src.quantization.domain.codebook import Codebook, usage

logger = logging.getLogger(__name__)


@dataclass
class MetricRecord:
    metric: str
    value: float
    seed: int
    config_hash: str
    wall_seconds: Optional[float] = None


def write_metrics_csv(path: str, records: Iterable[MetricRecord]) -> None:
    """Write records with the header metric,value,seed,config_hash,wall_seconds.

    wall_seconds is left empty for records without a timing.
    """
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([field.name for field in fields(MetricRecord)])
        for record in records:
            writer.writerow(astuple(record))


def nll_bits(dataset: LatentGrid, model: Denoiser, sched: Schedule, rng: np.random.Generator, passes: int = 1) -> float:
    """Exact-mode bound averaged over grids and passes, in bits per position."""
    if passes < 1:
        raise DomainError(f"passes must be >= 1, got {passes}")
    grids = dataset.idx.reshape(-1, dataset.h, dataset.w)
    totals = []
    for _ in range(passes):
        for grid in grids:
            terms = vlb(LatentGrid(grid, dataset.K), model, sched, rng, VlbMode.EXACT)
            totals.append(terms.total_bits_per_pos)
    return math.fsum(totals) / len(totals)


def tv_distance_empirical(samples: LatentGrid, true_dist: LatentDistribution) -> float:
    """Half the L1 distance between the sample histogram and ``true_dist``.

    Samples outside the support count in full towards the distance.
    """
    grids = samples.idx.reshape(-1, samples.h, samples.w)
    if grids.shape[0] == 0:
        raise DomainError("need at least one sample")
    rows, counts = np.unique(grids.reshape(grids.shape[0], -1), axis=0, return_counts=True)
    empirical = {grid_key(row.reshape(samples.h, samples.w)): c / grids.shape[0] for row, c in zip(rows, counts)}
    truth = true_dist.as_dict()

    in_support = math.fsum(abs(empirical.get(key, 0.0) - p) for key, p in truth.items())
    outside = math.fsum(p for key, p in empirical.items() if key not in truth)
    return 0.5 * (in_support + outside)


def usage_report(dataset: np.ndarray, ae: ToyAutoencoder, cb: Codebook) -> Tuple[float, np.ndarray]:
    """Encode and quantize the images; returns (usage, per-code histogram)."""
    counter = cb.copy()
    counter.reset_hits()
    grid, _ = counter.quantize(ae.encode_numpy(dataset))
    return usage([grid], cb.K), counter.hit_counts


@dataclass
class SamplingCost:
    T: int
    seconds_per_sample: float


def sampling_cost(
    model: Denoiser,
    T_values: Sequence[int],
    shape: Tuple[int, int, int],
    seed: int,
    count: int = 16,
    s: float = 0.008,
) -> List[SamplingCost]:
    """Wall time per sample for chains of several lengths."""
    results = []
    for T in T_values:
        sched = build_schedule(T, s)
        start = time.perf_counter()
        sample(model, sched, shape, make_rng(seed), count)
        elapsed = time.perf_counter() - start
        results.append(SamplingCost(T=T, seconds_per_sample=elapsed / count))
        logger.info(f"Sampling cost at T={T}: {elapsed / count:.6g} s/sample")
    return results
