"""
Command-line surface of the toolkit.

Every subcommand prints ``config_hash=<hash>`` first on stdout. Failures
print one line ``error: <code-name>: <message>`` to stderr and exit with the
code from the table in ``--help``.
"""

import argparse
import logging
import sys
import time
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import torch

from src.config import Config
from src.core.exceptions import ApplicationError, ValidationError
from src.core.random import make_rng
from src.denoising.application.training_service import TrainingConfig, train_denoiser
from src.denoising.domain.denoiser_model import DenoiserConfig, DenoiserModel
from src.denoising.domain.optimizer import AdamState
from src.denoising.domain.oracle_denoiser import OracleDenoiser
from src.denoising.domain.timestep_sampler import TimestepSampler
from src.diffusion.domain.distribution import LatentDistribution
from src.diffusion.domain.grids import LatentGrid
from src.diffusion.domain.interfaces.denoiser_interface import Denoiser
from src.diffusion.domain.schedule import Schedule, ScheduleConfig, build_schedule
from src.evaluation.application.evaluation_service import (
    MetricRecord,
    nll_bits,
    sampling_cost,
    tv_distance_empirical,
    usage_report,
    write_metrics_csv,
)
from src.evaluation.domain.toy_datasets import clustered_images, pattern_distribution
from src.generation.application.sampling_service import inpaint, sample
from src.generation.domain.mask import MASK_PRESETS
from src.infrastructure.persistence.checkpoint_repository import CheckpointParts, FileCheckpointRepository
from src.infrastructure.persistence.dataset_repository import FileDatasetRepository, sidecar_path
from src.quantization.application.refit_service import RefitConfig, RefitService
from src.quantization.application.vq_training_service import VqTrainingConfig, train_vq_autoencoder
from src.quantization.domain.autoencoder import ToyAutoencoder, check_images
from src.quantization.domain.codebook import Codebook

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
CODE_NAMES = {
    1: "error",
    2: "usage",
    3: "not-found",
    4: "validation",
    5: "config",
    6: "persistence",
    7: "divergence",
}

EPILOG = """exit codes:
  0  success
  1  error        unexpected failure
  2  usage        unknown flag or bad flag value
  3  not-found    missing input file
  4  validation   shape, K or domain mismatch
  5  config       bad config file, override or environment value
  6  persistence  bad magic, version, checksum, truncation or format
  7  divergence   training diverged or produced non-finite values
"""

METRICS = ("nll", "usage", "tv", "cost")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of printing usage and exiting."""

    def error(self, message):
        raise UsageError(message)


def _int_list(raw: str) -> List[int]:
    try:
        return [int(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{raw}'")


def _metric_list(raw: str) -> List[str]:
    metrics = [m.strip() for m in raw.split(",") if m.strip()]
    unknown = [m for m in metrics if m not in METRICS]
    if unknown or not metrics:
        raise argparse.ArgumentTypeError(f"metrics must be drawn from {','.join(METRICS)}")
    return metrics


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML or key=value config file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="config override")
    common.add_argument("--log-level", help="logging level (default from config)")
    common.add_argument("--threads", type=int, help="cap on intra-op threads")
    common.add_argument("--seed", type=int, required=True, help="random seed (required)")

    parser = _Parser(
        prog="vqddm",
        description="Vector-quantized discrete diffusion toolkit",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(
            name, parents=[common], help=help_text, epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter
        )

    p = add("gen-toy", "write a synthetic dataset and its generating distribution")
    p.add_argument("--kind", choices=("clusters", "patterns"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--h", type=int)
    p.add_argument("--w", type=int)
    p.add_argument("--K", type=int, help="categories (patterns)")
    p.add_argument("--d", type=int, default=16, help="patch vector dimension, a perfect square (clusters)")
    p.add_argument("--clusters", type=int, default=64)
    p.add_argument("--count", type=int)
    p.add_argument("--noise", type=float, default=0.02)

    p = add("train-vq", "train the toy autoencoder and codebook")
    p.add_argument("--data", required=True)
    p.add_argument("--out-ckpt", required=True)
    p.add_argument("--K", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--patch", type=int)
    p.add_argument("--beta-commit", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)

    p = add("refit", "rebuild the codebook from sampled features")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-ckpt", required=True)
    p.add_argument("--P", type=int)
    p.add_argument("--K-target", type=int)
    p.add_argument("--mc-len", type=int)
    p.add_argument("--kmeans-iters", type=int)
    p.add_argument("--fine-tune-steps", type=int)
    p.add_argument("--fine-tune-lr", type=float)

    p = add("train-ddm", "train the denoiser on latent grids")
    p.add_argument("--latents", required=True)
    p.add_argument("--out-ckpt", required=True)
    p.add_argument("--T", type=int)
    p.add_argument("--s", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--time-dim", type=int)
    p.add_argument("--hidden", type=_int_list, help="two widths, e.g. 256,256")
    p.add_argument("--no-importance", action="store_true", help="sample timesteps uniformly")

    p = add("sample", "draw latent grids from the reverse process")
    _add_model_source(p)
    p.add_argument("--count", type=int)
    p.add_argument("--out", required=True)

    p = add("inpaint", "complete latent grids outside a mask")
    _add_model_source(p)
    p.add_argument("--input", required=True)
    p.add_argument("--mask", required=True, help=f"mask CSV file or preset ({', '.join(MASK_PRESETS)})")
    p.add_argument("--out", required=True)

    p = add("eval", "compute metrics and write them as CSV")
    _add_model_source(p)
    p.add_argument("--data", required=True)
    p.add_argument("--metrics", type=_metric_list, default=["nll", "usage", "tv"])
    p.add_argument("--out-csv", required=True)
    p.add_argument("--dist", help="distribution sidecar for tv (default <data>.json)")
    p.add_argument("--passes", type=int, default=1)
    p.add_argument("--max-grids", type=int, default=64, help="grids used for nll")
    p.add_argument("--samples", type=int, default=10000, help="samples drawn for tv")
    p.add_argument("--cost-T", type=_int_list, default=[10, 50, 100])
    p.add_argument("--timings", action="store_true", help="fill the wall_seconds column")
    return parser


def _add_model_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ckpt", help="checkpoint with schedule and denoiser")
    p.add_argument("--oracle", help="distribution sidecar; use the Bayes-optimal denoiser")
    p.add_argument("--T", type=int, help="chain length when no checkpoint schedule is given")


FLAG_KEYS = {
    "train-vq": {"K": "vq.K", "d": "vq.d", "patch": "vq.patch", "beta_commit": "vq.beta_commit",
                 "steps": "vq.steps", "lr": "vq.lr", "batch": "vq.batch"},
    "refit": {"P": "refit.P", "K_target": "refit.K_target", "mc_len": "refit.mc_chain_len",
              "kmeans_iters": "refit.kmeans_iters", "fine_tune_steps": "refit.fine_tune_steps",
              "fine_tune_lr": "vq.fine_tune_lr"},
    "train-ddm": {"T": "schedule.T", "s": "schedule.s", "steps": "training.steps", "batch": "training.batch",
                  "lr": "training.lr", "embed_dim": "denoiser.embed_dim", "time_dim": "denoiser.time_dim",
                  "hidden": "denoiser.hidden"},
    "sample": {"T": "schedule.T", "count": "sampling.count"},
    "inpaint": {"T": "schedule.T"},
    "eval": {"T": "schedule.T"},
}


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Dotted config overrides from ``--set`` items and subcommand flags (flags win)."""
    overrides: Dict[str, Any] = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects SECTION.KEY=VALUE, got '{item}'")
        overrides[key.strip()] = Config._parse_value(value.strip())
    for flag, key in FLAG_KEYS.get(args.command, {}).items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "no_importance", False):
        overrides["training.importance_sampling"] = False
    if args.log_level:
        overrides["logging.level"] = args.log_level
    if args.threads is not None:
        overrides["runtime.threads"] = args.threads
    return overrides


class Runner:
    """Executes one parsed command against a configuration."""

    def __init__(self, args: argparse.Namespace, config: Config, out=None):
        self.args = args
        self.config = config
        self.out = out or sys.stdout
        self.checkpoints = FileCheckpointRepository()
        self.datasets = FileDatasetRepository()

    def emit(self, line: str) -> None:
        print(line, file=self.out, flush=True)

    def run(self) -> None:
        handlers: Dict[str, Callable[[], None]] = {
            "gen-toy": self.gen_toy,
            "train-vq": self.train_vq,
            "refit": self.refit,
            "train-ddm": self.train_ddm,
            "sample": self.sample,
            "inpaint": self.inpaint,
            "eval": self.eval,
        }
        if self.args.seed < 0:
            raise ValidationError(f"--seed must be non-negative, got {self.args.seed}")
        handlers[self.args.command]()

    def _latents(self, path: str) -> LatentGrid:
        data = self.datasets.read(path)
        if not isinstance(data, LatentGrid):
            raise ValidationError(f"{path} holds images; a latent dataset is required")
        return data

    def _images(self, path: str) -> np.ndarray:
        data = self.datasets.read(path)
        if isinstance(data, LatentGrid):
            raise ValidationError(f"{path} holds latent grids; an image dataset is required")
        return data

    def _denoiser(self) -> Tuple[Denoiser, Schedule, CheckpointParts]:
        """Model source shared by sample, inpaint and eval."""
        args = self.args
        sched_cfg = self.config.section("schedule", ScheduleConfig)
        if not args.ckpt and not args.oracle:
            raise ValidationError("either --ckpt or --oracle is required")
        parts = self.checkpoints.load(args.ckpt) if args.ckpt else CheckpointParts()
        sched = parts.schedule
        if sched is None or (args.T is not None and args.oracle):
            sched = build_schedule(sched_cfg.T, sched_cfg.s, sched_cfg.beta_cap)
        if args.oracle:
            sidecar = self.datasets.read_sidecar(args.oracle)
            if "distribution" not in sidecar:
                raise ValidationError(f"{args.oracle} does not describe an enumerable latent distribution")
            return OracleDenoiser(LatentDistribution.from_dict(sidecar["distribution"]), sched), sched, parts
        if parts.denoiser is None:
            raise ValidationError(f"{args.ckpt} holds no denoiser")
        return parts.denoiser, sched, parts

    def _grid_shape(self, denoiser: Denoiser) -> Tuple[int, int, int]:
        if isinstance(denoiser, OracleDenoiser):
            return denoiser.dist.h, denoiser.dist.w, denoiser.K
        return denoiser.h, denoiser.w, denoiser.K

    def gen_toy(self) -> None:
        args = self.args
        rng = make_rng(args.seed)
        if args.kind == "clusters":
            h, w = args.h or 4, args.w or 4
            toy = clustered_images(args.count or 256, h, w, args.clusters, args.d, rng, args.noise)
            self.datasets.write(args.out, toy.images)
            sidecar = {**toy.to_dict(), "h": h, "w": w, "count": toy.images.shape[0], "seed": args.seed}
            count = toy.images.shape[0]
        else:
            h, w, K = args.h or 2, args.w or 2, args.K or 4
            dist = pattern_distribution(h, w, K, rng)
            grids = dist.sample(args.count or 10000, rng)
            self.datasets.write(args.out, grids)
            sidecar = {"kind": "patterns", "distribution": dist.to_dict(), "count": len(grids), "seed": args.seed}
            count = len(grids)
        self.datasets.write_sidecar(sidecar_path(args.out), sidecar)
        self.emit(f"wrote={args.out} count={count} sidecar={sidecar_path(args.out)}")

    def train_vq(self) -> None:
        args = self.args
        cfg = self.config.section("vq", VqTrainingConfig)
        images = check_images(self._images(args.data), cfg.patch)
        rng = make_rng(args.seed)
        ae = ToyAutoencoder.init(cfg.d, rng, patch=cfg.patch, channels=images.shape[1])
        cb = Codebook.uniform_init(cfg.K, cfg.d, rng)

        self.emit("step,loss")
        ae, cb, _ = train_vq_autoencoder(
            images, ae, cb, cfg.beta_commit, cfg.steps, cfg.lr, rng, batch=cfg.batch,
            on_step=lambda step, loss: self.emit(f"{step},{loss:.10g}"),
        )
        self.checkpoints.save(
            args.out_ckpt,
            CheckpointParts(codebook=cb, autoencoder=ae, rng_seed=args.seed, config_hash=self.config.config_hash),
        )

    def refit(self) -> None:
        args = self.args
        cfg = self.config.section("refit", RefitConfig, seed=args.seed)
        fine_tune_steps = int(self.config["refit"].get("fine_tune_steps", 0))
        fine_tune_lr = self.config.section("vq", VqTrainingConfig).fine_tune_lr
        if fine_tune_steps < 0:
            raise ValidationError("--fine-tune-steps must be non-negative")

        parts = self.checkpoints.load(args.ckpt)
        if parts.autoencoder is None or parts.codebook is None:
            raise ValidationError(f"{args.ckpt} holds no autoencoder and codebook")
        images = check_images(self._images(args.data), parts.autoencoder.patch)

        service = RefitService(cfg, fine_tune_steps=fine_tune_steps, fine_tune_lr=fine_tune_lr)
        rebuilt, report = service.run(images, parts.autoencoder, parts.codebook, make_rng(args.seed))
        self.emit(f"usage_before={report.usage_before:.6f}")
        self.emit(f"usage_after={report.usage_after:.6f}")
        self.emit(f"mse_before={report.mse_before:.10g}")
        self.emit(f"mse_after={report.mse_after:.10g}")

        parts.codebook = rebuilt
        parts.rng_seed = args.seed
        parts.config_hash = self.config.config_hash
        self.checkpoints.save(args.out_ckpt, parts)

    def train_ddm(self) -> None:
        args = self.args
        sched_cfg = self.config.section("schedule", ScheduleConfig)
        model_cfg = self.config.section("denoiser", DenoiserConfig)
        train_cfg = self.config.section("training", TrainingConfig)

        latents = self._latents(args.latents)
        if latents.idx.ndim != 3:
            raise ValidationError("latent dataset must hold a stack of grids")
        sched = build_schedule(sched_cfg.T, sched_cfg.s, sched_cfg.beta_cap)
        rng = make_rng(args.seed)
        model = DenoiserModel.init(latents.K, latents.h, latents.w, model_cfg, rng)
        model.adam = AdamState.zeros(
            model.params.size, lr=train_cfg.lr, beta1=train_cfg.beta1, beta2=train_cfg.beta2, eps=train_cfg.eps
        )
        ts = TimestepSampler(sched.T, importance=train_cfg.importance_sampling)

        self.emit("step,loss_bits")
        train_denoiser(
            latents, model, sched, ts, train_cfg.steps, train_cfg.batch, rng, lr=train_cfg.lr,
            on_step=lambda step, bits: self.emit(f"{step},{bits:.10g}"),
        )
        self.checkpoints.save(
            args.out_ckpt,
            CheckpointParts(schedule=sched, denoiser=model, adam=model.adam, rng_seed=args.seed,
                            config_hash=self.config.config_hash),
        )

    def sample(self) -> None:
        count = int(self.config["sampling"]["count"])
        if count < 1:
            raise ValidationError("--count must be positive")
        denoiser, sched, _ = self._denoiser()
        grids = sample(denoiser, sched, self._grid_shape(denoiser), make_rng(self.args.seed), count)
        self.datasets.write(self.args.out, grids)
        self.emit(f"wrote={self.args.out} count={count}")

    def inpaint(self) -> None:
        args = self.args
        denoiser, sched, _ = self._denoiser()
        known = self._latents(args.input)
        h, w, _ = self._grid_shape(denoiser)
        if args.mask in MASK_PRESETS:
            mask = MASK_PRESETS[args.mask](h, w)
        else:
            mask = self.datasets.read_mask(args.mask)
        result = inpaint(denoiser, sched, known, mask, make_rng(args.seed))
        self.datasets.write(args.out, result)
        self.emit(f"wrote={args.out} count={len(result) if result.batch_shape else 1}")

    def eval(self) -> None:
        args = self.args
        if args.passes < 1 or args.max_grids < 1 or args.samples < 1:
            raise ValidationError("--passes, --max-grids and --samples must be positive")
        metrics = args.metrics
        needs_model = any(m in metrics for m in ("nll", "tv", "cost"))
        if needs_model:
            denoiser, sched, parts = self._denoiser()
        else:
            denoiser, sched = None, None
            parts = self.checkpoints.load(args.ckpt) if args.ckpt else CheckpointParts()
        data = self.datasets.read(args.data)
        config_hash = self.config.config_hash
        records: List[MetricRecord] = []

        def record(name: str, value: float, started: float) -> None:
            elapsed = time.perf_counter() - started
            logger.info(f"Computed {name} in {elapsed:.3f}s")
            records.append(MetricRecord(name, float(value), args.seed, config_hash, elapsed if args.timings else None))
            self.emit(f"{name}={value:.10g}")

        if "nll" in metrics:
            started = time.perf_counter()
            if not isinstance(data, LatentGrid):
                raise ValidationError("nll needs a latent dataset")
            subset = data[: args.max_grids] if data.batch_shape else data
            record("nll_bits", nll_bits(subset, denoiser, sched, make_rng(args.seed), args.passes), started)

        if "usage" in metrics:
            started = time.perf_counter()
            if parts.autoencoder is None or parts.codebook is None:
                raise ValidationError("usage needs a checkpoint with autoencoder and codebook")
            if isinstance(data, LatentGrid):
                raise ValidationError("usage needs an image dataset")
            value, _ = usage_report(check_images(data, parts.autoencoder.patch), parts.autoencoder, parts.codebook)
            record("usage", value, started)

        if "tv" in metrics:
            started = time.perf_counter()
            sidecar = self.datasets.read_sidecar(args.dist or sidecar_path(args.data))
            if "distribution" not in sidecar:
                raise ValidationError("tv needs an enumerable latent distribution sidecar")
            dist = LatentDistribution.from_dict(sidecar["distribution"])
            drawn = sample(denoiser, sched, self._grid_shape(denoiser), make_rng(args.seed), args.samples)
            record("tv", tv_distance_empirical(drawn, dist), started)

        if "cost" in metrics:
            if isinstance(denoiser, OracleDenoiser):
                raise ValidationError("cost needs a trained denoiser checkpoint")
            for cost in sampling_cost(denoiser, args.cost_T, self._grid_shape(denoiser), args.seed):
                wall = cost.seconds_per_sample if args.timings else None
                records.append(MetricRecord(f"seconds_per_sample_T{cost.T}", cost.seconds_per_sample, args.seed,
                                            config_hash, wall))
                self.emit(f"seconds_per_sample_T{cost.T}={cost.seconds_per_sample:.6g}")

        write_metrics_csv(args.out_csv, records)


def run(argv: Optional[List[str]] = None, out=None, err=None) -> int:
    """Parse ``argv``, execute the subcommand and return the process exit code."""
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        overrides = collect_overrides(args)
    except UsageError as e:
        print(f"error: usage: {e}", file=err)
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code or 0)

    try:
        config = Config(args.config, overrides=overrides)
        threads = int(config["runtime"]["threads"])
        if threads > 0:
            torch.set_num_threads(threads)
        print(f"config_hash={config.config_hash}", file=out, flush=True)
        Runner(args, config, out).run()
    except ApplicationError as e:
        print(f"error: {CODE_NAMES.get(e.exit_code, 'error')}: {e}", file=err)
        return e.exit_code
    except Exception as e:
        logger.debug("Unhandled failure", exc_info=True)
        print(f"error: error: {type(e).__name__}: {e}", file=err)
        return 1
    return EXIT_OK
