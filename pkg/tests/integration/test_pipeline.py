"""
End-to-end runs of the command line on small toys.
"""

import csv

import numpy as np

from src.infrastructure.persistence.checkpoint_repository import load_checkpoint
from src.infrastructure.persistence.dataset_repository import read_dataset

DDM_FLAGS = ("--T", 5, "--steps", 6, "--batch", 8, "--embed-dim", 4, "--time-dim", 4, "--hidden", "8,8")


def _lines(out):
    return out.strip().splitlines()


def _metrics(path):
    with open(path, newline="") as f:
        return {row["metric"]: float(row["value"]) for row in csv.DictReader(f)}


class TestLatentPipeline:
    """gen-toy, train-ddm, sample, inpaint and eval on the pattern toy."""

    def test_train_sample_inpaint_eval(self, cli, pattern_toy, tmp_path):
        ckpt = tmp_path / "ddm.ckpt"
        code, out, err = cli("train-ddm", "--seed", 2, "--latents", pattern_toy, "--out-ckpt", ckpt, *DDM_FLAGS)
        assert code == 0, err
        lines = _lines(out)
        assert lines[0].startswith("config_hash=")
        assert lines[1] == "step,loss_bits"
        assert [int(line.split(",")[0]) for line in lines[2:]] == [1, 2, 3, 4, 5, 6]

        parts = load_checkpoint(str(ckpt))
        assert parts.schedule.T == 5
        assert parts.denoiser.adam.step == 6
        assert parts.config_hash == lines[0].split("=", 1)[1]

        samples = tmp_path / "samples.csv"
        code, out, err = cli("sample", "--seed", 3, "--ckpt", ckpt, "--count", 12, "--out", samples)
        assert code == 0, err
        grids = read_dataset(str(samples))
        assert grids.idx.shape == (12, 2, 2) and grids.K == 4

        filled = tmp_path / "filled.bin"
        code, _, err = cli("inpaint", "--seed", 4, "--ckpt", ckpt, "--input", pattern_toy, "--mask", "top",
                           "--out", filled)
        assert code == 0, err
        known = read_dataset(str(pattern_toy))
        result = read_dataset(str(filled))
        np.testing.assert_array_equal(result.idx[:, 1, :], known.idx[:, 1, :])

        report = tmp_path / "metrics.csv"
        code, out, err = cli("eval", "--seed", 5, "--ckpt", ckpt, "--data", pattern_toy, "--metrics", "nll,tv,cost",
                             "--max-grids", 4, "--samples", 200, "--cost-T", "2,3", "--out-csv", report)
        assert code == 0, err
        values = _metrics(report)
        assert values["nll_bits"] > 0
        assert 0.0 <= values["tv"] <= 1.0
        assert set(values) == {"nll_bits", "tv", "seconds_per_sample_T2", "seconds_per_sample_T3"}

    def test_oracle_sampling_matches_toy(self, cli, pattern_toy, tmp_path):
        report = tmp_path / "oracle.csv"
        code, _, err = cli("eval", "--seed", 6, "--oracle", f"{pattern_toy}.json", "--T", 20, "--data", pattern_toy,
                           "--metrics", "nll,tv", "--max-grids", 50, "--samples", 20000, "--out-csv", report)
        assert code == 0, err
        values = _metrics(report)
        assert values["tv"] < 0.03
        assert abs(values["nll_bits"] - 0.713) < 0.2

    def test_timings_are_opt_in(self, cli, pattern_toy, tmp_path):
        for name, extra in (("plain.csv", ()), ("timed.csv", ("--timings",))):
            code, _, err = cli("eval", "--seed", 6, "--oracle", f"{pattern_toy}.json", "--T", 5, "--data", pattern_toy,
                               "--metrics", "nll", "--max-grids", 2, "--out-csv", tmp_path / name, *extra)
            assert code == 0, err
        with open(tmp_path / "plain.csv", newline="") as f:
            assert [row["wall_seconds"] for row in csv.DictReader(f)] == [""]
        with open(tmp_path / "timed.csv", newline="") as f:
            assert float(next(csv.DictReader(f))["wall_seconds"]) >= 0.0

    def test_inpaint_with_mask_file(self, cli, pattern_toy, tmp_path):
        mask = tmp_path / "mask.csv"
        mask.write_text("1,0\n0,1\n")
        filled = tmp_path / "filled.csv"
        code, _, err = cli("inpaint", "--seed", 7, "--oracle", f"{pattern_toy}.json", "--T", 10,
                           "--input", pattern_toy, "--mask", mask, "--out", filled)
        assert code == 0, err
        known = read_dataset(str(pattern_toy)).idx
        result = read_dataset(str(filled)).idx
        np.testing.assert_array_equal(result[:, 0, 0], known[:, 0, 0])
        np.testing.assert_array_equal(result[:, 1, 1], known[:, 1, 1])


class TestImagePipeline:
    """gen-toy, train-vq, refit and eval usage on clustered images."""

    def test_train_refit_usage(self, cli, tmp_path):
        images = tmp_path / "clusters.bin"
        code, _, err = cli("gen-toy", "--kind", "clusters", "--out", images, "--h", 2, "--w", 2, "--count", 16,
                           "--clusters", 8, "--seed", 0)
        assert code == 0, err

        vq = tmp_path / "vq.ckpt"
        code, out, err = cli("train-vq", "--seed", 1, "--data", images, "--out-ckpt", vq, "--K", 8, "--d", 16,
                             "--steps", 5, "--lr", 0.01)
        assert code == 0, err
        assert _lines(out)[1] == "step,loss"
        assert len(_lines(out)) == 7

        refit = tmp_path / "refit.ckpt"
        code, out, err = cli("refit", "--seed", 2, "--ckpt", vq, "--data", images, "--out-ckpt", refit,
                             "--P", 200, "--K-target", 8, "--kmeans-iters", 20)
        assert code == 0, err
        report = dict(line.split("=", 1) for line in _lines(out)[1:])
        assert set(report) == {"usage_before", "usage_after", "mse_before", "mse_after"}
        assert float(report["mse_after"]) <= float(report["mse_before"])
        assert load_checkpoint(str(refit)).codebook.K == 8

        metrics = tmp_path / "usage.csv"
        code, out, err = cli("eval", "--seed", 3, "--ckpt", refit, "--data", images, "--metrics", "usage",
                             "--out-csv", metrics)
        assert code == 0, err
        assert _metrics(metrics)["usage"] == float(report["usage_after"])
