"""
Dataset, mask and sidecar files.

Binary dataset layout (little-endian):
    magic "VQDS" | u32 version | u8 kind (0 image, 1 latent) | u32 count
    image:  u32 c, u32 H, u32 W, then u8 pixels (value / 255)
    latent: u32 h, u32 w, u32 K, then u16 indices
    u32 CRC-32 of everything before it

CSV variant (``.csv``): a ``# kind=latent h=2 w=2 K=4`` or
``# kind=image c=1 H=8 W=8`` header line, then one row-major grid per row.
"""

import csv
import io
import json
import logging
import os
import struct
import zlib
from pathlib import Path
from typing import Dict, Union

import numpy as np

from src.core.exceptions import (
    BadMagicError,
    ChecksumError,
    DatasetFormatError,
    ResourceNotFoundError,
    TruncatedFileError,
    VersionMismatchError,
)
from src.diffusion.domain.grids import LatentGrid
from src.generation.domain.mask import Mask
from src.infrastructure.persistence.checkpoint_repository import atomic_write

logger = logging.getLogger(__name__)

MAGIC = b"VQDS"
VERSION = 1
KIND_IMAGE = 0
KIND_LATENT = 1
HEADER = struct.Struct("<4sIBI")
DIMS = struct.Struct("<III")
CRC = struct.Struct("<I")
MAX_K = 65536

Dataset = Union[np.ndarray, LatentGrid]


def _require(path: str) -> None:
    if not os.path.exists(path):
        raise ResourceNotFoundError(f"file not found: {path}")


def _is_csv(path: str) -> bool:
    return Path(path).suffix.lower() == ".csv"


def pack_dataset(data: Dataset) -> bytes:
    if isinstance(data, LatentGrid):
        grids = data.idx.reshape(-1, data.h, data.w)
        if data.K > MAX_K:
            raise DatasetFormatError(f"K={data.K} does not fit 16-bit indices")
        head = HEADER.pack(MAGIC, VERSION, KIND_LATENT, grids.shape[0]) + DIMS.pack(data.h, data.w, data.K)
        payload = grids.astype("<u2").tobytes()
    else:
        images = np.asarray(data, dtype=np.float64)
        if images.ndim != 4:
            raise DatasetFormatError(f"images must have shape (N, c, H, W), got {images.shape}")
        n, c, H, W = images.shape
        head = HEADER.pack(MAGIC, VERSION, KIND_IMAGE, n) + DIMS.pack(c, H, W)
        payload = np.rint(np.clip(images, 0.0, 1.0) * 255).astype("<u1").tobytes()
    body = head + payload
    return body + CRC.pack(zlib.crc32(body))


def unpack_dataset(data: bytes) -> Dataset:
    min_size = HEADER.size + DIMS.size + CRC.size
    if len(data) < min_size:
        raise TruncatedFileError(f"dataset is {len(data)} bytes, shorter than its header")
    magic, version, kind, count = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"expected magic {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"dataset version {version} is not supported (expected {VERSION})")
    (stored,) = CRC.unpack_from(data, len(data) - CRC.size)
    actual = zlib.crc32(data[:-CRC.size])
    if stored != actual:
        raise ChecksumError("dataset", stored, actual)

    a, b, c = DIMS.unpack_from(data, HEADER.size)
    payload = data[HEADER.size + DIMS.size:-CRC.size]
    if kind == KIND_LATENT:
        h, w, K = a, b, c
        expected = count * h * w * 2
        if len(payload) != expected:
            raise DatasetFormatError(f"latent payload is {len(payload)} bytes, expected {expected}")
        idx = np.frombuffer(payload, dtype="<u2").astype(np.int64).reshape(count, h, w)
        return _latent(idx, K)
    if kind == KIND_IMAGE:
        expected = count * a * b * c
        if len(payload) != expected:
            raise DatasetFormatError(f"image payload is {len(payload)} bytes, expected {expected}")
        return np.frombuffer(payload, dtype="<u1").astype(np.float64).reshape(count, a, b, c) / 255.0
    raise DatasetFormatError(f"unknown dataset kind {kind}")


def _latent(idx: np.ndarray, K: int) -> LatentGrid:
    if K < 1:
        raise DatasetFormatError(f"K must be positive, got {K}")
    if idx.size and idx.max() >= K:
        raise DatasetFormatError(f"dataset holds index {int(idx.max())} >= K={K}")
    if idx.shape[-1] * idx.shape[-2] == 0:
        raise DatasetFormatError("latent grids must have h * w > 0")
    return LatentGrid(idx, K)


def _parse_header(line: str) -> Dict[str, str]:
    if not line.startswith("#"):
        raise DatasetFormatError("CSV dataset must start with a '# kind=...' header line")
    fields = {}
    for token in line[1:].split():
        key, sep, value = token.partition("=")
        if not sep:
            raise DatasetFormatError(f"malformed header token '{token}'")
        fields[key] = value
    return fields


def read_dataset_csv(text: str) -> Dataset:
    lines = text.splitlines()
    if not lines:
        raise DatasetFormatError("empty CSV dataset")
    header = _parse_header(lines[0])
    rows = [row for row in csv.reader(lines[1:]) if row and not row[0].startswith("#")]
    try:
        kind = header["kind"]
        if kind == "latent":
            h, w, K = int(header["h"]), int(header["w"]), int(header["K"])
            values = np.array([[int(v) for v in row] for row in rows], dtype=np.int64).reshape(len(rows), -1)
            dims = (h, w)
        elif kind == "image":
            c, H, W = int(header["c"]), int(header["H"]), int(header["W"])
            values = np.array([[float(v) for v in row] for row in rows], dtype=np.float64).reshape(len(rows), -1)
            dims = (c, H, W)
        else:
            raise DatasetFormatError(f"unknown dataset kind '{kind}'")
    except KeyError as e:
        raise DatasetFormatError(f"CSV header is missing {e}")
    except ValueError as e:
        raise DatasetFormatError(f"bad CSV value: {e}")

    if values.shape[1] != int(np.prod(dims)):
        raise DatasetFormatError(f"rows hold {values.shape[1]} values, header says {int(np.prod(dims))}")
    if kind == "latent":
        if values.size and values.min() < 0:
            raise DatasetFormatError("latent indices must be non-negative")
        return _latent(values.reshape((len(rows),) + dims), K)
    if values.size and (values.min() < 0 or values.max() > 1):
        raise DatasetFormatError("image pixels must lie in [0, 1]")
    return values.reshape((len(rows),) + dims)


def write_dataset_csv(data: Dataset) -> str:
    out = io.StringIO()
    if isinstance(data, LatentGrid):
        grids = data.idx.reshape(-1, data.h, data.w)
        out.write(f"# kind=latent h={data.h} w={data.w} K={data.K}\n")
        rows = grids.reshape(grids.shape[0], -1).tolist()
    else:
        n, c, H, W = data.shape
        out.write(f"# kind=image c={c} H={H} W={W}\n")
        rows = [[repr(float(v)) for v in row] for row in data.reshape(n, -1)]
    csv.writer(out, lineterminator="\n").writerows(rows)
    return out.getvalue()


class FileDatasetRepository:
    """Dataset, mask and sidecar files; binary or CSV chosen by extension."""

    def read(self, path: str) -> Dataset:
        _require(path)
        if _is_csv(path):
            with open(path, "r") as f:
                return read_dataset_csv(f.read())
        with open(path, "rb") as f:
            return unpack_dataset(f.read())

    def write(self, path: str, data: Dataset) -> None:
        payload = write_dataset_csv(data).encode("utf-8") if _is_csv(path) else pack_dataset(data)
        atomic_write(path, payload)
        logger.info(f"Wrote dataset {path}")

    def read_mask(self, path: str) -> Mask:
        _require(path)
        with open(path, "r") as f:
            rows = [row for row in csv.reader(f) if row and not row[0].startswith("#")]
        try:
            return Mask(np.array([[int(v) for v in row] for row in rows], dtype=np.int64))
        except ValueError as e:
            raise DatasetFormatError(f"bad mask file {path}: {e}")

    def write_mask(self, path: str, mask: Mask) -> None:
        out = io.StringIO()
        csv.writer(out, lineterminator="\n").writerows(mask.m.astype(int).tolist())
        atomic_write(path, out.getvalue().encode("utf-8"))

    def read_sidecar(self, path: str) -> dict:
        _require(path)
        with open(path, "r") as f:
            try:
                return json.load(f)
            except json.JSONDecodeError as e:
                raise DatasetFormatError(f"bad sidecar {path}: {e}")

    def write_sidecar(self, path: str, payload: dict) -> None:
        atomic_write(path, json.dumps(payload, indent=2, sort_keys=True).encode("utf-8"))


def sidecar_path(dataset_path: str) -> str:
    return f"{dataset_path}.json"


def read_dataset(path: str) -> Dataset:
    return FileDatasetRepository().read(path)


def write_dataset(path: str, data: Dataset) -> None:
    FileDatasetRepository().write(path, data)
