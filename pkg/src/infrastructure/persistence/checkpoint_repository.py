"""
Single-file checkpoints with a CRC-protected section table.

File layout (little-endian):
    magic "VQDD" | u32 version | u32 section count
    per section: 16-byte zero-padded name | u64 offset | u64 length | u32 CRC-32
    u32 CRC-32 of everything above
    section payloads, contiguous, in table order, ending exactly at EOF
"""

import logging
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from src.core.exceptions import (
    BadMagicError,
    ChecksumError,
    PersistenceError,
    ResourceNotFoundError,
    TruncatedFileError,
    UnknownSectionError,
    VersionMismatchError,
)
from src.denoising.domain.denoiser_model import DenoiserModel
from src.denoising.domain.optimizer import AdamState
from src.diffusion.domain.schedule import Schedule
from src.infrastructure.persistence.binary_format import decode_arrays, encode_arrays
from src.quantization.domain.autoencoder import ToyAutoencoder
from src.quantization.domain.codebook import Codebook

logger = logging.getLogger(__name__)

MAGIC = b"VQDD"
VERSION = 1
NAME_BYTES = 16
HEADER = struct.Struct("<4sII")
ENTRY = struct.Struct(f"<{NAME_BYTES}sQQI")
CRC = struct.Struct("<I")

SECTIONS = ("schedule", "codebook", "autoencoder", "denoiser", "adam", "rng_seed", "config_hash")


@dataclass(eq=False)
class CheckpointParts:
    """Everything a checkpoint may hold; absent parts are omitted from the file."""

    schedule: Optional[Schedule] = None
    codebook: Optional[Codebook] = None
    autoencoder: Optional[ToyAutoencoder] = None
    denoiser: Optional[DenoiserModel] = None
    adam: Optional[AdamState] = None
    rng_seed: Optional[int] = None
    config_hash: Optional[str] = None


def _schedule_arrays(sched: Schedule) -> dict:
    return {
        "T": np.array([sched.T], dtype=np.int64),
        "params": np.array([sched.s, sched.beta_cap]),
        "alpha_bar": sched.alpha_bar,
        "alpha": sched.alpha,
        "beta": sched.beta,
    }


def _schedule_from(arrays: dict) -> Schedule:
    s, beta_cap = (float(x) for x in arrays["params"])
    return Schedule(
        T=int(arrays["T"][0]),
        s=s,
        beta_cap=beta_cap,
        alpha_bar=arrays["alpha_bar"],
        alpha=arrays["alpha"],
        beta=arrays["beta"],
    )


def encode_sections(parts: CheckpointParts) -> Dict[str, bytes]:
    sections: Dict[str, bytes] = {}
    if parts.schedule is not None:
        sections["schedule"] = encode_arrays(_schedule_arrays(parts.schedule))
    if parts.codebook is not None:
        sections["codebook"] = encode_arrays(parts.codebook.to_arrays())
    if parts.autoencoder is not None:
        sections["autoencoder"] = encode_arrays(parts.autoencoder.to_arrays())
    if parts.denoiser is not None:
        sections["denoiser"] = encode_arrays(parts.denoiser.to_arrays())
    adam = parts.adam if parts.adam is not None else (parts.denoiser.adam if parts.denoiser else None)
    if adam is not None:
        sections["adam"] = encode_arrays(adam.to_arrays())
    if parts.rng_seed is not None:
        sections["rng_seed"] = encode_arrays({"seed": np.array([parts.rng_seed], dtype=np.int64)})
    if parts.config_hash is not None:
        sections["config_hash"] = encode_arrays({"hash": np.frombuffer(parts.config_hash.encode("ascii"), dtype=np.uint8)})
    return sections


def decode_sections(sections: Dict[str, bytes]) -> CheckpointParts:
    parts = CheckpointParts()
    try:
        arrays = {name: decode_arrays(payload) for name, payload in sections.items()}
        if "schedule" in arrays:
            parts.schedule = _schedule_from(arrays["schedule"])
        if "codebook" in arrays:
            parts.codebook = Codebook.from_arrays(arrays["codebook"])
        if "autoencoder" in arrays:
            parts.autoencoder = ToyAutoencoder.from_arrays(arrays["autoencoder"])
        if "adam" in arrays:
            parts.adam = AdamState.from_arrays(arrays["adam"])
        if "denoiser" in arrays:
            parts.denoiser = DenoiserModel.from_arrays(arrays["denoiser"])
            parts.denoiser.adam = parts.adam
        if "rng_seed" in arrays:
            parts.rng_seed = int(arrays["rng_seed"]["seed"][0])
        if "config_hash" in arrays:
            parts.config_hash = arrays["config_hash"]["hash"].tobytes().decode("ascii")
    except (KeyError, ValueError, TypeError) as e:
        raise PersistenceError(f"malformed checkpoint section contents: {e}")
    return parts


def pack_checkpoint(parts: CheckpointParts) -> bytes:
    sections = encode_sections(parts)
    table_end = HEADER.size + ENTRY.size * len(sections) + CRC.size
    table, offset = [], table_end
    for name, payload in sections.items():
        table.append(ENTRY.pack(name.encode("ascii"), offset, len(payload), zlib.crc32(payload)))
        offset += len(payload)
    head = HEADER.pack(MAGIC, VERSION, len(sections)) + b"".join(table)
    return head + CRC.pack(zlib.crc32(head)) + b"".join(sections.values())


def unpack_checkpoint(data: bytes) -> CheckpointParts:
    if len(data) < HEADER.size:
        raise TruncatedFileError(f"checkpoint is {len(data)} bytes, shorter than its header")
    magic, version, count = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"expected magic {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version} is not supported (expected {VERSION})")

    table_end = HEADER.size + ENTRY.size * count + CRC.size
    if len(data) < table_end:
        raise TruncatedFileError(f"checkpoint ends inside its section table ({len(data)} < {table_end} bytes)")
    (table_crc,) = CRC.unpack_from(data, table_end - CRC.size)
    actual = zlib.crc32(data[:table_end - CRC.size])
    if actual != table_crc:
        raise ChecksumError("table", table_crc, actual)

    sections: Dict[str, bytes] = {}
    expected_offset = table_end
    for i in range(count):
        raw_name, offset, length, crc = ENTRY.unpack_from(data, HEADER.size + i * ENTRY.size)
        name = raw_name.rstrip(b"\0").decode("ascii", errors="replace")
        if name not in SECTIONS:
            raise UnknownSectionError(f"unknown section '{name}' in checkpoint version {version}")
        if name in sections:
            raise PersistenceError(f"duplicate section '{name}'")
        if offset != expected_offset:
            raise PersistenceError(f"section '{name}' starts at {offset}, expected {expected_offset}")
        if offset + length > len(data):
            raise TruncatedFileError(f"section '{name}' extends past end of file")
        payload = data[offset:offset + length]
        actual = zlib.crc32(payload)
        if actual != crc:
            raise ChecksumError(name, crc, actual)
        sections[name] = payload
        expected_offset = offset + length
    if expected_offset != len(data):
        raise PersistenceError(f"{len(data) - expected_offset} trailing bytes after the last section")
    return decode_sections(sections)


def atomic_write(path: str, data: bytes) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class FileCheckpointRepository:
    """Reads and writes checkpoint files."""

    def save(self, path: str, parts: CheckpointParts) -> None:
        """Write ``parts`` to ``path`` atomically.

        Args:
            path: Destination file.
            parts: The checkpoint contents; None parts are omitted.
        """
        data = pack_checkpoint(parts)
        atomic_write(path, data)
        logger.info(f"Wrote checkpoint {path} ({len(data)} bytes)")

    def load(self, path: str) -> CheckpointParts:
        """Read and validate a checkpoint.

        Raises:
            ResourceNotFoundError: If the file does not exist.
            PersistenceError: On any format or checksum failure.
        """
        if not os.path.exists(path):
            raise ResourceNotFoundError(f"checkpoint not found: {path}")
        with open(path, "rb") as f:
            data = f.read()
        return unpack_checkpoint(data)


def save_checkpoint(path: str, parts: CheckpointParts) -> None:
    FileCheckpointRepository().save(path, parts)


def load_checkpoint(path: str) -> CheckpointParts:
    return FileCheckpointRepository().load(path)
