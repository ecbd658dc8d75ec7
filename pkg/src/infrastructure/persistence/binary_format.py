"""
Little-endian encoding of named numpy arrays.

Payload layout:
    u32 entry count
    per entry: u16 name length, name (utf-8), u8 dtype code, u8 ndim,
               u64 per dimension, raw little-endian data
"""

import math
import struct
from typing import Dict

import numpy as np

from src.core.exceptions import PersistenceError, TruncatedFileError

DTYPES = {
    0: np.dtype("<f8"),
    1: np.dtype("<i8"),
    2: np.dtype("<u1"),
    3: np.dtype("<u2"),
}
DTYPE_CODES = {dt: code for code, dt in DTYPES.items()}


def encode_arrays(arrays: Dict[str, np.ndarray]) -> bytes:
    parts = [struct.pack("<I", len(arrays))]
    for name, array in arrays.items():
        array = np.asarray(array)
        dtype = array.dtype.newbyteorder("<")
        if dtype not in DTYPE_CODES:
            raise PersistenceError(f"cannot store array '{name}' of dtype {array.dtype}")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", DTYPE_CODES[dtype], array.ndim))
        parts.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        parts.append(np.ascontiguousarray(array, dtype=dtype).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(f"payload ends at byte {len(self.data)}, needed {self.pos + n}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_arrays(data: bytes) -> Dict[str, np.ndarray]:
    reader = _Reader(data)
    (count,) = reader.unpack("<I")
    arrays: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        try:
            name = reader.take(name_len).decode("utf-8")
        except UnicodeDecodeError as e:
            raise PersistenceError(f"array name is not valid utf-8: {e}")
        code, ndim = reader.unpack("<BB")
        if code not in DTYPES:
            raise PersistenceError(f"unknown dtype code {code} for array '{name}'")
        shape = reader.unpack(f"<{ndim}Q")
        dtype = DTYPES[code]
        nbytes = math.prod(shape) * dtype.itemsize
        if nbytes > len(data) - reader.pos:
            raise TruncatedFileError(
                f"array '{name}' of shape {shape} needs {nbytes} bytes, {len(data) - reader.pos} remain"
            )
        raw = reader.take(nbytes)
        arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    if reader.pos != len(data):
        raise PersistenceError(f"{len(data) - reader.pos} unexpected trailing bytes in payload")
    return arrays
