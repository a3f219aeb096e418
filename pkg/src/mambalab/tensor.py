"""Dense tensor carrier, SplitMix64 RNG, and the STNS / PGM file formats.

The numerical modules work on plain ``numpy`` arrays; :class:`Tensor` is the
immutable, validated value that crosses file boundaries.
"""
from __future__ import annotations

import math
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BadMagicError,
    DimsOverflowError,
    InvariantViolation,
    PgmFormatError,
    TruncatedPayloadError,
    UnsupportedFormatError,
)

MAGIC = b"STNS"
VERSION = 1
DTYPE_F64 = 1
_HEADER = struct.Struct("<4sBBBB")
_MAX_ELEMENTS = (1 << 62) // 8

_MASK64 = (1 << 64) - 1


class Tensor:
    """Row-major float64 array with positive extents. Immutable."""

    __slots__ = ("_dims", "_data")

    def __init__(self, dims: Sequence[int], data):
        dims = tuple(int(d) for d in dims)
        if any(d <= 0 for d in dims):
            raise InvariantViolation(f"dims must be positive, got {dims}")
        flat = np.array(data, dtype=np.float64).reshape(-1)
        if flat.size != math.prod(dims):
            raise InvariantViolation(
                f"product(dims)={math.prod(dims)} but data has {flat.size} values"
            )
        flat.flags.writeable = False
        self._dims = dims
        self._data = flat

    @classmethod
    def from_array(cls, arr) -> Tensor:
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr.shape, arr.reshape(-1))

    @property
    def dims(self) -> tuple[int, ...]:
        return self._dims

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def rank(self) -> int:
        return len(self._dims)

    def array(self) -> np.ndarray:
        """Read-only view shaped as ``dims``."""
        return self._data.reshape(self._dims)

    def index(self, *idx: int) -> int:
        lin = 0
        for i, d in zip(idx, self._dims, strict=True):
            if not 0 <= i < d:
                raise IndexError(idx)
            lin = lin * d + i
        return lin

    def __getitem__(self, idx) -> float:
        if not isinstance(idx, tuple):
            idx = (idx,)
        return float(self._data[self.index(*idx)])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return self._dims == other._dims and self._data.tobytes() == other._data.tobytes()

    def __hash__(self):
        return hash((self._dims, self._data.tobytes()))

    def __repr__(self) -> str:
        return f"Tensor(dims={list(self._dims)})"


def _as_tensor(t) -> Tensor:
    return t if isinstance(t, Tensor) else Tensor.from_array(t)


def tensor_write(t, path) -> None:
    t = _as_tensor(t)
    if t.rank > 255:
        raise InvariantViolation("rank exceeds 255")
    if any(d >= 1 << 32 for d in t.dims):
        raise DimsOverflowError(f"extent does not fit u32: {t.dims}")
    buf = bytearray(_HEADER.pack(MAGIC, VERSION, DTYPE_F64, t.rank, 0))
    buf += struct.pack(f"<{t.rank}I", *t.dims)
    buf += t.data.astype("<f8").tobytes()
    Path(path).write_bytes(bytes(buf))


def tensor_read(path) -> Tensor:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError("file shorter than header")
    magic, version, dtype, rank, _pad = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise BadMagicError(f"expected {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise UnsupportedFormatError(f"version {version}")
    if dtype != DTYPE_F64:
        raise UnsupportedFormatError(f"dtype {dtype}")
    off = _HEADER.size
    if len(raw) < off + 4 * rank:
        raise TruncatedPayloadError("dims block truncated")
    dims = struct.unpack_from(f"<{rank}I", raw, off)
    off += 4 * rank
    if any(d == 0 for d in dims):
        raise InvariantViolation(f"zero extent in {dims}")
    count = math.prod(dims)
    if count > _MAX_ELEMENTS:
        raise DimsOverflowError(f"dims {dims} describe {count} elements")
    need = off + 8 * count
    if len(raw) < need:
        raise TruncatedPayloadError(f"payload needs {8 * count} bytes, have {len(raw) - off}")
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=off).astype(np.float64)
    return Tensor(dims, data)


def _pgm_tokens(raw: bytes):
    """Yield (token, end_offset) for the first four header tokens, skipping comments."""
    pos = 0
    n = len(raw)
    for _ in range(4):
        while pos < n:
            c = raw[pos : pos + 1]
            if c == b"#":
                while pos < n and raw[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < n and not raw[pos : pos + 1].isspace() and raw[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PgmFormatError("truncated header")
        yield raw[start:pos], pos


def pgm_read(path) -> Tensor:
    """Read a binary P5 greymap (maxval 255) into a (1, H, W) tensor in [0, 1]."""
    raw = Path(path).read_bytes()
    tokens = list(_pgm_tokens(raw))
    if tokens[0][0] != b"P5":
        raise PgmFormatError(f"not a P5 file: {tokens[0][0]!r}")
    try:
        width, height, maxval = (int(tok) for tok, _ in tokens[1:])
    except ValueError as exc:
        raise PgmFormatError("non-numeric header field") from exc
    if maxval != 255:
        raise PgmFormatError(f"maxval must be 255, got {maxval}")
    if width <= 0 or height <= 0:
        raise PgmFormatError("empty image")
    start = tokens[-1][1] + 1  # single whitespace byte after maxval
    pixels = raw[start : start + width * height]
    if len(pixels) != width * height:
        raise PgmFormatError("pixel data truncated")
    arr = np.frombuffer(pixels, dtype=np.uint8).astype(np.float64) / 255.0
    return Tensor((1, height, width), arr)


def to_bytes_255(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] to 0..255 rounding half up."""
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
        raise InvariantViolation("PGM values must lie in [0, 1]")
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def pgm_write(t, path) -> None:
    arr = _as_tensor(t).array()
    if arr.ndim == 3:
        if arr.shape[0] != 1:
            raise InvariantViolation("PGM needs a single channel")
        arr = arr[0]
    elif arr.ndim != 2:
        raise InvariantViolation(f"PGM needs (1,H,W) or (H,W), got {arr.shape}")
    h, w = arr.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + to_bytes_255(arr).tobytes())


class Rng:
    """SplitMix64 stream. Single owner; use :meth:`clone` to fork."""

    GAMMA = 0x9E3779B97F4A7C15

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def clone(self) -> Rng:
        return Rng(self.state)

    def next_u64(self) -> int:
        self.state = (self.state + self.GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low=0.0, high=1.0, size=None):
        if size is None:
            return low + (high - low) * self.random()
        n = math.prod(np.atleast_1d(size))
        vals = np.fromiter((self.random() for _ in range(n)), dtype=np.float64, count=n)
        return (low + (high - low) * vals).reshape(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        # Box-Muller, one value per pair of uniforms so the stream position is shape-independent
        def one():
            u1 = 1.0 - self.random()
            u2 = self.random()
            return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

        if size is None:
            return loc + scale * one()
        n = math.prod(np.atleast_1d(size))
        vals = np.fromiter((one() for _ in range(n)), dtype=np.float64, count=n)
        return (loc + scale * vals).reshape(size)

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in [low, high)."""
        span = high - low
        if span <= 0:
            raise ValueError("empty range")
        return low + self.next_u64() % span
