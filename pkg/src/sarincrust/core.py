"""Shared types, the seeding contract and the binary raster formats.

Rasters are plain 2-D numpy arrays: ``complex64`` for SAR images, ``uint8``
for masks and display images.  Index order is ``[y, x]`` with ``x`` the
cross-range column and ``y`` the range row, origin top-left.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataIOError, FormatError, ValidationError

ComplexRaster = np.ndarray
Mask = np.ndarray

BACKGROUND, TARGET, SHADOW = 0, 1, 2

RASTER_MAGIC = b"SFC1"
MASK_MAGIC = b"SFM1"
_HEADER = struct.Struct("<4sQQ")
# Anything beyond 2**32 pixels is certainly a corrupt header.
_MAX_PIXELS = 1 << 32

_MASK64 = (1 << 64) - 1


def as_raster(data) -> ComplexRaster:
    """Coerce ``data`` to a finite 2-D complex64 array (copying only if needed)."""
    arr = np.asarray(data)
    if arr.ndim != 2 or arr.size == 0:
        raise ValidationError(f"raster must be a non-empty 2-D array, got shape {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype=np.complex64)
    if not np.isfinite(arr.view(np.float32)).all():
        raise ValidationError("raster contains NaN or Inf samples")
    return arr


def as_mask(labels) -> Mask:
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValidationError(f"mask must be 2-D, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() > SHADOW):
        raise ValidationError("mask labels must lie in {0, 1, 2}")
    return np.ascontiguousarray(arr, dtype=np.uint8)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, half-open: ``[x_min, x_max) x [y_min, y_max)``."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValidationError(f"degenerate box {self}")
        if min(self.x_min, self.y_min) < 0:
            raise ValidationError(f"negative box coordinate {self}")

    @property
    def width(self):
        return self.x_max - self.x_min

    @property
    def height(self):
        return self.y_max - self.y_min

    @property
    def area(self):
        return self.width * self.height

    def translate(self, dx, dy) -> BBox:
        return BBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def intersection_area(self, other: BBox):
        w = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        h = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        if w <= 0 or h <= 0:
            return 0
        return w * h

    def contains(self, other: BBox) -> bool:
        return (self.x_min <= other.x_min and self.y_min <= other.y_min
                and other.x_max <= self.x_max and other.y_max <= self.y_max)

    def as_dict(self) -> dict:
        return {"x_min": self.x_min, "y_min": self.y_min,
                "x_max": self.x_max, "y_max": self.y_max}

    @classmethod
    def from_dict(cls, d) -> BBox:
        return cls(d["x_min"], d["y_min"], d["x_max"], d["y_max"])


@dataclass(frozen=True, eq=False)
class TargetChip:
    """A target (or distractor) signature paired with its label mask.

    ``shadow_mask`` holds label 1 on the object footprint and 2 on its shadow.
    """

    signature: ComplexRaster
    shadow_mask: Mask
    class_name: str
    azimuth_deg: float = 0.0
    depression_deg: float = 15.0
    role: str = "target"
    chip_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "signature", as_raster(self.signature))
        object.__setattr__(self, "shadow_mask", as_mask(self.shadow_mask))
        if self.signature.shape != self.shadow_mask.shape:
            raise ValidationError(
                f"signature {self.signature.shape} and mask {self.shadow_mask.shape} differ")
        if not 0.0 <= self.azimuth_deg < 360.0:
            raise ValidationError(f"azimuth {self.azimuth_deg} outside [0, 360)")
        if self.role not in ("target", "distractor"):
            raise ValidationError(f"unknown role {self.role!r}")

    @property
    def shape(self):
        return self.signature.shape

    def with_signature(self, signature) -> TargetChip:
        return TargetChip(signature, self.shadow_mask, self.class_name, self.azimuth_deg,
                          self.depression_deg, self.role, self.chip_id)


# -- seeding -----------------------------------------------------------------

def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix64(a: int, b: int) -> int:
    """Order-sensitive 64-bit mix of two unsigned integers."""
    return _splitmix64(_splitmix64(a & _MASK64) ^ _splitmix64((b ^ 0xD1B54A32D192ED03) & _MASK64))


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_index"):
            v = getattr(self, name)
            if not 0 <= v <= _MASK64:
                raise ValidationError(f"{name} must be a 64-bit unsigned integer, got {v}")

    def as_dict(self) -> dict:
        return {"master": self.master_seed, "stream": self.stream_index}


def derive_stream(seed: SeedSpec) -> np.random.Generator:
    """Counter-based stream: a pure function of both seed fields.

    Units of work can therefore be generated in any order, or in parallel.
    """
    return np.random.Generator(np.random.PCG64(mix64(seed.master_seed, seed.stream_index)))


def domain_seed(master_seed: int, domain: str) -> int:
    """Master seed for a named sub-domain (backgrounds, chips, ...)."""
    tag = int.from_bytes(hashlib.blake2b(domain.encode(), digest_size=8).digest(), "little")
    return mix64(master_seed, tag)


# -- binary formats ----------------------------------------------------------

def _read_header(buf: bytes, magic: bytes, path) -> tuple[int, int]:
    if len(buf) < _HEADER.size:
        raise DataIOError(f"{path}: file shorter than header")
    got, width, height = _HEADER.unpack_from(buf)
    if got != magic:
        raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
    if width == 0 or height == 0 or width * height > _MAX_PIXELS:
        raise FormatError(f"{path}: implausible dimensions {width}x{height}")
    return width, height


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataIOError(f"{path}: {exc.strerror or exc}") from exc


def _write_bytes(path, payload: bytes) -> None:
    try:
        Path(path).write_bytes(payload)
    except OSError as exc:
        raise DataIOError(f"{path}: {exc.strerror or exc}") from exc


def raster_bytes(raster) -> bytes:
    arr = as_raster(raster)
    h, w = arr.shape
    return _HEADER.pack(RASTER_MAGIC, w, h) + arr.astype("<c8", copy=False).tobytes()


def write_raster(raster, path) -> None:
    _write_bytes(path, raster_bytes(raster))


def read_raster(path) -> ComplexRaster:
    buf = _read_bytes(path)
    w, h = _read_header(buf, RASTER_MAGIC, path)
    payload = memoryview(buf)[_HEADER.size:]
    if len(payload) != w * h * 8:
        raise DataIOError(f"{path}: payload is {len(payload)} bytes, header implies {w * h * 8}")
    arr = np.frombuffer(payload, dtype="<c8").reshape(h, w).astype(np.complex64)
    if not np.isfinite(arr.view(np.float32)).all():
        raise FormatError(f"{path}: non-finite samples")
    return arr


def mask_bytes(mask) -> bytes:
    arr = as_mask(mask)
    h, w = arr.shape
    return _HEADER.pack(MASK_MAGIC, w, h) + arr.tobytes()


def write_mask(mask, path) -> None:
    _write_bytes(path, mask_bytes(mask))


def read_mask(path) -> Mask:
    buf = _read_bytes(path)
    w, h = _read_header(buf, MASK_MAGIC, path)
    payload = memoryview(buf)[_HEADER.size:]
    if len(payload) != w * h:
        raise DataIOError(f"{path}: payload is {len(payload)} bytes, header implies {w * h}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()
    if arr.max() > SHADOW:
        raise FormatError(f"{path}: mask label {arr.max()} outside {{0, 1, 2}}")
    return arr


def pgm_bytes(image) -> bytes:
    arr = np.asarray(image)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise ValidationError("PGM image must be a 2-D uint8 array")
    h, w = arr.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(arr).tobytes()


def write_pgm8(image, path) -> None:
    _write_bytes(path, pgm_bytes(image))


def _pgm_tokens(buf: bytes, count: int):
    """Yield the first ``count`` header tokens and the offset just past them."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    return tokens, pos + 1


def read_pgm8(path) -> np.ndarray:
    buf = _read_bytes(path)
    tokens, offset = _pgm_tokens(buf, 4)
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    if maxval != 255:
        raise FormatError(f"{path}: maxval {maxval} unsupported, expected 255")
    payload = buf[offset:]
    if len(payload) != w * h:
        raise DataIOError(f"{path}: payload is {len(payload)} bytes, header implies {w * h}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()
