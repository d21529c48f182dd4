"""Point-scatterer target chips, geometric shadow masks and K-distributed clutter.

This is a desk-scale stand-in for a CAD-based signature simulator: each
object is a handful of point scattering centres plus a ground footprint
polygon whose down-range sweep gives the shadow.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.ndimage import uniform_filter

from .core import (SHADOW, TARGET, TargetChip, derive_stream, domain_seed, SeedSpec,
                   read_mask, read_raster, write_mask, write_raster)
from .errors import ConfigError, DataIOError, ValidationError
from .sensor import SensorConfig, band_weights

_ANGLE_TOL = 1e-9


# -- geometry helpers --------------------------------------------------------

def polygon_area(poly) -> float:
    p = np.asarray(poly, float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _segments_cross(p1, p2, q1, q2) -> bool:
    d1, d2 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    d3, d4 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0 not in (d1, d2, d3, d4):
        return True

    def on_seg(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    return ((d1 == 0 and on_seg(q1, q2, p1)) or (d2 == 0 and on_seg(q1, q2, p2))
            or (d3 == 0 and on_seg(p1, p2, q1)) or (d4 == 0 and on_seg(p1, p2, q2)))


def is_simple_polygon(poly) -> bool:
    p = [tuple(v) for v in np.asarray(poly, float)]
    n = len(p)
    if n < 3:
        return False
    edges = [(p[i], p[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            # adjacent edges share a vertex by construction
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(*edges[i], *edges[j]):
                return False
    return True


def rasterize_polygon(poly, shape) -> np.ndarray:
    """Boolean mask of pixels whose centre lies inside ``poly`` (even-odd rule)."""
    h, w = shape
    p = np.asarray(poly, float)
    yc, xc = np.mgrid[0:h, 0:w] + 0.5
    inside = np.zeros(shape, bool)
    x0, y0 = p[:, 0], p[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    for ax, ay, bx, by in zip(x0, y0, x1, y1):
        if ay == by:
            continue
        straddle = (ay > yc) != (by > yc)
        xcross = ax + (yc - ay) * (bx - ax) / (by - ay)
        inside ^= straddle & (xc < xcross)
    return inside


def _rotate_points(pts, angle_deg, center):
    a = math.radians(angle_deg % 360.0)
    if a == 0.0:
        return np.array(pts, float)
    c, s = math.cos(a), math.sin(a)
    d = np.asarray(pts, float) - center
    return np.column_stack((center[0] + c * d[:, 0] - s * d[:, 1],
                            center[1] + s * d[:, 0] + c * d[:, 1]))


# -- types -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScattererSet:
    """Point scattering centres plus a ground footprint.

    ``scatterers`` rows are ``(x, y, amplitude, phase)`` in pixels / radians.
    """

    scatterers: np.ndarray
    footprint: np.ndarray
    height_px: float = 0.0

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.scatterers, float))
        f = np.asarray(self.footprint, float)
        if s.shape[0] < 1 or s.shape[1] != 4:
            raise ValidationError("need >= 1 scatterer given as (x, y, amplitude, phase)")
        if (s[:, 2] < 0).any():
            raise ValidationError("scatterer amplitudes must be >= 0")
        if f.ndim != 2 or f.shape[1] != 2 or not is_simple_polygon(f):
            raise ValidationError("footprint must be a simple polygon")
        if self.height_px < 0:
            raise ValidationError("height_px must be >= 0")
        s.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "scatterers", s)
        object.__setattr__(self, "footprint", f)

    def rotated(self, angle_deg: float, center) -> ScattererSet:
        if angle_deg % 360.0 == 0.0:
            return self
        s = self.scatterers.copy()
        s[:, :2] = _rotate_points(s[:, :2], angle_deg, center)
        return replace(self, scatterers=s, footprint=_rotate_points(self.footprint, angle_deg, center))

    def translated(self, dx: float, dy: float) -> ScattererSet:
        s = self.scatterers.copy()
        s[:, 0] += dx
        s[:, 1] += dy
        return replace(self, scatterers=s, footprint=self.footprint + (dx, dy))

    def to_dict(self) -> dict:
        return {"scatterers": self.scatterers.tolist(), "footprint": self.footprint.tolist(),
                "height_px": self.height_px}

    @classmethod
    def from_dict(cls, d) -> ScattererSet:
        return cls(np.array(d["scatterers"], float), np.array(d["footprint"], float),
                   float(d.get("height_px", 0.0)))


@dataclass(frozen=True)
class ClutterConfig:
    mean_intensity: float = 1.0
    texture_shape: float = math.inf
    correlation_px: float = 0.0

    def __post_init__(self):
        if self.texture_shape is None or self.texture_shape == "inf":
            object.__setattr__(self, "texture_shape", math.inf)
        if not self.mean_intensity > 0:
            raise ConfigError("mean_intensity must be > 0")
        if not float(self.texture_shape) > 0:
            raise ConfigError("texture_shape must be > 0")
        if self.correlation_px < 0:
            raise ConfigError("correlation_px must be >= 0")

    def to_dict(self) -> dict:
        shape = None if math.isinf(self.texture_shape) else self.texture_shape
        return {"mean_intensity": self.mean_intensity, "texture_shape": shape,
                "correlation_px": self.correlation_px}

    @classmethod
    def from_dict(cls, d) -> ClutterConfig:
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad clutter config: {exc}") from exc


# -- synthesis ---------------------------------------------------------------

def _band(n, resolution_px, window):
    w = band_weights(n, resolution_px, window)
    idx = np.flatnonzero(w)
    k = np.where(idx >= (n + 1) // 2, idx - n, idx)
    # keep the (signed) frequencies in ascending order
    order = np.argsort(k, kind="stable")
    return idx[order], k[order], w[idx[order]]


def synthesize_signature(scatterers: ScattererSet, chip_size: int, cfg: SensorConfig) -> np.ndarray:
    """Band-limited image of the point scatterers, synthesised in the spectrum."""
    n = int(chip_size)
    if n < 16:
        raise ConfigError(f"chip_size must be >= 16, got {n}")
    s = scatterers.scatterers
    x, y, amp, phase = s.T
    if (x < 0).any() or (y < 0).any() or (x >= n).any() or (y >= n).any():
        raise ConfigError("scatterer outside chip bounds")
    iy, ky, wy = _band(n, cfg.range_resolution_px, cfg.window)
    ix, kx, wx = _band(n, cfg.crossrange_resolution_px, cfg.window)
    coef = amp * np.exp(1j * phase)
    ey = np.exp(-2j * np.pi * np.outer(ky, y) / n) * coef
    ex = np.exp(-2j * np.pi * np.outer(kx, x) / n)
    spec = np.zeros((n, n), complex)
    spec[np.ix_(iy, ix)] = (ey @ ex.T) * np.outer(wy, wx)
    return np.fft.ifft2(spec).astype(np.complex64)


def synthesize_shadow_mask(scatterers: ScattererSet, chip_size: int,
                           azimuth_deg: float = 0.0) -> np.ndarray:
    """Label 1 inside the footprint, 2 where its down-range sweep falls, else 0."""
    n = int(chip_size)
    poly = _rotate_points(scatterers.footprint, azimuth_deg, (n / 2, n / 2))
    if polygon_area(poly) < 1.0:
        raise ConfigError("footprint polygon area below 1 px^2")
    foot = rasterize_polygon(poly, (n, n))
    sweep = np.zeros_like(foot)
    for k in range(1, int(round(scatterers.height_px)) + 1):
        if k >= n:
            break
        sweep[k:] |= foot[:-k]
    mask = np.zeros((n, n), np.uint8)
    mask[sweep & ~foot] = SHADOW
    mask[foot] = TARGET
    return mask


def synthesize_clutter(width: int, height: int, cfg: ClutterConfig,
                       stream: np.random.Generator) -> np.ndarray:
    """K-distributed clutter: circular Gaussian speckle times sqrt(Gamma texture).

    The texture is drawn first, then the real and imaginary speckle planes.
    """
    if width < 64 or height < 64:
        raise ConfigError("clutter dimensions must be >= 64")
    shape = (height, width)
    if math.isinf(cfg.texture_shape):
        texture = np.full(shape, cfg.mean_intensity)
    else:
        nu = cfg.texture_shape
        texture = stream.gamma(nu, cfg.mean_intensity / nu, size=shape)
        size = int(round(cfg.correlation_px))
        if size > 1:
            # wrap keeps the field mean exactly
            texture = uniform_filter(texture, size=size, mode="wrap")
    speckle = (stream.standard_normal(shape) + 1j * stream.standard_normal(shape)) / math.sqrt(2)
    return (np.sqrt(texture) * speckle).astype(np.complex64)


# -- templates and libraries -------------------------------------------------

MSTAR_CLASSES = ("2S1", "BMP2", "BRDM2", "BTR60", "BTR70", "D7", "T62", "T72", "ZIL131", "ZSU23-4")


@dataclass(frozen=True)
class ChipTemplate:
    """An object model centred on the origin.

    When ``object_height_px`` is set the shadow length is derived per
    depression angle as ``object_height_px / tan(depression)``; otherwise the
    scatterer set's own ``height_px`` is used.
    """

    class_name: str
    scatterers: ScattererSet
    object_height_px: float | None = None
    role: str = "target"

    def shadow_length(self, depression_deg: float) -> float:
        if self.object_height_px is None:
            return self.scatterers.height_px
        return self.object_height_px / math.tan(math.radians(depression_deg))


def _box(length, width):
    hl, hw = length / 2, width / 2
    return np.array([(-hw, -hl), (hw, -hl), (hw, hl), (-hw, hl)])


def vehicle_template(class_name: str, seed: int = 0) -> ChipTemplate:
    """Procedural vehicle: a hull rectangle with 12-30 scatterers on and in it."""
    rng = derive_stream(SeedSpec(domain_seed(seed, "vehicle:" + class_name)))
    length = rng.uniform(24, 34)
    width = rng.uniform(11, 15)
    n = int(rng.integers(12, 31))
    pts = rng.uniform(-0.45, 0.45, size=(n, 2)) * (width, length)
    # strong corner reflectors near the hull edges
    n_strong = int(rng.integers(3, 6))
    pts[:n_strong] = rng.choice([-0.42, 0.42], size=(n_strong, 2)) * (width, length)
    amp_db = rng.uniform(26, 32, size=n)
    amp_db[:n_strong] = rng.uniform(34, 40, size=n_strong)
    phase = rng.uniform(0, 2 * np.pi, size=n)
    s = np.column_stack((pts, 10 ** (amp_db / 20), phase))
    return ChipTemplate(class_name, ScattererSet(s, _box(length, width)),
                        object_height_px=rng.uniform(5, 8))


def default_templates(seed: int = 0) -> list[ChipTemplate]:
    return [vehicle_template(name, seed) for name in MSTAR_CLASSES]


def distractor_templates(seed: int = 0) -> list[ChipTemplate]:
    """A country house (few strong wall/corner returns) and a tree (diffuse)."""
    rng = derive_stream(SeedSpec(domain_seed(seed, "distractors")))
    # house: rectangle, bright dihedral lines along two walls
    hw, hl = 16.0, 12.0
    wall = np.linspace(-hw, hw, 9)
    pts = np.concatenate([np.column_stack((wall, np.full(9, hl))),
                          np.column_stack((np.full(5, -hw), np.linspace(-hl, hl, 5))),
                          rng.uniform(-0.8, 0.8, size=(6, 2)) * (hw, hl)])
    amp_db = np.concatenate([rng.uniform(22, 30, 14), rng.uniform(10, 16, 6)])
    house = ScattererSet(np.column_stack((pts, 10 ** (amp_db / 20), rng.uniform(0, 2 * np.pi, 20))),
                         np.array([(-hw, -hl), (hw, -hl), (hw, hl), (-hw, hl)]))
    # tree: round crown, many weak volume scatterers
    theta = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    r = 9.0
    crown = np.column_stack((r * np.cos(theta), r * np.sin(theta)))
    rad = r * np.sqrt(rng.uniform(0, 0.8, 40))
    ang = rng.uniform(0, 2 * np.pi, 40)
    tpts = np.column_stack((rad * np.cos(ang), rad * np.sin(ang)))
    tree = ScattererSet(np.column_stack((tpts, 10 ** (rng.uniform(8, 18, 40) / 20),
                                         rng.uniform(0, 2 * np.pi, 40))), crown)
    return [ChipTemplate("house", house, object_height_px=5.0, role="distractor"),
            ChipTemplate("tree", tree, object_height_px=4.0, role="distractor")]


def azimuth_grid(step_deg: float, sector: Sequence[float] | None = None) -> list[float]:
    """Azimuths for a full turn ``[0, 360)`` or an inclusive ``[lo, hi]`` sector."""
    if not step_deg > 0:
        raise ConfigError(f"azimuth step must be > 0, got {step_deg}")
    if sector is None:
        lo, span, inclusive = 0.0, 360.0, False
    else:
        lo, hi = float(sector[0]), float(sector[1])
        if not 0 <= lo <= hi < 360:
            raise ConfigError(f"sector {sector} must satisfy 0 <= lo <= hi < 360")
        span, inclusive = hi - lo, True
    steps = span / step_deg
    n = round(steps)
    if abs(steps - n) > _ANGLE_TOL * max(1.0, steps):
        raise ConfigError(f"azimuth step {step_deg} does not divide {span} degrees")
    count = n + 1 if inclusive else n
    return [lo + i * step_deg for i in range(count)]


def chip_id(class_name: str, azimuth_deg: float, depression_deg: float) -> str:
    return f"{class_name}_d{depression_deg:g}_a{azimuth_deg:06.2f}"


def iter_chip_poses(templates: Sequence[ChipTemplate], azimuth_step_deg: float,
                    depressions: Sequence[float], sector=None) -> Iterator[tuple]:
    if not depressions:
        raise ConfigError("need at least one depression angle")
    azimuths = azimuth_grid(azimuth_step_deg, sector)
    for tpl in templates:
        for dep in depressions:
            for az in azimuths:
                yield tpl, az, dep


def make_chip(template: ChipTemplate, azimuth_deg: float, depression_deg: float,
              cfg: SensorConfig, chip_size: int = 128) -> TargetChip:
    c = chip_size / 2
    placed = replace(template.scatterers.translated(c, c),
                     height_px=template.shadow_length(depression_deg))
    rotated = placed.rotated(azimuth_deg, (c, c))
    sig = synthesize_signature(rotated, chip_size, cfg)
    mask = synthesize_shadow_mask(rotated, chip_size)
    return TargetChip(sig, mask, template.class_name, azimuth_deg % 360.0, depression_deg,
                      role=template.role, chip_id=chip_id(template.class_name, azimuth_deg,
                                                          depression_deg))


def iter_chip_library(templates, azimuth_step_deg, depressions, cfg: SensorConfig,
                      chip_size: int = 128, sector=None) -> Iterator[TargetChip]:
    for tpl, az, dep in iter_chip_poses(templates, azimuth_step_deg, depressions, sector):
        yield make_chip(tpl, az, dep, cfg, chip_size)


def generate_chip_library(templates, azimuth_step_deg, depressions, cfg: SensorConfig,
                          chip_size: int = 128, sector=None) -> list[TargetChip]:
    """One chip per (template, azimuth, depression).

    A full turn gives ``len(templates) * 360/step * len(depressions)`` chips;
    an inclusive ``sector`` gives ``(hi - lo)/step + 1`` azimuths per object.
    """
    return list(iter_chip_library(templates, azimuth_step_deg, depressions, cfg,
                                  chip_size, sector))


INDEX_NAME = "index.jsonl"


def chip_record(chip: TargetChip) -> dict:
    return {"chip_id": chip.chip_id, "class": chip.class_name, "role": chip.role,
            "azimuth_deg": chip.azimuth_deg, "depression_deg": chip.depression_deg,
            "signature": chip.chip_id + ".cf32", "mask": chip.chip_id + ".sfm"}


def write_chip_library(chips, out_dir) -> int:
    """Write one CF32 + SFM1 per chip and an ``index.jsonl``; return the count."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        index = open(out / INDEX_NAME, "w", encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"{out}: {exc.strerror or exc}") from exc
    count = 0
    with index:
        for chip in chips:
            rec = chip_record(chip)
            write_raster(chip.signature, out / rec["signature"])
            write_mask(chip.shadow_mask, out / rec["mask"])
            index.write(json.dumps(rec) + "\n")
            count += 1
    return count


def read_chip_index(lib_dir) -> list[dict]:
    path = Path(lib_dir) / INDEX_NAME
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataIOError(f"{path}: {exc.strerror or exc}") from exc
    return [json.loads(line) for line in lines if line.strip()]


def load_chip(lib_dir, record: dict) -> TargetChip:
    lib = Path(lib_dir)
    return TargetChip(read_raster(lib / record["signature"]), read_mask(lib / record["mask"]),
                      record["class"], float(record["azimuth_deg"]),
                      float(record["depression_deg"]), record.get("role", "target"),
                      record["chip_id"])
