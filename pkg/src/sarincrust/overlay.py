"""Incrustation of target chips into clutter backgrounds, with auto-labelling.

The compositing order is fixed:

1. cut the background out under every shadow mask,
2. add complex thermal noise to the cut background and blur it with the
   sensor function,
3. paste the noisy, blurred shadow pixels back into a fresh copy of the
   original background,
4. add the sensor-filtered target signatures over their chip rectangles
   (measured chips replace pixels instead, since they already hold clutter),
5. leave the 8-bit display mapping to :func:`sensor.quarter_power_lut`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import BBox, SHADOW, TARGET, SeedSpec, TargetChip, as_mask, as_raster
from .errors import AnnotationError, ConfigError, InternalError, PlacementError, ValidationError
from .sensor import AugmentationDraw, SensorConfig, add_thermal_noise, apply_sensor_function

ROLES = ("target", "distractor")


@dataclass(frozen=True)
class Placement:
    chip_index: int
    origin: tuple[int, int]
    chip_rect: BBox

    @property
    def slices(self):
        r = self.chip_rect
        return slice(int(r.y_min), int(r.y_max)), slice(int(r.x_min), int(r.x_max))


@dataclass(frozen=True)
class LabeledBox:
    bbox: BBox
    class_name: str
    role: str = "target"

    def to_json(self) -> dict:
        return {**self.bbox.as_dict(), "class": self.class_name, "role": self.role}

    @classmethod
    def from_json(cls, d) -> LabeledBox:
        role = d.get("role", "target")
        if role not in ROLES:
            raise ValidationError(f"unknown role {role!r}")
        return cls(BBox.from_dict(d), d.get("class", ""), role)


@dataclass
class SceneAnnotation:
    scene_id: str
    boxes: list[LabeledBox] = field(default_factory=list)
    seed: SeedSpec | None = None
    draw: AugmentationDraw | None = None
    sensor: SensorConfig | None = None
    assets: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"scene_id": self.scene_id,
               "seed": self.seed.as_dict() if self.seed else None,
               "sensor": self.sensor.to_dict() if self.sensor else None,
               "boxes": [b.to_json() for b in self.boxes]}
        if self.draw is not None:
            out["augmentation"] = self.draw.as_dict()
        if self.assets:
            out["assets"] = self.assets
        return out

    @classmethod
    def from_json(cls, d) -> SceneAnnotation:
        seed = d.get("seed")
        sensor = d.get("sensor")
        draw = d.get("augmentation")
        return cls(
            scene_id=str(d["scene_id"]),
            boxes=[LabeledBox.from_json(b) for b in d.get("boxes", [])],
            seed=SeedSpec(seed["master"], seed["stream"]) if seed else None,
            draw=AugmentationDraw(**draw) if draw else None,
            sensor=SensorConfig.from_dict(sensor) if sensor else None,
            assets=d.get("assets", {}),
        )


def crop_background(bg, size: int = 640, stream: np.random.Generator | None = None) -> np.ndarray:
    """Uniformly random ``size`` x ``size`` crop (x offset drawn before y)."""
    bg = as_raster(bg)
    h, w = bg.shape
    if h < size or w < size:
        raise ConfigError(f"background {w}x{h} smaller than crop size {size}")
    x = int(stream.integers(0, w - size + 1))
    y = int(stream.integers(0, h - size + 1))
    return bg[y:y + size, x:x + size].copy()


def _ceil(x: float) -> int:
    # guard against 0.01 * 300 == 3.0000000000000004
    return math.ceil(round(x, 9))


def bright_set(signature, bright_fraction: float, min_points: int = 8) -> np.ndarray:
    """Flat indices of the brightest pixels, strongest first, ties by row-major index."""
    mag = np.abs(np.asarray(signature)).ravel()
    nonzero = int(np.count_nonzero(mag))
    if nonzero == 0:
        raise ValidationError("chip has no nonzero pixel")
    size = min(nonzero, max(min_points, _ceil(bright_fraction * nonzero)))
    return np.argsort(-mag, kind="stable")[:size]


def dropout_bright_points(chip: TargetChip, bright_fraction: float, dropout_share: float,
                          stream: np.random.Generator, min_points: int = 8) -> TargetChip:
    """Zero a random share of the chip's brightest pixels.

    The bright set is the top ``bright_fraction`` of nonzero pixels by
    magnitude, but at least ``min_points`` (capped by the nonzero count).
    """
    if not 0 <= dropout_share <= 1:
        raise ConfigError("dropout_share must lie in [0, 1]")
    bright = bright_set(chip.signature, bright_fraction, min_points)
    k = _ceil(dropout_share * len(bright))
    if k == 0:
        return chip
    drop = stream.choice(bright, size=k, replace=False)
    sig = chip.signature.copy().ravel()
    sig[drop] = 0
    return chip.with_signature(sig.reshape(chip.shape))


def _scene_shape(scene_size):
    if np.isscalar(scene_size):
        return int(scene_size), int(scene_size)
    h, w = scene_size
    return int(h), int(w)


def place_targets(scene_size, chips: Sequence, n_targets: int, stream: np.random.Generator,
                  max_attempts: int = 100) -> list[Placement]:
    """Rejection-sample non-overlapping positions for ``chips[:n_targets]``.

    ``scene_size`` is an int (square) or ``(height, width)``; ``chips`` may
    hold :class:`TargetChip` objects or plain ``(height, width)`` shapes.
    Overlap with background obstacles is deliberately allowed.

    Raises:
        PlacementError: a chip found no free spot within ``max_attempts``.
    """
    h, w = _scene_shape(scene_size)
    if n_targets < 1 or n_targets > len(chips):
        raise ConfigError(f"n_targets={n_targets} needs 1 <= n <= {len(chips)} chips")
    placed: list[Placement] = []
    for i in range(n_targets):
        ch, cw = chips[i].shape if hasattr(chips[i], "shape") else chips[i]
        if ch > h or cw > w:
            raise ConfigError(f"chip {i} ({cw}x{ch}) does not fit a {w}x{h} scene")
        for _ in range(max_attempts):
            x = int(stream.integers(0, w - cw + 1))
            y = int(stream.integers(0, h - ch + 1))
            rect = BBox(x, y, x + cw, y + ch)
            if all(rect.intersection_area(p.chip_rect) == 0 for p in placed):
                placed.append(Placement(i, (x, y), rect))
                break
        else:
            raise PlacementError(f"chip {i}: no free position after {max_attempts} attempts")
    return placed


def compute_bbox(chip, threshold_ratio: float = 0.1) -> BBox:
    """Tight box over pixels with ``|z| >= threshold_ratio * max|z|``.

    Accepts a :class:`TargetChip` (signature only, the shadow is ignored) or
    a bare complex array.
    """
    sig = chip.signature if isinstance(chip, TargetChip) else np.asarray(chip)
    mag = np.abs(sig)
    peak = mag.max() if mag.size else 0
    if peak <= 0:
        raise AnnotationError("empty target support: cannot derive a bounding box")
    return mask_bbox(mag >= threshold_ratio * peak)


def mask_bbox(support) -> BBox:
    rows = np.flatnonzero(support.any(axis=1))
    cols = np.flatnonzero(support.any(axis=0))
    if rows.size == 0:
        raise AnnotationError("empty target support: cannot derive a bounding box")
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


@dataclass
class _Item:
    slices: tuple
    shadow: np.ndarray            # bool, chip-sized
    contribution: np.ndarray      # complex64, chip-sized
    replace_where: np.ndarray | None = None  # bool; None means complex addition


def _incrust(bg, items: Sequence[_Item], cfg: SensorConfig, stream, cut_background=True):
    bg = as_raster(bg)
    scene_shadow = np.zeros(bg.shape, bool)
    for it in items:
        region = scene_shadow[it.slices]
        if region.shape != it.shadow.shape or it.contribution.shape != it.shadow.shape:
            raise InternalError(f"chip {it.shadow.shape} does not match its slot {region.shape}")
        region |= it.shadow

    out = bg.copy()
    if scene_shadow.any():
        cut = bg.copy()
        if cut_background:
            cut[scene_shadow] = 0                                              # step 1
        noisy = apply_sensor_function(add_thermal_noise(cut, cfg.noise_sigma, stream), cfg)  # 2
        out[scene_shadow] = noisy[scene_shadow]                                # step 3
    for it in items:                                                           # step 4
        if it.replace_where is None:
            out[it.slices] += it.contribution
        else:
            out[it.slices][it.replace_where] = it.contribution[it.replace_where]
    return out


def overlay_scene(bg_crop, placed: Sequence[tuple[TargetChip, Placement]], cfg: SensorConfig,
                  stream: np.random.Generator, *, scene_id: str = "", seed: SeedSpec | None = None,
                  draw: AugmentationDraw | None = None, threshold_ratio: float = 0.1,
                  cut_background: bool = True) -> tuple[np.ndarray, SceneAnnotation]:
    """Composite synthetic chips into ``bg_crop`` and label them.

    Each annotation box is :func:`compute_bbox` of the sensor-filtered
    signature as rendered, translated to scene coordinates.
    ``cut_background=False`` skips step 1 and exists only for diagnostics.
    """
    bg = as_raster(bg_crop)
    h, w = bg.shape
    scene_rect = BBox(0, 0, w, h)
    items, boxes = [], []
    for chip, pl in placed:
        if not scene_rect.contains(pl.chip_rect):
            raise InternalError(f"placement {pl} leaves the {w}x{h} scene")
        rendered = apply_sensor_function(chip.signature, cfg)
        items.append(_Item(pl.slices, chip.shadow_mask == SHADOW, rendered))
        x, y = pl.origin
        box = compute_bbox(rendered, threshold_ratio).translate(x, y)
        boxes.append(LabeledBox(box, chip.class_name, chip.role))
    scene = _incrust(bg, items, cfg, stream, cut_background)
    return scene, SceneAnnotation(scene_id, boxes, seed, draw, cfg)


def overlay_measured_scene(bg, placed: Sequence[tuple[np.ndarray, np.ndarray, Placement]],
                           cfg: SensorConfig, stream: np.random.Generator, *,
                           class_names: Sequence[str] | None = None, scene_id: str = "",
                           seed: SeedSpec | None = None,
                           draw: AugmentationDraw | None = None) -> tuple[np.ndarray, SceneAnnotation]:
    """Composite measured chips given 3-class segmentations.

    Target-labelled pixels replace scene pixels; boxes are the tight box of
    each segmentation's target label.
    """
    items, boxes = [], []
    for k, (chip_img, seg, pl) in enumerate(placed):
        chip_img, seg = as_raster(chip_img), as_mask(seg)
        if seg.shape != chip_img.shape:
            raise ValidationError(f"segmentation {seg.shape} != chip {chip_img.shape}")
        target = seg == TARGET
        items.append(_Item(pl.slices, seg == SHADOW, chip_img, target))
        if target.any():
            name = class_names[k] if class_names else ""
            boxes.append(LabeledBox(mask_bbox(target).translate(*pl.origin), name, "target"))
    scene = _incrust(bg, items, cfg, stream)
    return scene, SceneAnnotation(scene_id, boxes, seed, draw, cfg)


def composite_measured(chip_img, seg, bg, origin, cfg: SensorConfig,
                       stream: np.random.Generator) -> np.ndarray:
    """The compositing half of :func:`overlay_measured_chip` (no labelling)."""
    chip_img = as_raster(chip_img)
    x, y = origin
    ch, cw = chip_img.shape
    pl = Placement(0, (x, y), BBox(x, y, x + cw, y + ch))
    h, w = np.shape(bg)
    if not BBox(0, 0, w, h).contains(pl.chip_rect):
        raise ConfigError(f"chip at {origin} leaves the {w}x{h} background")
    scene, _ = overlay_measured_scene(bg, [(chip_img, seg, pl)], cfg, stream)
    return scene


def overlay_measured_chip(chip_img, seg, bg, origin, cfg: SensorConfig,
                          stream: np.random.Generator) -> tuple[np.ndarray, BBox]:
    """Insert one measured chip at ``origin`` (top-left x, y).

    Raises:
        AnnotationError: ``seg`` has no target-labelled pixel.
    """
    seg = as_mask(seg)
    if not (seg == TARGET).any():
        raise AnnotationError("segmentation has no target pixel")
    scene = composite_measured(chip_img, seg, bg, origin, cfg, stream)
    return scene, mask_bbox(seg == TARGET).translate(*origin)
