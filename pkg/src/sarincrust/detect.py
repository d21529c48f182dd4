"""Cell-averaging CFAR baseline detector producing scored boxes."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .core import BBox
from .errors import ConfigError
from .metrics import Prediction


@dataclass(frozen=True)
class CfarConfig:
    guard_px: int = 4
    train_px: int = 8
    threshold_factor: float = 3.0
    min_area_px: int = 4
    merge_gap_px: int = 2

    def __post_init__(self):
        if self.train_px <= 0 or self.guard_px < 0:
            raise ConfigError("need train_px > 0 and guard_px >= 0")
        if not self.threshold_factor > 1:
            raise ConfigError("threshold_factor must be > 1")
        if self.min_area_px < 1 or self.merge_gap_px < 0:
            raise ConfigError("need min_area_px >= 1 and merge_gap_px >= 0")

    @property
    def n_train_cells(self) -> int:
        outer = 2 * (self.guard_px + self.train_px) + 1
        inner = 2 * self.guard_px + 1
        return outer * outer - inner * inner

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> CfarConfig:
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad CFAR config: {exc}") from exc


def threshold_factor_for_pfa(pfa: float, n_train: int) -> float:
    """CA-CFAR multiplier on the training mean for exponential intensity:
    ``Pfa = (1 + alpha/N) ** -N``."""
    return n_train * (pfa ** (-1.0 / n_train) - 1.0)


def intensity(scene) -> np.ndarray:
    """Power image from a complex raster, or from an 8-bit quarter-power display."""
    a = np.asarray(scene)
    if a.ndim != 2:
        raise ConfigError("scene must be 2-D")
    if np.iscomplexobj(a):
        return a.real.astype(np.float64) ** 2 + a.imag.astype(np.float64) ** 2
    # the display value is power ** 0.25
    return a.astype(np.float64) ** 4


def training_mean(power: np.ndarray, cfg: CfarConfig) -> np.ndarray:
    outer = 2 * (cfg.guard_px + cfg.train_px) + 1
    inner = 2 * cfg.guard_px + 1
    big = ndimage.uniform_filter(power, size=outer, mode="reflect") * (outer * outer)
    small = ndimage.uniform_filter(power, size=inner, mode="reflect") * (inner * inner)
    return np.maximum(big - small, 0.0) / cfg.n_train_cells


def _check_size(shape, cfg):
    span = 2 * (cfg.guard_px + cfg.train_px) + 1
    if min(shape) <= span:
        raise ConfigError(f"scene {shape} too small for a {span}-pixel CFAR window")


def cfar_mask(scene, cfg: CfarConfig) -> tuple[np.ndarray, np.ndarray]:
    """Return (flagged cells, exceedance ratio ``I / (alpha * mean)``)."""
    power = intensity(scene)
    _check_size(power.shape, cfg)
    thresh = cfg.threshold_factor * training_mean(power, cfg)
    flagged = power > thresh
    ratio = np.zeros_like(power)
    np.divide(power, thresh, out=ratio, where=flagged)
    return flagged, ratio


def _disk(radius: int) -> np.ndarray:
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    return xx * xx + yy * yy <= radius * radius


def cfar_detect(scene, cfg: CfarConfig = CfarConfig(), scene_id: str = "") -> list[Prediction]:
    """Detect bright objects and score them by peak exceedance.

    Flagged cells are closed with a disk of radius ``merge_gap_px``, grouped
    into 8-connected components and filtered by ``min_area_px``.  Confidence
    is ``1 - exp(-(peak_ratio - 1))``.
    """
    flagged, ratio = cfar_mask(scene, cfg)
    closed = flagged
    r = cfg.merge_gap_px
    if r > 0 and flagged.any():
        padded = np.pad(flagged, r)
        closed = ndimage.binary_closing(padded, structure=_disk(r))[r:-r, r:-r] | flagged
    labels, n = ndimage.label(closed, structure=np.ones((3, 3), bool))
    if n == 0:
        return []
    index = np.arange(1, n + 1)
    areas = ndimage.sum_labels(closed, labels, index)
    peaks = ndimage.maximum(ratio, labels, index)
    preds = []
    for k, sl in enumerate(ndimage.find_objects(labels)):
        if areas[k] < cfg.min_area_px or peaks[k] <= 1.0:
            continue
        conf = float(np.clip(1.0 - math.exp(-(peaks[k] - 1.0)), 0.0, 1.0))
        box = BBox(sl[1].start, sl[0].start, sl[1].stop, sl[0].stop)
        preds.append(Prediction(scene_id, box, conf))
    return preds
