"""Sensor function: band limiting, spectral windowing, thermal noise, display LUT."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.fft
from scipy.signal import windows as sp_windows

from .core import as_raster
from .errors import ConfigError

WINDOW_KINDS = ("rectangular", "hamming", "taylor")


@dataclass(frozen=True)
class Window:
    kind: str = "taylor"
    nbar: int = 4
    sidelobe_db: float = 35.0

    def __post_init__(self):
        if self.kind not in WINDOW_KINDS:
            raise ConfigError(f"unknown window kind {self.kind!r}")
        if self.kind == "taylor":
            if self.sidelobe_db <= 0:
                raise ConfigError("taylor window needs sidelobe_db > 0")
            if self.nbar < 1:
                raise ConfigError("taylor window needs nbar >= 1")

    def to_json(self):
        if self.kind == "taylor":
            return {"kind": "taylor", "nbar": self.nbar, "sidelobe_db": self.sidelobe_db}
        return self.kind

    @classmethod
    def from_json(cls, obj) -> Window:
        if isinstance(obj, Window):
            return obj
        if isinstance(obj, str):
            return cls(obj)
        if isinstance(obj, dict):
            try:
                return cls(**obj)
            except TypeError as exc:
                raise ConfigError(f"bad window spec {obj!r}") from exc
        raise ConfigError(f"bad window spec {obj!r}")


DEFAULT_WINDOW = Window("taylor", 4, 35.0)


def make_window(kind, length: int) -> np.ndarray:
    """Symmetric taper of ``length`` samples, peak-normalised to 1.

    Args:
        kind: a :class:`Window`, a kind name, or its JSON form.
        length: number of samples, at least 1.
    """
    win = Window.from_json(kind)
    if length < 1:
        raise ConfigError(f"window length must be >= 1, got {length}")
    if win.kind == "rectangular":
        w = np.ones(length)
    elif win.kind == "hamming":
        w = sp_windows.hamming(length, sym=True)
    else:
        w = sp_windows.taylor(length, nbar=win.nbar, sll=win.sidelobe_db, norm=False, sym=True)
    return w / w.max()


@dataclass(frozen=True)
class SensorConfig:
    range_resolution_px: float = 1.0
    crossrange_resolution_px: float = 1.0
    window: Window = DEFAULT_WINDOW
    noise_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "window", Window.from_json(self.window))
        if self.range_resolution_px < 1.0 or self.crossrange_resolution_px < 1.0:
            raise ConfigError("resolutions must be >= 1 pixel")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")

    def to_dict(self) -> dict:
        return {
            "range_resolution_px": self.range_resolution_px,
            "crossrange_resolution_px": self.crossrange_resolution_px,
            "window": self.window.to_json(),
            "noise_sigma": self.noise_sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SensorConfig:
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad sensor config: {exc}") from exc


def band_weights(n: int, resolution_px: float, window) -> np.ndarray:
    """1-D spectral weights in FFT bin order for an ``n``-point axis.

    The retained band holds ``round(n / resolution_px)`` bins centred on DC;
    the window spans exactly those bins.
    """
    m = int(np.clip(round(n / resolution_px), 1, n))
    k = np.arange(-(m // 2), m - m // 2)
    out = np.zeros(n)
    out[k % n] = make_window(window, m)
    return out


@lru_cache(maxsize=64)
def _spectral_weights(shape, rr, rc, window) -> np.ndarray:
    h, w = shape
    weights = np.outer(band_weights(h, rr, window), band_weights(w, rc, window))
    weights.setflags(write=False)
    return weights


def spectral_weights(shape, cfg: SensorConfig) -> np.ndarray:
    """2-D separable weight field (rows follow range, columns cross-range)."""
    return _spectral_weights(tuple(shape), cfg.range_resolution_px,
                             cfg.crossrange_resolution_px, cfg.window)


def apply_sensor_function(img, cfg: SensorConfig) -> np.ndarray:
    img = as_raster(img)
    if min(img.shape) < 4:
        raise ConfigError(f"image {img.shape} too small for the sensor function")
    spec = scipy.fft.fft2(img)
    spec *= spectral_weights(img.shape, cfg).astype(np.float32)
    return scipy.fft.ifft2(spec).astype(np.complex64, copy=False)


def add_thermal_noise(img, sigma: float, stream: np.random.Generator) -> np.ndarray:
    """Add circular complex Gaussian noise, ``sigma`` per component.

    The real plane is drawn before the imaginary plane.
    """
    img = as_raster(img)
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    if sigma == 0:
        return img.copy()
    re = stream.standard_normal(img.shape, dtype=np.float32)
    im = stream.standard_normal(img.shape, dtype=np.float32)
    noise = np.empty(img.shape, np.complex64)
    noise.real = re
    noise.imag = im
    noise *= np.float32(sigma)
    return img + noise


def quarter_power_lut(img, scale_percentile: float = 99.5) -> np.ndarray:
    """8-bit display of ``(|z|**2) ** 0.25`` scaled so the percentile maps to 255."""
    img = as_raster(img)
    v = np.sqrt(np.abs(img.astype(np.complex128)))
    scale = np.percentile(v, scale_percentile)
    if scale <= 0:
        return np.zeros(img.shape, np.uint8)
    x = np.clip(v * (255.0 / scale), 0.0, 255.0)
    # x >= 0, so floor(x + 0.5) is round-half-away-from-zero
    return np.floor(x + 0.5).astype(np.uint8)


def _pair(v, name):
    try:
        lo, hi = v
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a [lo, hi] pair") from exc
    if lo > hi:
        raise ConfigError(f"{name}: lo > hi")
    return lo, hi


@dataclass(frozen=True)
class AugmentationConfig:
    resolution_jitter: tuple = (1.0, 1.5)
    noise_sigma_range: tuple = (0.05, 0.2)
    n_targets_range: tuple = (1, 3)
    bright_fraction: float = 0.01
    dropout_share: float = 0.5
    crop_size: int = 640

    def __post_init__(self):
        rj = _pair(self.resolution_jitter, "resolution_jitter")
        ns = _pair(self.noise_sigma_range, "noise_sigma_range")
        nt = _pair(self.n_targets_range, "n_targets_range")
        object.__setattr__(self, "resolution_jitter", tuple(float(x) for x in rj))
        object.__setattr__(self, "noise_sigma_range", tuple(float(x) for x in ns))
        object.__setattr__(self, "n_targets_range", tuple(int(x) for x in nt))
        if rj[0] <= 0:
            raise ConfigError("resolution_jitter must be positive")
        if ns[0] < 0:
            raise ConfigError("noise_sigma_range must be non-negative")
        if nt[0] < 1 or nt[1] > 16:
            raise ConfigError("n_targets_range must lie within [1, 16]")
        for name in ("bright_fraction", "dropout_share"):
            if not 0 < getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in (0, 1]")
        if self.crop_size < 4:
            raise ConfigError("crop_size too small")

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> AugmentationConfig:
        try:
            return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})
        except TypeError as exc:
            raise ConfigError(f"bad augmentation config: {exc}") from exc


@dataclass(frozen=True)
class AugmentationDraw:
    range_resolution_px: float
    crossrange_resolution_px: float
    noise_sigma: float
    n_targets: int

    def sensor(self, base: SensorConfig) -> SensorConfig:
        return replace(base, range_resolution_px=self.range_resolution_px,
                       crossrange_resolution_px=self.crossrange_resolution_px,
                       noise_sigma=self.noise_sigma)

    def as_dict(self) -> dict:
        return asdict(self)


def sample_augmentation(cfg: AugmentationConfig, stream: np.random.Generator,
                        base: SensorConfig | None = None) -> AugmentationDraw:
    """Draw one set of domain-randomisation parameters.

    Resolution jitter multiplies the base resolutions (1 px when ``base`` is
    None) and is floored at 1 px.
    """
    base = base or SensorConfig()
    jr = stream.uniform(*cfg.resolution_jitter)
    jc = stream.uniform(*cfg.resolution_jitter)
    sigma = stream.uniform(*cfg.noise_sigma_range)
    n = int(stream.integers(cfg.n_targets_range[0], cfg.n_targets_range[1] + 1))
    return AugmentationDraw(
        range_resolution_px=max(1.0, float(base.range_resolution_px * jr)),
        crossrange_resolution_px=max(1.0, float(base.crossrange_resolution_px * jc)),
        noise_sigma=float(sigma),
        n_targets=n,
    )
