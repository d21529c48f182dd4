"""Patchworks: grids of vignettes joined by linear fades over overlap strips."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import SeedSpec, as_raster, derive_stream
from .errors import ConfigError
from .overlay import LabeledBox, SceneAnnotation


@dataclass(frozen=True)
class PatchworkConfig:
    grid: tuple = (4, 4)
    vignette_size: int = 128
    overlap: int = 16

    def __post_init__(self):
        rows, cols = self.grid
        object.__setattr__(self, "grid", (int(rows), int(cols)))
        if rows < 1 or cols < 1:
            raise ConfigError("grid needs rows, cols >= 1")
        if not 0 <= self.overlap < self.vignette_size:
            raise ConfigError("overlap must satisfy 0 <= overlap < vignette_size")
        # a tile's two ramps must not meet, otherwise three tiles share pixels
        if 2 * self.overlap > self.vignette_size:
            raise ConfigError("overlap may not exceed half the vignette size")

    @property
    def stride(self) -> int:
        return self.vignette_size - self.overlap

    def output_shape(self) -> tuple[int, int]:
        rows, cols = self.grid
        v, o = self.vignette_size, self.overlap
        return rows * v - (rows - 1) * o, cols * v - (cols - 1) * o

    def to_dict(self) -> dict:
        return {"grid": list(self.grid), "vignette_size": self.vignette_size,
                "overlap": self.overlap}

    @classmethod
    def from_dict(cls, d) -> PatchworkConfig:
        try:
            return cls(**{k: tuple(v) if k == "grid" else v for k, v in d.items()})
        except TypeError as exc:
            raise ConfigError(f"bad patchwork config: {exc}") from exc


def tile_weights(position: int, count: int, size: int, overlap: int) -> np.ndarray:
    """Per-axis weight of tile ``position`` among ``count``: 1 except linear
    ramps across interior overlap strips; neighbouring ramps sum to 1."""
    w = np.ones(size)
    if overlap == 0:
        return w
    up = (np.arange(overlap) + 0.5) / overlap
    if position > 0:
        w[:overlap] = up
    if position < count - 1:
        w[size - overlap:] = 1.0 - up
    return w


def weight_field(cfg: PatchworkConfig) -> np.ndarray:
    """Sum over tiles of their separable weights, on the output grid."""
    rows, cols = cfg.grid
    v, s = cfg.vignette_size, cfg.stride
    total = np.zeros(cfg.output_shape())
    for r in range(rows):
        wy = tile_weights(r, rows, v, cfg.overlap)
        for c in range(cols):
            wx = tile_weights(c, cols, v, cfg.overlap)
            total[r * s:r * s + v, c * s:c * s + v] += np.outer(wy, wx)
    return total


def build_patchwork(vignettes, boxes, cfg: PatchworkConfig = PatchworkConfig()):
    """Blend a ``rows x cols`` grid of vignettes into one image.

    Args:
        vignettes: nested ``rows x cols`` sequence of square complex images.
        boxes: same nesting; each cell a list of BBox or LabeledBox in
            vignette coordinates.
        cfg: grid geometry.

    Returns:
        ``(image, boxes)`` with boxes translated to patchwork coordinates.
    """
    rows, cols = cfg.grid
    if len(vignettes) != rows or any(len(r) != cols for r in vignettes):
        raise ConfigError(f"vignette grid does not match {rows}x{cols}")
    if len(boxes) != rows or any(len(r) != cols for r in boxes):
        raise ConfigError(f"box grid does not match {rows}x{cols}")
    v, s = cfg.vignette_size, cfg.stride
    out = np.zeros(cfg.output_shape(), np.complex128)
    placed = []
    for r in range(rows):
        wy = tile_weights(r, rows, v, cfg.overlap)
        for c in range(cols):
            tile = as_raster(vignettes[r][c])
            if tile.shape != (v, v):
                raise ConfigError(f"vignette ({r}, {c}) is {tile.shape}, expected {v}x{v}")
            wx = tile_weights(c, cols, v, cfg.overlap)
            out[r * s:r * s + v, c * s:c * s + v] += tile * np.outer(wy, wx)
            for b in boxes[r][c]:
                if isinstance(b, LabeledBox):
                    placed.append(LabeledBox(b.bbox.translate(c * s, r * s), b.class_name, b.role))
                else:
                    placed.append(b.translate(c * s, r * s))
    return out.astype(np.complex64), placed


@dataclass(frozen=True, eq=False)
class Vignette:
    image: np.ndarray
    boxes: list = field(default_factory=list)
    vignette_id: str = ""


def make_patchwork(pool: Sequence[Vignette], index: int, master_seed: int,
                   cfg: PatchworkConfig = PatchworkConfig()):
    """Patchwork number ``index``: vignettes drawn uniformly with replacement."""
    if not pool:
        raise ConfigError("vignette pool is empty")
    rows, cols = cfg.grid
    seed = SeedSpec(master_seed, index)
    picks = derive_stream(seed).integers(0, len(pool), size=(rows, cols))
    grid = [[pool[i].image for i in row] for row in picks]
    box_grid = [[pool[i].boxes for i in row] for row in picks]
    image, boxes = build_patchwork(grid, box_grid, cfg)
    ann = SceneAnnotation(f"{index:06d}", boxes, seed,
                          assets={"vignettes": [pool[i].vignette_id for i in picks.ravel()]})
    return image, ann


def assemble_patchwork_dataset(pool: Sequence[Vignette], count: int = 200, master_seed: int = 0,
                               cfg: PatchworkConfig = PatchworkConfig(), out_dir=None):
    """Build ``count`` patchworks; also write them as a scene tree if ``out_dir``.

    Returns the list of ``(image, annotation)`` pairs.
    """
    from . import layout

    results = [make_patchwork(pool, i, master_seed, cfg) for i in range(count)]
    if out_dir is not None:
        out = layout.prepare_tree(out_dir)
        for image, ann in results:
            layout.write_files(out, layout.scene_payloads(ann.scene_id, image))
        (out / layout.ANNOTATIONS).write_bytes(layout.annotations_bytes(a for _, a in results))
    return results
