"""Train/test splits, dataset manifests and scene-by-scene generation.

Every scene is addressed by its index: the scene's random streams are
derived from ``(master_seed, index)`` only, so the live training stream and
materialised test sets share one code path, and scenes can be produced in
any order or in parallel with identical bytes.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import count as _count
from pathlib import Path

import numpy as np

from . import layout
from .core import BBox, SeedSpec, TARGET, derive_stream, domain_seed, read_raster
from .errors import ConfigError, DataIOError, PlacementError, ValidationError
from .overlay import (LabeledBox, Placement, SceneAnnotation, crop_background,
                      dropout_bright_points, mask_bbox, overlay_measured_scene, overlay_scene, place_targets)
from .patchwork import PatchworkConfig, Vignette, build_patchwork
from .sensor import AugmentationConfig, SensorConfig, sample_augmentation
from .sim import (ClutterConfig, default_templates, distractor_templates, iter_chip_poses,
                  load_chip, make_chip, read_chip_index, chip_id as make_chip_id,
                  synthesize_clutter)

log = logging.getLogger(__name__)

KINDS = ("train_stream", "synth_on_real", "measured_on_real", "patchwork", "distractor")
SPLIT_RETRIES = 1000


# -- splits ------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    background_train: tuple
    background_test: tuple
    chip_train: tuple
    chip_test: tuple
    master_seed: int = 0

    def __post_init__(self):
        for name in ("background_train", "background_test", "chip_train", "chip_test"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if set(self.background_train) & set(self.background_test):
            raise ValidationError("background train/test sets overlap")
        if set(self.chip_train) & set(self.chip_test):
            raise ValidationError("chip train/test sets overlap")

    def side(self, name: str) -> tuple[tuple, tuple]:
        if name == "train":
            return self.background_train, self.chip_train
        if name == "test":
            return self.background_test, self.chip_test
        raise ConfigError(f"split side must be 'train' or 'test', got {name!r}")

    def to_json(self) -> dict:
        return {"background_train": list(self.background_train),
                "background_test": list(self.background_test),
                "chip_train": list(self.chip_train), "chip_test": list(self.chip_test),
                "master_seed": self.master_seed}

    @classmethod
    def from_json(cls, d) -> SplitSpec:
        try:
            return cls(d["background_train"], d["background_test"], d["chip_train"],
                       d["chip_test"], d.get("master_seed", 0))
        except KeyError as exc:
            raise ConfigError(f"split is missing {exc}") from exc


def make_split(backgrounds: Sequence[str], chips, bg_test_count: int, chip_test_count: int,
               stream: np.random.Generator, master_seed: int = 0) -> SplitSpec:
    """Random disjoint split with every chip class on both sides.

    Args:
        backgrounds: background ids.
        chips: mapping chip id -> class name, or a sequence of (id, class).
        bg_test_count: backgrounds held out for testing.
        chip_test_count: chips held out for testing.
        stream: random stream; the chip split is redrawn (at most 1000 times)
            until the class constraint holds.

    Raises:
        ConfigError: counts out of range or the class constraint is infeasible.
    """
    chips = dict(chips.items() if isinstance(chips, Mapping) else chips)
    backgrounds = list(backgrounds)
    if not 0 <= bg_test_count < len(backgrounds):
        raise ConfigError(f"bg_test_count {bg_test_count} must be < {len(backgrounds)}")
    if not 0 <= chip_test_count < len(chips):
        raise ConfigError(f"chip_test_count {chip_test_count} must be < {len(chips)}")
    ids = list(chips)
    classes = [chips[c] for c in ids]
    per_class = {c: classes.count(c) for c in set(classes)}
    n_cls = len(per_class)
    if min(per_class.values()) < 2 or not n_cls <= chip_test_count <= len(ids) - n_cls:
        raise ConfigError("cannot represent every class on both sides of the split")

    bg_perm = stream.permutation(len(backgrounds))
    bg_test = set(bg_perm[:bg_test_count].tolist())
    for _ in range(SPLIT_RETRIES):
        perm = stream.permutation(len(ids))
        test = np.zeros(len(ids), bool)
        test[perm[:chip_test_count]] = True
        cls = np.asarray(classes)
        if len(set(cls[test])) == n_cls and len(set(cls[~test])) == n_cls:
            break
    else:
        raise ConfigError(f"class coverage not reached after {SPLIT_RETRIES} draws")
    return SplitSpec(
        [b for k, b in enumerate(backgrounds) if k not in bg_test],
        [b for k, b in enumerate(backgrounds) if k in bg_test],
        [c for c, t in zip(ids, test) if not t],
        [c for c, t in zip(ids, test) if t],
        master_seed,
    )


def read_split(path) -> SplitSpec:
    try:
        return SplitSpec.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
    except OSError as exc:
        raise DataIOError(f"{path}: {exc.strerror or exc}") from exc


def write_split(split: SplitSpec, path) -> None:
    Path(path).write_text(json.dumps(split.to_json(), indent=1) + "\n", encoding="utf-8")


# -- manifest ----------------------------------------------------------------

DEFAULT_CLUTTER = ClutterConfig(mean_intensity=1.0, texture_shape=4.0, correlation_px=6.0)


@dataclass
class DatasetManifest:
    """Everything needed to regenerate a dataset bit for bit.

    ``backgrounds`` is ``{"synthetic": {count, width, height, clutter}}`` or
    ``{"dir": path}`` (one CF32 per background).  ``chips`` is
    ``{"builtin": "vehicles" | "distractors", azimuth_step_deg, depressions,
    chip_size, sector}`` or ``{"library": path, "measured": bool}``.
    ``split`` optionally restricts assets: ``{"path": file, "side": "test"}``.
    """

    kind: str
    count: int = 0
    master_seed: int = 0
    sensor: SensorConfig = field(default_factory=SensorConfig)
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    backgrounds: dict = field(default_factory=dict)
    chips: dict = field(default_factory=dict)
    split: dict | None = None
    patchwork: PatchworkConfig = field(default_factory=PatchworkConfig)
    vignette_clutter: ClutterConfig = DEFAULT_CLUTTER
    bbox_threshold_ratio: float = 0.1
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.kind != "train_stream" and self.count < 1:
            raise ConfigError(f"kind {self.kind} needs count >= 1")
        if not self.chips:
            raise ConfigError("manifest needs a 'chips' section")
        if self.kind != "patchwork" and not self.backgrounds:
            raise ConfigError(f"kind {self.kind} needs a 'backgrounds' section")
        if self.split is not None and self.split.get("side") not in ("train", "test"):
            raise ConfigError("split.side must be 'train' or 'test'")
        if self.kind == "train_stream" and self.split and self.split["side"] != "train":
            raise ConfigError("train_stream manifests must use the train side of a split")

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def to_json(self) -> dict:
        return {"kind": self.kind, "count": self.count, "master_seed": self.master_seed,
                "sensor": self.sensor.to_dict(), "augmentation": self.augmentation.to_dict(),
                "backgrounds": self.backgrounds, "chips": self.chips, "split": self.split,
                "patchwork": self.patchwork.to_dict(),
                "vignette_clutter": self.vignette_clutter.to_dict(),
                "bbox_threshold_ratio": self.bbox_threshold_ratio}

    @classmethod
    def from_json(cls, d: dict, base_dir=".") -> DatasetManifest:
        d = dict(d)
        known = {"kind", "count", "master_seed", "sensor", "augmentation", "backgrounds",
                 "chips", "split", "patchwork", "vignette_clutter", "bbox_threshold_ratio"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown manifest fields {sorted(unknown)}")
        if "kind" not in d:
            raise ConfigError("manifest needs a 'kind'")
        conv = {"sensor": SensorConfig.from_dict, "augmentation": AugmentationConfig.from_dict,
                "patchwork": PatchworkConfig.from_dict, "vignette_clutter": ClutterConfig.from_dict}
        for key, fn in conv.items():
            if key in d:
                d[key] = fn(d[key])
        return cls(**d, base_dir=Path(base_dir))


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataIOError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return DatasetManifest.from_json(raw, base_dir=path.parent)


# -- assets ------------------------------------------------------------------

class AssetCatalog:
    """Resolves background and chip ids to arrays, lazily and with caching."""

    def __init__(self, manifest: DatasetManifest):
        self.manifest = manifest
        self._init_backgrounds(manifest.backgrounds)
        self._init_chips(manifest.chips)
        if manifest.split:
            self._apply_split(manifest.split)
        self.background = lru_cache(maxsize=8)(self._load_background)
        self.chip = lru_cache(maxsize=4096)(self._load_chip)
        self.vignette = lru_cache(maxsize=4096)(self._make_vignette)

    # backgrounds
    def _init_backgrounds(self, spec):
        self._bg_files = {}
        self._bg_synth = None
        if not spec:
            self.background_ids = []
        elif "synthetic" in spec:
            s = dict(spec["synthetic"])
            self._bg_synth = (int(s.get("width", 800)), int(s.get("height", 800)),
                              ClutterConfig.from_dict(s["clutter"]) if "clutter" in s
                              else DEFAULT_CLUTTER)
            self.background_ids = [f"bg{i:04d}" for i in range(int(s.get("count", 20)))]
        elif "dir" in spec:
            d = self.manifest.resolve(spec["dir"])
            if not d.is_dir():
                raise DataIOError(f"{d}: background directory not found")
            self._bg_files = {p.stem: p for p in sorted(d.glob("*.cf32"))}
            self.background_ids = list(self._bg_files)
            if not self.background_ids:
                raise DataIOError(f"{d}: no .cf32 backgrounds")
        else:
            raise ConfigError("backgrounds needs 'synthetic' or 'dir'")

    def _load_background(self, bg_id):
        if self._bg_synth is not None:
            w, h, clutter = self._bg_synth
            idx = int(bg_id[2:])
            stream = derive_stream(SeedSpec(domain_seed(self.manifest.master_seed, "background"), idx))
            return synthesize_clutter(w, h, clutter, stream)
        return read_raster(self._bg_files[bg_id])

    # chips
    def _init_chips(self, spec):
        self.measured_library = bool(spec.get("measured", False))
        if "builtin" in spec:
            which = spec["builtin"]
            if which == "vehicles":
                templates = default_templates(int(spec.get("template_seed", 0)))
            elif which == "distractors":
                templates = distractor_templates(int(spec.get("template_seed", 0)))
            else:
                raise ConfigError(f"unknown builtin chip set {which!r}")
            self._templates = {t.class_name: t for t in templates}
            self._chip_size = int(spec.get("chip_size", 128))
            poses = iter_chip_poses(templates, float(spec.get("azimuth_step_deg", 0.5)),
                                    spec.get("depressions", [15.0, 16.0, 17.0]), spec.get("sector"))
            self._poses = {make_chip_id(t.class_name, az, dep): (t, az, dep) for t, az, dep in poses}
            self.chip_classes = {cid: p[0].class_name for cid, p in self._poses.items()}
            self._library = None
        elif "library" in spec:
            self._library = self.manifest.resolve(spec["library"])
            self._records = {r["chip_id"]: r for r in read_chip_index(self._library)}
            self.chip_classes = {cid: r["class"] for cid, r in self._records.items()}
        else:
            raise ConfigError("chips needs 'builtin' or 'library'")
        self.chip_ids = list(self.chip_classes)
        if not self.chip_ids:
            raise ConfigError("chip set is empty")

    def _load_chip(self, cid):
        if self._library is not None:
            return load_chip(self._library, self._records[cid])
        t, az, dep = self._poses[cid]
        return make_chip(t, az, dep, self.manifest.sensor, self._chip_size)

    def _make_vignette(self, cid) -> tuple[np.ndarray, np.ndarray]:
        """A measured-style vignette: (image with the target in clutter, 3-class seg)."""
        chip = self.chip(cid)
        if self.measured_library:
            return chip.signature, chip.shadow_mask
        h, w = chip.shape
        stream = derive_stream(SeedSpec(domain_seed(self.manifest.master_seed, "vignette:" + cid)))
        clutter = synthesize_clutter(max(w, 64), max(h, 64), self.manifest.vignette_clutter, stream)
        clutter = clutter[:h, :w]
        pl = Placement(0, (0, 0), BBox(0, 0, w, h))
        img, _ = overlay_scene(clutter, [(chip, pl)], self.manifest.sensor, stream)
        return img, chip.shadow_mask

    def _apply_split(self, split_ref):
        if "path" in split_ref:
            split = read_split(self.manifest.resolve(split_ref["path"]))
        elif "inline" in split_ref:
            split = SplitSpec.from_json(split_ref["inline"])
        else:
            raise ConfigError("split needs 'path' or 'inline'")
        bgs, chips = split.side(split_ref["side"])
        if self.background_ids:
            missing = set(bgs) - set(self.background_ids)
            if missing:
                raise DataIOError(f"split references unknown backgrounds {sorted(missing)[:5]}")
            self.background_ids = list(bgs)
        missing = set(chips) - set(self.chip_ids)
        if missing:
            raise DataIOError(f"split references unknown chips {sorted(missing)[:5]}")
        self.chip_ids = list(chips)
        if not self.chip_ids or (self.manifest.kind != "patchwork" and not self.background_ids):
            raise ConfigError("split side leaves no assets")


# -- scene generation --------------------------------------------------------

@dataclass(frozen=True)
class ScenePlan:
    index: int
    draw: object
    background_id: str | None
    chip_ids: tuple


class SceneGenerator:
    """Index-addressable scene factory for one manifest."""

    def __init__(self, manifest: DatasetManifest, catalog: AssetCatalog | None = None):
        self.manifest = manifest
        self.catalog = catalog or AssetCatalog(manifest)
        self._plan_master = domain_seed(manifest.master_seed, "plan")

    def plan(self, index: int) -> ScenePlan:
        """Asset selection and augmentation draw; cheap, used for audits."""
        m, cat = self.manifest, self.catalog
        stream = derive_stream(SeedSpec(self._plan_master, index))
        if m.kind == "patchwork":
            rows, cols = m.patchwork.grid
            picks = stream.integers(0, len(cat.chip_ids), size=rows * cols)
            return ScenePlan(index, None, None, tuple(cat.chip_ids[i] for i in picks))
        draw = sample_augmentation(m.augmentation, stream, m.sensor)
        bg = cat.background_ids[int(stream.integers(0, len(cat.background_ids)))]
        picks = stream.integers(0, len(cat.chip_ids), size=draw.n_targets)
        return ScenePlan(index, draw, bg, tuple(cat.chip_ids[i] for i in picks))

    def render(self, index: int):
        """Return ``(complex scene, SceneAnnotation)`` for scene ``index``."""
        plan = self.plan(index)
        seed = SeedSpec(self.manifest.master_seed, index)
        scene_id = layout.scene_name(index)
        try:
            if self.manifest.kind == "patchwork":
                return self._render_patchwork(plan, seed, scene_id)
            if self.manifest.kind == "measured_on_real":
                return self._render_measured(plan, seed, scene_id)
            return self._render_synthetic(plan, seed, scene_id)
        except PlacementError as exc:
            raise PlacementError(f"scene {index}: {exc}") from exc

    def _crop(self, plan, stream):
        bg = self.catalog.background(plan.background_id)
        return crop_background(bg, self.manifest.augmentation.crop_size, stream)

    def _render_synthetic(self, plan, seed, scene_id):
        m, aug = self.manifest, self.manifest.augmentation
        stream = derive_stream(seed)
        crop = self._crop(plan, stream)
        chips = [dropout_bright_points(self.catalog.chip(c), aug.bright_fraction,
                                       aug.dropout_share, stream) for c in plan.chip_ids]
        placements = place_targets(crop.shape, chips, len(chips), stream)
        scene, ann = overlay_scene(crop, list(zip(chips, placements)), plan.draw.sensor(m.sensor),
                                   stream, scene_id=scene_id, seed=seed, draw=plan.draw,
                                   threshold_ratio=m.bbox_threshold_ratio)
        ann.assets = {"background": plan.background_id, "chips": list(plan.chip_ids)}
        return scene, ann

    def _render_measured(self, plan, seed, scene_id):
        m = self.manifest
        stream = derive_stream(seed)
        crop = self._crop(plan, stream)
        vigs = [self.catalog.vignette(c) for c in plan.chip_ids]
        placements = place_targets(crop.shape, [v[0] for v in vigs], len(vigs), stream)
        names = [self.catalog.chip_classes[c] for c in plan.chip_ids]
        scene, ann = overlay_measured_scene(
            crop, [(img, seg, pl) for (img, seg), pl in zip(vigs, placements)],
            plan.draw.sensor(m.sensor), stream, class_names=names, scene_id=scene_id,
            seed=seed, draw=plan.draw)
        ann.assets = {"background": plan.background_id, "chips": list(plan.chip_ids)}
        return scene, ann

    def _render_patchwork(self, plan, seed, scene_id):
        rows, cols = self.manifest.patchwork.grid
        grid, boxes = [], []
        for r in range(rows):
            grid.append([])
            boxes.append([])
            for c in range(cols):
                cid = plan.chip_ids[r * cols + c]
                img, seg = self.catalog.vignette(cid)
                grid[r].append(img)
                target = seg == TARGET
                boxes[r].append([LabeledBox(mask_bbox(target), self.catalog.chip_classes[cid])]
                                if target.any() else [])
        image, placed = build_patchwork(grid, boxes, self.manifest.patchwork)
        ann = SceneAnnotation(scene_id, placed, seed, assets={"vignettes": list(plan.chip_ids)})
        return image, ann


def stream_scenes(manifest: DatasetManifest, start_index: int = 0):
    """Endless ``(scene, annotation)`` iterator for a training stream.

    Scene ``i`` is the same whichever consumer asks for it, so disjoint
    index ranges can be consumed in parallel without coordination.
    """
    if manifest.kind != "train_stream":
        raise ConfigError(f"stream_scenes needs a train_stream manifest, got {manifest.kind}")
    gen = SceneGenerator(manifest)
    for i in _count(start_index):
        yield gen.render(i)


def vignette_pool(manifest: DatasetManifest) -> list[Vignette]:
    """Materialise the vignette pool a patchwork manifest draws from."""
    cat = AssetCatalog(manifest)
    pool = []
    for cid in cat.chip_ids:
        img, seg = cat.vignette(cid)
        target = seg == TARGET
        boxes = [LabeledBox(mask_bbox(target), cat.chip_classes[cid])] if target.any() else []
        pool.append(Vignette(img, boxes, cid))
    return pool


def generate_dataset(manifest: DatasetManifest, out_dir, threads: int = 1) -> dict:
    """Materialise ``manifest.count`` scenes under ``out_dir``.

    Returns a summary with the content hash, which is also written into
    ``manifest.echo.json``.  The hash does not depend on ``threads``.
    """
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    count = manifest.count
    if count < 1:
        raise ConfigError("count must be >= 1")
    gen = SceneGenerator(manifest)
    out = layout.prepare_tree(out_dir)

    def work(i):
        scene, ann = gen.render(i)
        layout.write_files(out, layout.scene_payloads(ann.scene_id, scene))
        if (i + 1) % 100 == 0:
            log.info("generated %d scenes", i + 1)
        return ann

    if threads == 1:
        annotations = [work(i) for i in range(count)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            annotations = list(pool.map(work, range(count)))
    try:
        (out / layout.ANNOTATIONS).write_bytes(layout.annotations_bytes(annotations))
    except OSError as exc:
        raise DataIOError(f"{out / layout.ANNOTATIONS}: {exc.strerror or exc}") from exc
    digest = layout.content_hash(out)
    n_boxes = {"target": 0, "distractor": 0}
    for a in annotations:
        for b in a.boxes:
            n_boxes[b.role] += 1
    summary = {"content_hash": digest, "scenes": count, "boxes": n_boxes}
    echo = {"manifest": manifest.to_json(), **summary}
    (out / layout.ECHO).write_text(json.dumps(echo, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return summary

