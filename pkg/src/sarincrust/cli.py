"""Command-line front end: one subcommand per pipeline stage.

Exit codes: 0 success, 2 configuration error, 3 I/O error,
4 placement/annotation error, 5 evaluation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import layout
from .core import SeedSpec, derive_stream, read_raster
from .dataset import AssetCatalog, generate_dataset, load_manifest, make_split, write_split
from .detect import CfarConfig, cfar_detect
from .errors import ConfigError, DataIOError, EvaluationError, ToolkitError
from .metrics import (ap_sweep, average_precision, distractor_ap, ground_truths, match, pr_curve,
                      read_predictions, write_ap_sweep_csv, write_pr_curve_csv, write_predictions)
from .sensor import SensorConfig
from .sim import default_templates, distractor_templates, iter_chip_library, write_chip_library

log = logging.getLogger("sarincrust")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataIOError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def cmd_gen_chips(args) -> int:
    cfg = _read_json(args.config)
    which = cfg.get("templates", "vehicles")
    seed = int(cfg.get("template_seed", 0))
    if which == "vehicles":
        templates = default_templates(seed)
    elif which == "distractors":
        templates = distractor_templates(seed)
    else:
        raise ConfigError(f"unknown template set {which!r}")
    if "classes" in cfg:
        wanted = set(cfg["classes"])
        templates = [t for t in templates if t.class_name in wanted]
    chips = iter_chip_library(templates, float(cfg.get("azimuth_step_deg", 0.5)),
                              cfg.get("depressions", [15.0, 16.0, 17.0]),
                              SensorConfig.from_dict(cfg.get("sensor", {})),
                              int(cfg.get("chip_size", 128)), cfg.get("sector"))
    # surfaces a bad angular grid before anything touches the disk
    first = next(chips, None)
    if first is None:
        raise ConfigError("chip configuration yields no chips")
    n = write_chip_library(_chain(first, chips), args.out)
    print(json.dumps({"chips": n, "out": str(args.out)}))
    return 0


def _chain(first, rest):
    yield first
    yield from rest


def cmd_gen_dataset(args) -> int:
    manifest = load_manifest(args.manifest)
    summary = generate_dataset(manifest, args.out, threads=args.threads)
    print(summary["content_hash"])
    return 0


def cmd_split(args) -> int:
    manifest = load_manifest(args.manifest)
    if manifest.split:
        raise ConfigError("split manifests must not already reference a split")
    cat = AssetCatalog(manifest)
    stream = derive_stream(SeedSpec(args.seed, 0))
    split = make_split(cat.background_ids, {c: cat.chip_classes[c] for c in cat.chip_ids},
                       args.bg_test, args.chip_test, stream, args.seed)
    write_split(split, args.out)
    print(json.dumps({"background": [len(split.background_train), len(split.background_test)],
                      "chips": [len(split.chip_train), len(split.chip_test)]}))
    return 0


def cmd_detect(args) -> int:
    cfg = CfarConfig.from_dict(_read_json(args.cfar)) if args.cfar else CfarConfig()
    src = Path(args.inp)
    scenes_dir = src / layout.SCENES_DIR if (src / layout.SCENES_DIR).is_dir() else src
    if not scenes_dir.is_dir():
        raise DataIOError(f"{src}: not a directory")
    preds = []
    for path in sorted(scenes_dir.glob("*.cf32")):
        preds.extend(cfar_detect(read_raster(path), cfg, scene_id=path.stem))
    try:
        write_predictions(preds, args.out)
    except OSError as exc:
        raise DataIOError(f"{args.out}: {exc.strerror or exc}") from exc
    print(json.dumps({"predictions": len(preds)}))
    return 0


def _parse_ious(text: str) -> list[float]:
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --iou list {text!r}") from exc
    if not values or any(not 0 < v < 1 for v in values):
        raise ConfigError("--iou values must lie in (0, 1)")
    return values


def _key(iou: float) -> str:
    return f"{iou * 100:g}".replace(".", "_")


def cmd_eval(args) -> int:
    ious = _parse_ious(args.iou)
    preds = read_predictions(args.preds)
    annotations = layout.read_annotations(args.gt)
    role = "distractor" if args.distractor else "target"
    gts = ground_truths(annotations, role)
    if not gts:
        if args.distractor:
            raise EvaluationError("no distractor boxes in the ground truth")
        raise EvaluationError("no target boxes in the ground truth; "
                              "use --distractor for distractor annotations")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataIOError(f"{out}: {exc.strerror or exc}") from exc
    summary = {"mode": role, "n_gt": len(gts), "n_predictions": len(preds)}
    for t in ious:
        curve = pr_curve(preds, gts, t)
        ap = distractor_ap(preds, gts, t) if args.distractor else average_precision(curve)
        counts = match(preds, gts, t)
        k = _key(t)
        write_pr_curve_csv(curve, out / f"pr_curve_iou{k}.csv")
        summary[f"ap{k}"] = ap
        summary[f"iou{k}"] = {"iou_threshold": t, "ap": ap, "tp": counts.tp,
                              "fp": counts.fp, "fn": counts.fn}
    write_ap_sweep_csv(ap_sweep(preds, gts), out / "ap_sweep.csv")
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n",
                                      encoding="utf-8")
    print(json.dumps({k: v for k, v in summary.items() if k.startswith("ap")}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sarincrust", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-chips", help="synthesise a target chip library")
    s.add_argument("--config", required=True, help="chip library JSON config")
    s.add_argument("--out", required=True, type=Path, help="output directory")
    s.set_defaults(func=cmd_gen_chips)

    s = sub.add_parser("gen-dataset", help="generate scenes from a dataset manifest")
    s.add_argument("--manifest", required=True, help="dataset manifest JSON")
    s.add_argument("--out", required=True, type=Path, help="output directory")
    s.add_argument("--threads", type=int, default=1, help="worker threads (output is identical)")
    s.set_defaults(func=cmd_gen_dataset)

    s = sub.add_parser("split", help="draw a train/test split over a manifest's assets")
    s.add_argument("--manifest", required=True)
    s.add_argument("--bg-test", type=int, required=True, help="backgrounds held out")
    s.add_argument("--chip-test", type=int, required=True, help="chips held out")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, type=Path, help="split JSON to write")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("detect", help="run the CFAR baseline over generated scenes")
    s.add_argument("--in", dest="inp", required=True, help="dataset directory")
    s.add_argument("--cfar", help="CFAR config JSON (defaults if omitted)")
    s.add_argument("--out", required=True, help="predictions JSONL")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("eval", help="score predictions against annotations")
    s.add_argument("--preds", required=True, help="predictions JSONL")
    s.add_argument("--gt", required=True, help="annotations.jsonl")
    s.add_argument("--iou", default="0.25,0.5", help="comma-separated IoU thresholds")
    s.add_argument("--out", required=True, help="report directory")
    s.add_argument("--distractor", action="store_true",
                   help="score against distractor boxes (low AP is good)")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "gen-dataset" and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return ConfigError.exit_code
    try:
        return args.func(args)
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataIOError.exit_code


if __name__ == "__main__":
    sys.exit(main())
