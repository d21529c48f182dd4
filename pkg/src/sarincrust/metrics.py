"""Detection evaluation: IoU, greedy matching, precision/recall curves and AP.

Matching is class-agnostic and per scene.  Predictions are visited in
descending confidence (input order breaks ties); each claims the still
unpaired ground truth of highest IoU when that IoU reaches the threshold.
Because of this ordering the matches made at a confidence cut are exactly
the first matches of the full pass, so a curve needs a single pass.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .core import BBox
from .errors import DataIOError, EvaluationError, FormatError, ValidationError


@dataclass(frozen=True)
class Prediction:
    scene_id: str
    bbox: BBox
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")

    def to_json(self) -> dict:
        return {"scene_id": self.scene_id, **self.bbox.as_dict(), "confidence": self.confidence}

    @classmethod
    def from_json(cls, d) -> Prediction:
        return cls(str(d["scene_id"]), BBox.from_dict(d), float(d["confidence"]))


@dataclass(frozen=True)
class GroundTruth:
    scene_id: str
    bbox: BBox


@dataclass
class MatchOutcome:
    tp: int
    fp: int
    fn: int
    pairs: list = field(default_factory=list)  # (Prediction, GroundTruth, iou)


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float


@dataclass
class PRCurve:
    points: list[PRPoint]
    n_gt: int = 0


def iou(a: BBox, b: BBox) -> float:
    inter = a.intersection_area(b)
    if inter == 0:
        return 0.0
    return inter / (a.area + b.area - inter)


def _order(predictions: Sequence[Prediction]) -> list[int]:
    return sorted(range(len(predictions)), key=lambda i: -predictions[i].confidence)


def _greedy(predictions, gts, iou_threshold):
    """Run the matching pass; return (order, tp flags in that order, pairs)."""
    by_scene = defaultdict(list)
    for g in gts:
        by_scene[g.scene_id].append(g)
    paired = {sid: [False] * len(v) for sid, v in by_scene.items()}
    order = _order(predictions)
    flags, pairs = [], []
    for i in order:
        p = predictions[i]
        cands = by_scene.get(p.scene_id, ())
        used = paired.get(p.scene_id)
        best, best_iou = -1, -1.0
        for j, g in enumerate(cands):
            if used[j]:
                continue
            v = iou(p.bbox, g.bbox)
            if v > best_iou:
                best, best_iou = j, v
        if best >= 0 and best_iou >= iou_threshold:
            used[best] = True
            flags.append(True)
            pairs.append((p, cands[best], best_iou))
        else:
            flags.append(False)
    return order, flags, pairs


def match(predictions: Sequence[Prediction], gts: Sequence[GroundTruth],
          iou_threshold: float) -> MatchOutcome:
    _, flags, pairs = _greedy(predictions, gts, iou_threshold)
    tp = sum(flags)
    return MatchOutcome(tp=tp, fp=len(flags) - tp, fn=len(gts) - tp, pairs=pairs)


def pr_curve(predictions: Sequence[Prediction], gts: Sequence[GroundTruth],
             iou_threshold: float) -> PRCurve:
    """One point per distinct confidence, in descending order.

    With no predictions at all the curve is the single conventional point
    (threshold 1, precision 1, recall 0).

    Raises:
        EvaluationError: there is no ground truth (recall undefined).
    """
    if not gts:
        raise EvaluationError("no ground truth boxes: recall is undefined "
                              "(use distractor mode for false-alarm studies)")
    n_gt = len(gts)
    if not predictions:
        return PRCurve([PRPoint(1.0, 1.0, 0.0)], n_gt)
    order, flags, _ = _greedy(predictions, gts, iou_threshold)
    points = []
    tp = fp = 0
    for k, (i, hit) in enumerate(zip(order, flags)):
        tp += hit
        fp += not hit
        conf = predictions[i].confidence
        last_of_level = k + 1 == len(order) or predictions[order[k + 1]].confidence != conf
        if last_of_level:
            points.append(PRPoint(conf, tp / (tp + fp), tp / n_gt))
    return PRCurve(points, n_gt)


def average_precision(curve: PRCurve) -> float:
    """Area under the monotone precision envelope, summed over recall steps."""
    pts = curve.points
    env = [0.0] * len(pts)
    running = 0.0
    for k in range(len(pts) - 1, -1, -1):
        running = max(running, pts[k].precision)
        env[k] = running
    ap, prev_recall = 0.0, 0.0
    for p, e in zip(pts, env):
        ap += (p.recall - prev_recall) * e
        prev_recall = p.recall
    return ap


def default_iou_thresholds() -> list[float]:
    # round() keeps grid values exact, e.g. 0.4 rather than 0.4000000000000001
    return [round(0.05 * k, 10) for k in range(1, 20)]


def ap_sweep(predictions, gts, thresholds: Iterable[float] | None = None) -> list[tuple[float, float]]:
    thresholds = default_iou_thresholds() if thresholds is None else list(thresholds)
    rows = []
    for t in thresholds:
        if not 0 < t < 1:
            raise EvaluationError(f"IoU threshold {t} outside (0, 1)")
        rows.append((t, average_precision(pr_curve(predictions, gts, t))))
    return rows


def distractor_ap(predictions, distractor_boxes: Sequence[GroundTruth], iou_threshold: float) -> float:
    """AP with distractor objects standing in for ground truth; low is good."""
    if not distractor_boxes:
        raise EvaluationError("distractor evaluation needs at least one distractor box")
    return average_precision(pr_curve(predictions, distractor_boxes, iou_threshold))


# -- I/O ---------------------------------------------------------------------

def ground_truths(annotations, role: str = "target") -> list[GroundTruth]:
    return [GroundTruth(a.scene_id, b.bbox) for a in annotations for b in a.boxes if b.role == role]


def read_predictions(path) -> list[Prediction]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"{path}: {exc.strerror or exc}") from exc
    preds = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            preds.append(Prediction.from_json(json.loads(line)))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{n}: bad prediction record ({exc!r})") from exc
    return preds


def write_predictions(predictions: Iterable[Prediction], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in predictions:
            f.write(json.dumps(p.to_json()) + "\n")


def write_pr_curve_csv(curve: PRCurve, path) -> None:
    with open(path, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["threshold", "precision", "recall"])
        for p in curve.points:
            w.writerow([repr(float(p.threshold)), repr(float(p.precision)), repr(float(p.recall))])


def write_ap_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iou_threshold", "ap"])
        for t, ap in rows:
            w.writerow([repr(float(t)), repr(float(ap))])
