"""Scene-level detection evaluation.

Per-snippet detections are confidence-filtered, lifted to the world frame,
fused across a scene's snippets (Hungarian matching on 1 - IoU against the
running scene set, keeping the higher-scoring box of each accepted match),
cleaned up with 3-D NMS, and scored against scene ground truth at several
IoU thresholds. Reports carry micro-averaged per-class metrics plus a macro
average, and detections round-trip through a line-delimited JSON dump so the
evaluator also works standalone.
"""

import dataclasses
import json
from pathlib import Path

import numpy as np

from .assignment import hungarian
from .errors import DataFormatError
from .geometry import (
    OrientedBox3D,
    Pose,
    box_from_json,
    box_iou3d,
    box_to_json,
    nms3d,
    transform_box,
)

DUMP_FORMAT_VERSION = 1

#: The confidence sweep grid: 0.05, 0.10, ..., 0.95.
CONFIDENCE_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))


@dataclasses.dataclass(frozen=True, eq=False)
class DetectionSet:
    """Scored boxes from one snippet, with the pose that lifts them to world.

    scene_id groups snippets for fusion; snippet_id is -1 for fused
    scene-level sets, whose boxes are already in the world frame.
    """

    scene_id: int
    snippet_id: int
    boxes: tuple
    world_from_snippet: Pose

    def __post_init__(self):
        for box in self.boxes:
            if box.score is None or not 0.0 <= box.score <= 1.0:
                raise ValueError(
                    f"DetectionSet: every box needs a score in [0, 1], got {box.score!r}"
                )
        object.__setattr__(self, "boxes", tuple(self.boxes))

    def world_boxes(self):
        return [transform_box(self.world_from_snippet, box) for box in self.boxes]


@dataclasses.dataclass(frozen=True)
class EvalConfig:
    """Thresholds for fusion and scoring.

    confidence: detections below this score are dropped before fusion
    (per-class overrides can be passed to fuse_snippets). fusion_iou: minimum
    IoU for a cross-snippet match to merge. nms_iou: suppression threshold of
    the final NMS. taus: IoU thresholds at which TP/FP are decided.
    """

    confidence: float = 0.5
    fusion_iou: float = 0.25
    nms_iou: float = 0.25
    taus: tuple = (0.25, 0.5, 0.7)

    def __post_init__(self):
        for name in ("confidence", "fusion_iou", "nms_iou"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"EvalConfig.{name} must be in [0, 1], got {value}")
        if not self.taus:
            raise ValueError("EvalConfig.taus must not be empty")
        if any(not 0.0 <= t <= 1.0 for t in self.taus):
            raise ValueError(f"EvalConfig.taus must be in [0, 1], got {self.taus}")
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))


def fuse_snippets(detections, cfg, thresholds=None):
    """Merge per-snippet detections into one scene-level DetectionSet.

    Snippets are processed in the given order. Each snippet's boxes are
    kept when score >= the class threshold (`thresholds` maps class_id to
    a per-class cutoff, falling back to cfg.confidence), lifted to world,
    and Hungarian-matched against the running scene set on cost 1 - IoU.
    A match merges only when IoU >= cfg.fusion_iou and the classes agree,
    keeping the higher-scoring box; everything else is appended as new.
    The fused set is finished with class-aware NMS at cfg.nms_iou.
    """
    thresholds = thresholds or {}
    scene_id = detections[0].scene_id if detections else -1
    fused = []
    for snippet_set in detections:
        candidates = [
            box
            for box in snippet_set.world_boxes()
            if box.score >= thresholds.get(box.class_id, cfg.confidence)
        ]
        if not fused:
            fused.extend(candidates)
            continue
        if not candidates:
            continue
        cost = np.ones((len(fused), len(candidates)))
        for i, kept in enumerate(fused):
            for j, cand in enumerate(candidates):
                cost[i, j] = 1.0 - box_iou3d(kept, cand)
        merged = set()
        for i, j in hungarian(cost):
            same_class = fused[i].class_id == candidates[j].class_id
            if same_class and 1.0 - cost[i, j] >= cfg.fusion_iou:
                if candidates[j].score > fused[i].score:
                    fused[i] = candidates[j]
                merged.add(j)
        fused.extend(cand for j, cand in enumerate(candidates) if j not in merged)
    return DetectionSet(
        scene_id=scene_id,
        snippet_id=-1,
        boxes=tuple(nms3d(fused, cfg.nms_iou)),
        world_from_snippet=Pose.identity(),
    )


# ------------------------------------------------------------------- scoring


@dataclasses.dataclass(frozen=True)
class Tally:
    """True-positive / prediction / ground-truth counts for one class."""

    tp: int = 0
    pred: int = 0
    gt: int = 0

    def merged(self, other):
        return Tally(self.tp + other.tp, self.pred + other.pred, self.gt + other.gt)


def score_scene(detections, gt_boxes, tau):
    """Greedy TP assignment of one scene, per class: {class_id: Tally}.

    Predictions are visited by descending score (index breaks ties); each
    claims the unclaimed same-class ground truth with the highest IoU,
    provided that IoU exceeds tau. Re-detections of a claimed ground truth
    count as false positives.
    """
    preds = detections.world_boxes()
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    tallies = {}
    for box in list(preds) + list(gt_boxes):
        tallies.setdefault(box.class_id, [0, 0, 0])
    for box in preds:
        tallies[box.class_id][1] += 1
    for box in gt_boxes:
        tallies[box.class_id][2] += 1
    claimed = [False] * len(gt_boxes)
    for index in order:
        pred = preds[index]
        best_iou = 0.0
        best_gt = None
        for g, gt in enumerate(gt_boxes):
            if claimed[g] or gt.class_id != pred.class_id:
                continue
            iou = box_iou3d(pred, gt)
            if iou > best_iou:
                best_iou = iou
                best_gt = g
        if best_gt is not None and best_iou > tau:
            claimed[best_gt] = True
            tallies[pred.class_id][0] += 1
    return {cls: Tally(*counts) for cls, counts in tallies.items()}


def merge_tallies(per_scene):
    """Sum per-class tallies across scenes."""
    total = {}
    for tallies in per_scene:
        for cls, tally in tallies.items():
            total[cls] = total.get(cls, Tally()).merged(tally)
    return total


@dataclasses.dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    tp: int
    pred: int
    gt: int


def _metrics(tally):
    precision = tally.tp / tally.pred if tally.pred > 0 else 0.0
    recall = tally.tp / tally.gt if tally.gt > 0 else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0.0
        else 0.0
    )
    return ClassMetrics(precision, recall, f1, tally.tp, tally.pred, tally.gt)


@dataclasses.dataclass(frozen=True, eq=False)
class EvalReport:
    """Per-tau metrics: per class, macro over active classes, and micro totals."""

    taus: tuple
    per_class: dict
    macro: dict
    totals: dict


def compute_report(tallies_by_tau):
    """Build an EvalReport from {tau: {class_id: Tally}}.

    Per-class metrics are micro-averages of the summed counts. The macro
    average runs over classes with any prediction or ground truth at that
    tau; zero-denominator ratios are 0 by convention.
    """
    taus = tuple(sorted(tallies_by_tau))
    per_class = {}
    macro = {}
    totals = {}
    for tau in taus:
        tallies = tallies_by_tau[tau]
        per_class[tau] = {cls: _metrics(tally) for cls, tally in sorted(tallies.items())}
        active = [
            metrics
            for cls, metrics in per_class[tau].items()
            if metrics.pred + metrics.gt > 0
        ]
        if active:
            macro[tau] = ClassMetrics(
                precision=sum(m.precision for m in active) / len(active),
                recall=sum(m.recall for m in active) / len(active),
                f1=sum(m.f1 for m in active) / len(active),
                tp=sum(m.tp for m in active),
                pred=sum(m.pred for m in active),
                gt=sum(m.gt for m in active),
            )
        else:
            macro[tau] = ClassMetrics(0.0, 0.0, 0.0, 0, 0, 0)
        totals[tau] = _metrics(
            Tally(
                tp=sum(t.tp for t in tallies.values()),
                pred=sum(t.pred for t in tallies.values()),
                gt=sum(t.gt for t in tallies.values()),
            )
        )
    return EvalReport(taus=taus, per_class=per_class, macro=macro, totals=totals)


def evaluate_scenes(scene_detections, scene_gts, cfg, thresholds=None):
    """Fuse and score every scene: returns (EvalReport, fused sets).

    scene_detections: list of per-scene lists of snippet DetectionSets.
    scene_gts: matching list of world-frame ground-truth box lists.
    """
    if len(scene_detections) != len(scene_gts):
        raise ValueError("need ground truth for every scene")
    fused_sets = [
        fuse_snippets(snippet_sets, cfg, thresholds=thresholds)
        for snippet_sets in scene_detections
    ]
    tallies_by_tau = {}
    for tau in cfg.taus:
        per_scene = [
            score_scene(fused, gts, tau) for fused, gts in zip(fused_sets, scene_gts)
        ]
        tallies_by_tau[tau] = merge_tallies(per_scene)
    return compute_report(tallies_by_tau), fused_sets


def sweep_confidence(scene_detections, scene_gts, cfg, tau=0.25):
    """Per-class confidence thresholds maximizing F1 at `tau`.

    Sweeps a global cutoff over CONFIDENCE_GRID, evaluates the full
    fuse-and-score pipeline at each value, and picks, per class, the
    grid value with the best F1 (lowest value wins ties).
    """
    best = {}
    for s in CONFIDENCE_GRID:
        swept = dataclasses.replace(cfg, confidence=s, taus=(tau,))
        report, _ = evaluate_scenes(scene_detections, scene_gts, swept)
        for cls, metrics in report.per_class[tau].items():
            if cls not in best or metrics.f1 > best[cls][1]:
                best[cls] = (s, metrics.f1)
    return {cls: s for cls, (s, _) in sorted(best.items())}


# ----------------------------------------------------------------- reporting


def report_to_json(report):
    def metrics_json(m):
        return {
            "precision": m.precision,
            "recall": m.recall,
            "f1": m.f1,
            "tp": m.tp,
            "pred": m.pred,
            "gt": m.gt,
        }

    return {
        "taus": list(report.taus),
        "per_class": {
            str(tau): {str(cls): metrics_json(m) for cls, m in by_class.items()}
            for tau, by_class in report.per_class.items()
        },
        "macro": {str(tau): metrics_json(m) for tau, m in report.macro.items()},
        "totals": {str(tau): metrics_json(m) for tau, m in report.totals.items()},
    }


def format_report(report, class_names=None):
    """Human-readable table, one block per tau."""
    lines = []
    for tau in report.taus:
        lines.append(f"tau = {tau:.2f}")
        lines.append(f"  {'class':<12} {'prec':>6} {'rec':>6} {'f1':>6} {'tp':>5} {'pred':>5} {'gt':>5}")
        for cls, m in report.per_class[tau].items():
            name = class_names[cls] if class_names and cls < len(class_names) else str(cls)
            lines.append(
                f"  {name:<12} {m.precision:>6.3f} {m.recall:>6.3f} {m.f1:>6.3f}"
                f" {m.tp:>5d} {m.pred:>5d} {m.gt:>5d}"
            )
        m = report.macro[tau]
        lines.append(
            f"  {'macro':<12} {m.precision:>6.3f} {m.recall:>6.3f} {m.f1:>6.3f}"
            f" {m.tp:>5d} {m.pred:>5d} {m.gt:>5d}"
        )
    return "\n".join(lines)


# ------------------------------------------------------------------- dumps


def _pose_json(pose):
    return {
        "rotation": [float(v) for v in pose.rotation.reshape(-1)],
        "translation": [float(v) for v in pose.translation],
    }


def write_detection_dump(path, detection_sets):
    """One header line plus one JSON line per DetectionSet."""
    lines = [json.dumps({"format_version": DUMP_FORMAT_VERSION})]
    for det in detection_sets:
        lines.append(
            json.dumps(
                {
                    "scene_id": det.scene_id,
                    "snippet_id": det.snippet_id,
                    "world_from_snippet": _pose_json(det.world_from_snippet),
                    "boxes": [box_to_json(box) for box in det.boxes],
                }
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_detection_dump(path):
    """Inverse of write_detection_dump; an empty file is an empty list."""
    text = Path(path).read_text()
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        return []
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as err:
        raise DataFormatError(f"{path}: line 1: invalid JSON: {err.msg}") from err
    if not isinstance(header, dict) or "format_version" not in header:
        raise DataFormatError(f"{path}: line 1: missing field 'format_version'")
    if header["format_version"] != DUMP_FORMAT_VERSION:
        raise DataFormatError(
            f"{path}: line 1: format_version {header['format_version']!r} unsupported "
            f"(expected {DUMP_FORMAT_VERSION})"
        )
    sets = []
    for number, line in enumerate(lines[1:], start=2):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as err:
            raise DataFormatError(f"{path}: line {number}: invalid JSON: {err.msg}") from err
        for field in ("scene_id", "snippet_id", "world_from_snippet", "boxes"):
            if not isinstance(record, dict) or field not in record:
                raise DataFormatError(f"{path}: line {number}: missing field '{field}'")
        pose_obj = record["world_from_snippet"]
        try:
            pose = Pose(
                rotation=np.asarray(pose_obj["rotation"], dtype=np.float64).reshape(3, 3),
                translation=np.asarray(pose_obj["translation"], dtype=np.float64),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise DataFormatError(
                f"{path}: line {number}: field 'world_from_snippet': {err}"
            ) from err
        try:
            boxes = tuple(box_from_json(obj) for obj in record["boxes"])
            sets.append(
                DetectionSet(
                    scene_id=int(record["scene_id"]),
                    snippet_id=int(record["snippet_id"]),
                    boxes=boxes,
                    world_from_snippet=pose,
                )
            )
        except DataFormatError as err:
            raise DataFormatError(f"{path}: line {number}: field 'boxes': {err}") from err
        except (TypeError, ValueError) as err:
            raise DataFormatError(f"{path}: line {number}: {err}") from err
    return sets


__all__ = [
    "CONFIDENCE_GRID",
    "DUMP_FORMAT_VERSION",
    "ClassMetrics",
    "DetectionSet",
    "EvalConfig",
    "EvalReport",
    "Tally",
    "compute_report",
    "evaluate_scenes",
    "format_report",
    "fuse_snippets",
    "merge_tallies",
    "read_detection_dump",
    "report_to_json",
    "score_scene",
    "sweep_confidence",
    "write_detection_dump",
]
