"""Target assignment, the detection loss, and the training loop.

Every decoding iteration is supervised independently: its decoded boxes are
Hungarian-matched to the ground truth on a class + center-distance cost,
nearby unmatched queries are promoted to positives, and the loss combines L1
center-offset and log-size terms, a squared-L2 rotation term in the 6-D
representation, and cross entropy over all queries (unmatched queries target
the no-object class). The training loop runs AdamW with a cosine schedule
over seeded shuffled batches, validates periodically at the scene level, and
writes a metrics CSV plus best/last checkpoints that are self-describing
(model config and optimizer state travel inside the container).
"""

import csv
import dataclasses
import math
from pathlib import Path

import numpy as np

from .assignment import hungarian, proximity_augment
from .errors import DataFormatError, NumericError
from .evaluation import DetectionSet, EvalConfig, evaluate_scenes
from .geometry import matrix_to_rot6d
from .model import (
    Detector,
    config_from_dict,
    config_to_dict,
    sample_reference_points,
)
from .numerics import (
    AdamW,
    Tensor,
    abs_,
    astensor,
    clip_grad_norm,
    cosine_lr,
    gather_rows,
    load_checkpoint,
    log_softmax,
    save_checkpoint,
)
from .scenes import snippet_inputs
from .seeding import derive_rng


@dataclasses.dataclass(frozen=True)
class LossWeights:
    """Term weights: center offset, rotation, and size at 5, class at 1."""

    center: float = 5.0
    rotation: float = 5.0
    size: float = 5.0
    classification: float = 1.0

    def __post_init__(self):
        for field in dataclasses.fields(self):
            if getattr(self, field.name) < 0.0:
                raise ValueError(f"LossWeights.{field.name} must be >= 0")


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Optimization settings.

    Matching uses cost = match_class_weight * (1 - p(gt class)) +
    match_center_weight * L1(predicted center, gt center); unmatched queries
    whose reference points lie strictly within proximity_radius meters of a
    ground-truth center become extra positives.
    """

    batch_size: int = 8
    steps: int = 600
    seed: int = 0
    weights: LossWeights = LossWeights()
    match_class_weight: float = 1.0
    match_center_weight: float = 5.0
    proximity_radius: float = 0.2
    learning_rate: float = 3e-4
    weight_decay: float = 0.01
    clip_norm: float = 5.0
    validate_every: int = 200
    val_confidence: float = 0.5
    taus: tuple = (0.25, 0.5, 0.7)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        for name in ("match_class_weight", "match_center_weight", "proximity_radius",
                     "weight_decay", "clip_norm"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if self.validate_every < 0:
            raise ValueError("validate_every must be >= 0")
        if not 0.0 <= self.val_confidence <= 1.0:
            raise ValueError("val_confidence must be in [0, 1]")
        if not self.taus:
            raise ValueError("taus must not be empty")
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))


# ---------------------------------------------------------------- matching


def matching_cost(output, gt_boxes, class_weight=1.0, center_weight=5.0):
    """Cost matrix [queries, gts] on detached values.

    cost[q, g] = class_weight * (1 - softmax(logits_q)[class_g])
               + center_weight * ||(ref_q + offset_q) - center_g||_1
    """
    if not gt_boxes:
        return np.zeros((output.points.shape[0], 0))
    logits = output.prediction.class_logits.data
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    centers = output.points + output.prediction.center_offset.data
    cost = np.zeros((len(centers), len(gt_boxes)))
    for g, gt in enumerate(gt_boxes):
        cost[:, g] = class_weight * (1.0 - probs[:, gt.class_id])
        cost[:, g] += center_weight * np.abs(centers - gt.center).sum(axis=1)
    return cost


def assign_targets(output, gt_boxes, cfg):
    """Hungarian pairs plus proximity positives, as (query, gt) tuples."""
    if not gt_boxes:
        return []
    cost = matching_cost(
        output, gt_boxes, cfg.match_class_weight, cfg.match_center_weight
    )
    pairs = hungarian(cost)
    centers = np.stack([gt.center for gt in gt_boxes])
    return proximity_augment(pairs, output.points, centers, cfg.proximity_radius)


# ------------------------------------------------------------------- losses


@dataclasses.dataclass(frozen=True, eq=False)
class LossBreakdown:
    """Weighted total plus the unweighted per-term values, all Tensors."""

    total: Tensor
    center: Tensor
    rotation: Tensor
    size: Tensor
    classification: Tensor

    def values(self):
        """Detached floats keyed by term name, for logging."""
        return {
            "center": float(self.center.data),
            "rotation": float(self.rotation.data),
            "size": float(self.size.data),
            "classification": float(self.classification.data),
            "total": float(self.total.data),
        }


def detection_loss(output, pairs, gt_boxes, weights, mean_sizes):
    """One iteration's loss against its assigned targets.

    Box terms average over matched pairs (each pair contributes the L1 norm
    of its center-offset and log-size errors and the squared L2 norm of its
    6-D rotation error); classification is cross entropy over all queries
    with unmatched queries targeting the no-object class.
    """
    logits = output.prediction.class_logits
    num_queries, num_labels = logits.shape
    no_object = num_labels - 1
    targets = np.full(num_queries, no_object)
    for query, gt in pairs:
        targets[query] = gt_boxes[gt].class_id
    one_hot = np.zeros((num_queries, num_labels))
    one_hot[np.arange(num_queries), targets] = 1.0
    log_probs = log_softmax(logits, axis=-1)
    l_class = (log_probs * Tensor(one_hot)).sum() * (-1.0 / num_queries)

    if pairs:
        query_rows = [query for query, _ in pairs]
        matched = [gt_boxes[gt] for _, gt in pairs]
        scale = 1.0 / len(pairs)

        offset_target = np.stack(
            [gt.center - output.points[query] for (query, _), gt in zip(pairs, matched)]
        )
        offsets = gather_rows(output.prediction.center_offset, query_rows)
        l_center = abs_(offsets - Tensor(offset_target)).sum() * scale

        size_target = np.stack(
            [np.log(gt.size / np.asarray(mean_sizes[gt.class_id])) for gt in matched]
        )
        residuals = gather_rows(output.prediction.size_residual, query_rows)
        l_size = abs_(residuals - Tensor(size_target)).sum() * scale

        rot_target = np.stack([matrix_to_rot6d(gt.rotation) for gt in matched])
        rot_error = gather_rows(output.prediction.rotation6d, query_rows) - Tensor(rot_target)
        l_rotation = (rot_error * rot_error).sum() * scale
    else:
        l_center = astensor(0.0)
        l_size = astensor(0.0)
        l_rotation = astensor(0.0)

    total = (
        l_center * weights.center
        + l_rotation * weights.rotation
        + l_size * weights.size
        + l_class * weights.classification
    )
    return LossBreakdown(
        total=total,
        center=l_center,
        rotation=l_rotation,
        size=l_size,
        classification=l_class,
    )


def snippet_loss(outputs, gt_boxes, cfg, mean_sizes):
    """Per-iteration losses with independent matching; one entry per iteration."""
    breakdowns = []
    for output in outputs:
        pairs = assign_targets(output, gt_boxes, cfg)
        breakdowns.append(
            detection_loss(output, pairs, gt_boxes, cfg.weights, mean_sizes)
        )
    return breakdowns


# ---------------------------------------------------------------- inference


def run_inference(model, scene_records, seed, iterations=None, num_queries=None):
    """Per-scene lists of snippet DetectionSets for a trained model."""
    per_scene = []
    for record in scene_records:
        sets = []
        for snippet in record.snippets:
            images, cams = snippet_inputs(snippet)
            rng = derive_rng(seed, "infer", record.scene_id, snippet.snippet_id)
            boxes = model.detect(
                images, cams, rng, iterations=iterations, num_queries=num_queries
            )
            sets.append(
                DetectionSet(
                    scene_id=record.scene_id,
                    snippet_id=snippet.snippet_id,
                    boxes=tuple(boxes),
                    world_from_snippet=snippet.world_from_snippet,
                )
            )
        per_scene.append(sets)
    return per_scene


def validate_model(model, scene_records, cfg, iterations=None, num_queries=None,
                   thresholds=None):
    """Scene-level micro F1 per tau: {tau: f1}."""
    detections = run_inference(
        model, scene_records, cfg.seed, iterations=iterations, num_queries=num_queries
    )
    gts = [list(record.objects) for record in scene_records]
    eval_cfg = EvalConfig(confidence=cfg.val_confidence, taus=cfg.taus)
    report, _ = evaluate_scenes(detections, gts, eval_cfg, thresholds=thresholds)
    return {tau: report.totals[tau].f1 for tau in cfg.taus}


# ----------------------------------------------------------------- training


METRIC_FIELDS = ("step", "center", "rotation", "size", "classification", "total")


@dataclasses.dataclass(frozen=True, eq=False)
class TrainResult:
    rows: list
    best_f1: float
    best_path: Path
    last_path: Path


def _checkpoint_config(model, step, best_f1):
    return {
        "step": step,
        "best_f1": best_f1,
        "model_config": config_to_dict(model.config),
    }


def _save_state(path, model, optimizer, step, best_f1):
    arrays = dict(model.parameters.arrays())
    arrays.update(optimizer.state_arrays())
    save_checkpoint(path, arrays, config=_checkpoint_config(model, step, best_f1))


def load_model_state(model, path):
    """Load a training checkpoint's parameters into `model`.

    Returns (optimizer arrays, config dict) so callers can resume the
    optimizer and read the step counter.
    """
    arrays, config = load_checkpoint(path)
    params = {k: v for k, v in arrays.items() if not k.startswith("opt.")}
    model.parameters.load_arrays(params)
    opt_state = {k: v for k, v in arrays.items() if k.startswith("opt.")}
    return opt_state, config


def load_detector(path):
    """Rebuild a Detector from a training checkpoint.

    Returns (model, config dict). The checkpoint must carry the model
    configuration; raw parameter containers are rejected as incompatible.
    """
    arrays, config = load_checkpoint(path)
    if not isinstance(config, dict) or "model_config" not in config:
        raise DataFormatError(
            f"{path}: not a training checkpoint (missing model_config)"
        )
    try:
        model_config = config_from_dict(config["model_config"])
    except ValueError as exc:
        raise DataFormatError(f"{path}: bad model_config: {exc}") from exc
    model = Detector(model_config, derive_rng(0, "checkpoint-load"))
    model.parameters.load_arrays(
        {k: v for k, v in arrays.items() if not k.startswith("opt.")}
    )
    return model, config


def _batch_stream(count, batch_size, rng):
    """Endless shuffled index batches; reshuffles each epoch."""
    while True:
        order = rng.permutation(count)
        for start in range(0, count, batch_size):
            chunk = order[start : start + batch_size]
            if len(chunk) == batch_size:
                yield [int(i) for i in chunk]


def train(model, snippets, cfg, val_scenes=None, out_dir=None, resume=None):
    """Optimize `model` on training snippets; returns rows and checkpoint paths.

    Batches are seeded shuffles of the snippet list; the loss of a batch is
    the mean over snippets of the sum of per-iteration losses. Validation
    runs every cfg.validate_every steps (and at the final step) when
    val_scenes are given; the best-F1@first-tau parameters go to best.ckpt
    and the final state to last.ckpt. A non-finite loss aborts with the
    offending term named. With resume, optimization continues from the
    checkpoint's step counter (optimizer state included) up to cfg.steps.
    """
    if hasattr(snippets, "all_snippets"):
        snippets = snippets.all_snippets()
    snippets = list(snippets)
    if not snippets:
        raise ValueError("train: no snippets")
    if len(snippets) < cfg.batch_size:
        raise ValueError(
            f"train: batch_size {cfg.batch_size} exceeds dataset size {len(snippets)}"
        )
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    best_path = out_dir / "best.ckpt" if out_dir is not None else None
    last_path = out_dir / "last.ckpt" if out_dir is not None else None

    optimizer = AdamW(
        model.parameters.items(),
        lr=cfg.learning_rate,
        weight_decay=cfg.weight_decay,
    )
    start_step = 0
    best_f1 = -1.0
    if resume is not None:
        opt_state, config = load_model_state(model, resume)
        if opt_state:
            optimizer.load_state_arrays(opt_state)
        start_step = int(config.get("step", 0))
        best_f1 = float(config.get("best_f1", -1.0))

    batches = _batch_stream(
        len(snippets), cfg.batch_size, derive_rng(cfg.seed, "shuffle")
    )
    # Fast-forward the shuffle stream so a resumed run sees the batches a
    # straight run would have seen at the same step.
    for _ in range(start_step):
        next(batches)

    dropout_rng = derive_rng(cfg.seed, "dropout") if model.config.dropout > 0 else None
    rows = []
    saved_best = False

    for step in range(start_step, cfg.steps):
        batch = next(batches)
        term_sums = {name: 0.0 for name in METRIC_FIELDS if name != "step"}
        batch_loss = None
        for slot, index in enumerate(batch):
            snippet = snippets[index]
            images, cams = snippet_inputs(snippet)
            feats = model.add_ray_pe(model.encode_images(images, cams))
            points_rng = derive_rng(cfg.seed, "points", step, slot)
            points = sample_reference_points(
                model.config.volume, model.config.queries, points_rng
            )
            outputs = model.recurrent_decode(feats, points, dropout_rng=dropout_rng)
            breakdowns = snippet_loss(
                outputs, snippet.boxes, cfg, model.config.mean_sizes
            )
            snippet_total = breakdowns[0].total
            for part in breakdowns[1:]:
                snippet_total = snippet_total + part.total
            for part in breakdowns:
                for name, value in part.values().items():
                    term_sums[name] += value
            batch_loss = snippet_total if batch_loss is None else batch_loss + snippet_total
        batch_loss = batch_loss * (1.0 / len(batch))
        terms = {name: value / len(batch) for name, value in term_sums.items()}
        for name in ("center", "rotation", "size", "classification", "total"):
            if not math.isfinite(terms[name]):
                raise NumericError(
                    f"non-finite {name} loss ({terms[name]}) at step {step + 1}"
                )

        optimizer.zero_grad()
        batch_loss.backward()
        if cfg.clip_norm > 0.0:
            clip_grad_norm(model.parameters.tensors(), cfg.clip_norm)
        optimizer.step(lr=cosine_lr(step, cfg.steps, cfg.learning_rate))

        row = {"step": step + 1, **{k: terms[k] for k in METRIC_FIELDS if k != "step"}}
        is_last = step + 1 == cfg.steps
        due = cfg.validate_every > 0 and (step + 1) % cfg.validate_every == 0
        if val_scenes and (due or is_last):
            f1s = validate_model(model, val_scenes, cfg)
            for tau, f1 in f1s.items():
                row[f"f1@{tau:g}"] = f1
            first = f1s[cfg.taus[0]]
            if first > best_f1:
                best_f1 = first
                if best_path is not None:
                    _save_state(best_path, model, optimizer, step + 1, best_f1)
                    saved_best = True
        rows.append(row)

    if last_path is not None:
        _save_state(last_path, model, optimizer, cfg.steps, best_f1)
        if not saved_best:
            # No validation improved on the resume baseline (or none ran):
            # the final parameters stand in as best.
            _save_state(best_path, model, optimizer, cfg.steps, best_f1)
    if out_dir is not None:
        write_metrics_csv(out_dir / "metrics.csv", rows, cfg.taus)
    return TrainResult(
        rows=rows, best_f1=best_f1, best_path=best_path, last_path=last_path
    )


def write_metrics_csv(path, rows, taus):
    """One row per step: per-term losses, total, and any validation F1s."""
    fields = list(METRIC_FIELDS) + [f"f1@{tau:g}" for tau in taus]
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


__all__ = [
    "LossBreakdown",
    "LossWeights",
    "TrainConfig",
    "TrainResult",
    "assign_targets",
    "detection_loss",
    "load_detector",
    "load_model_state",
    "matching_cost",
    "run_inference",
    "snippet_loss",
    "train",
    "validate_model",
    "write_metrics_csv",
]
