"""Command-line entry points: dataset generation, training, inference, evaluation.

One binary with subcommands. Settings come from a flat dotted-key config
file (-c), overridden by flags; every run writes the resolved settings next
to its outputs. Exit codes: 0 success, 2 config errors, 3 data-format
errors, 4 numeric failures.
"""

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from .config import REQUIRED, Option, load_config_file, resolve_options, write_resolved
from .errors import ConfigError, DataFormatError, GenerationError, NumericError
from .evaluation import (
    EvalConfig,
    evaluate_scenes,
    format_report,
    report_to_json,
    sweep_confidence,
    write_detection_dump,
)
from .model import Detector, ModelConfig
from .scenes import (
    CLASS_CATALOG,
    SceneParams,
    build_dataset,
    load_dataset,
    mean_sizes,
    save_dataset,
)
from .seeding import derive_rng
from .training import LossWeights, TrainConfig, load_detector, run_inference, train

# Scene seeds: root*1e6 + split offset + index. Splits stay disjoint for any
# root seed as long as each split has fewer than 100000 scenes.
_SPLIT_OFFSETS = (("train", 0), ("val", 100_000), ("test", 200_000))
_MAX_SPLIT_SCENES = 100_000

GEN_OPTIONS = (
    Option("seed", "int", 0, "root seed; scene seeds derive from it per split"),
    Option("out", "str", REQUIRED, "dataset directory (train/val/test inside)"),
    Option("gen.scenes", "int", 40, "train split scene count"),
    Option("gen.val_scenes", "int", 8, "val split scene count"),
    Option("gen.test_scenes", "int", 8, "test split scene count"),
    Option("gen.views", "int", 3, "frames per snippet"),
    Option("gen.min_objects", "int", 3, "minimum boxes per scene"),
    Option("gen.max_objects", "int", 10, "maximum boxes per scene"),
    Option("gen.frames", "int", 72, "orbit frames rendered per scene"),
    Option("gen.image_width", "int", 64, "rendered image width"),
    Option("gen.image_height", "int", 48, "rendered image height"),
    Option("gen.save_depths", "bool", False, "also store per-view depth maps"),
)

TRAIN_OPTIONS = (
    Option("seed", "int", 0, "seed for init, shuffling, and reference points"),
    Option("data", "str", REQUIRED, "dataset directory from `parq gen`"),
    Option("out", "str", REQUIRED, "run directory for checkpoints and metrics"),
    Option("resume", "str", None, "checkpoint to continue from"),
    Option("train.steps", "int", 600, "optimization steps"),
    Option("train.batch_size", "int", 8, "snippets per step"),
    Option("train.learning_rate", "float", 3e-4, "peak AdamW learning rate"),
    Option("train.weight_decay", "float", 0.01, "AdamW weight decay"),
    Option("train.clip_norm", "float", 5.0, "global gradient-norm clip (0 disables)"),
    Option("train.validate_every", "int", 200, "steps between validations (0 disables)"),
    Option("train.val_confidence", "float", 0.5, "score cutoff during validation"),
    Option("train.taus", "floats", (0.25, 0.5, 0.7), "IoU thresholds for validation F1"),
    Option("train.proximity_radius", "float", 0.2, "extra-positive radius in meters"),
    Option("train.match_class_weight", "float", 1.0, "matching cost: class term"),
    Option("train.match_center_weight", "float", 5.0, "matching cost: center L1 term"),
    Option("train.center_weight", "float", 5.0, "loss weight: center offsets"),
    Option("train.rotation_weight", "float", 5.0, "loss weight: 6D rotation"),
    Option("train.size_weight", "float", 5.0, "loss weight: log-size residual"),
    Option("train.class_weight", "float", 1.0, "loss weight: classification"),
    Option("model.channels", "int", 64, "transformer width C"),
    Option("model.heads", "int", 4, "attention heads"),
    Option("model.feedforward", "int", 128, "feedforward width"),
    Option("model.iterations", "int", 4, "recurrent iterations L"),
    Option("model.queries", "int", 64, "queries K"),
    Option("model.views", "int", 3, "views per snippet N"),
    Option("model.image_width", "int", 64, "input image width"),
    Option("model.image_height", "int", 48, "input image height"),
    Option("model.encoder_channels", "ints", (32, 64), "encoder stage widths"),
    Option("model.dropout", "float", 0.0, "attention/feedforward dropout"),
)

INFER_OPTIONS = (
    Option("seed", "int", 0, "seed for reference-point sampling"),
    Option("checkpoint", "str", REQUIRED, "training checkpoint"),
    Option("data", "str", REQUIRED, "dataset directory"),
    Option("out", "str", REQUIRED, "output directory for the detection dump"),
    Option("infer.split", "str", "test", "dataset split to run on"),
)

EVAL_OPTIONS = (
    Option("seed", "int", 0, "seed for reference-point sampling"),
    Option("checkpoint", "str", REQUIRED, "training checkpoint"),
    Option("data", "str", REQUIRED, "dataset directory"),
    Option("out", "str", REQUIRED, "output directory for reports and plots"),
    Option("eval.split", "str", "test", "dataset split to evaluate"),
    Option("eval.iterations", "int", None, "override recurrent iterations L"),
    Option("eval.queries", "int", None, "override query count K"),
    Option("eval.views", "int", None, "use this many views per snippet"),
    Option("eval.confidence", "float", 0.5, "global score cutoff (without sweep)"),
    Option("eval.fusion_iou", "float", 0.25, "cross-snippet merge IoU"),
    Option("eval.nms_iou", "float", 0.25, "final NMS IoU"),
    Option("eval.taus", "floats", (0.25, 0.5, 0.7), "IoU thresholds to report"),
    Option("eval.sweep", "bool", True, "pick per-class score cutoffs on the val split"),
    Option("eval.sweep_tau", "float", 0.25, "IoU threshold the sweep optimizes"),
    Option("eval.iteration_sweep", "ints", None, "L values for the F1-vs-iterations plot"),
    Option("eval.query_sweep", "ints", None, "K values for the F1-vs-queries plot"),
    Option("eval.plots", "bool", True, "emit SVG plots next to their CSVs"),
)

_FLAGS = {
    "gen": (
        ("--seed", "seed"),
        ("--out", "out"),
        ("--scenes", "gen.scenes"),
        ("--val-scenes", "gen.val_scenes"),
        ("--test-scenes", "gen.test_scenes"),
        ("--views", "gen.views"),
        ("--frames", "gen.frames"),
        ("--save-depths", "gen.save_depths"),
    ),
    "train": (
        ("--seed", "seed"),
        ("--data", "data"),
        ("--out", "out"),
        ("--resume", "resume"),
        ("--steps", "train.steps"),
        ("--batch-size", "train.batch_size"),
        ("--learning-rate", "train.learning_rate"),
        ("--validate-every", "train.validate_every"),
    ),
    "infer": (
        ("--seed", "seed"),
        ("--checkpoint", "checkpoint"),
        ("--data", "data"),
        ("--out", "out"),
        ("--split", "infer.split"),
    ),
    "eval": (
        ("--seed", "seed"),
        ("--checkpoint", "checkpoint"),
        ("--data", "data"),
        ("--out", "out"),
        ("--split", "eval.split"),
        ("--iterations", "eval.iterations"),
        ("--queries", "eval.queries"),
        ("--views", "eval.views"),
        ("--confidence", "eval.confidence"),
        ("--sweep", "eval.sweep"),
        ("--plots", "eval.plots"),
    ),
}

_OPTIONS = {
    "gen": GEN_OPTIONS,
    "train": TRAIN_OPTIONS,
    "infer": INFER_OPTIONS,
    "eval": EVAL_OPTIONS,
}


def _dest(flag):
    return flag.lstrip("-").replace("-", "_")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="parq", description="Multi-view 3D detection with recurrent queries."
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for command, runner in (
        ("gen", cmd_gen),
        ("train", cmd_train),
        ("infer", cmd_infer),
        ("eval", cmd_eval),
    ):
        options = {opt.key: opt for opt in _OPTIONS[command]}
        sub = commands.add_parser(command, help=f"run the {command} stage")
        sub.add_argument(
            "-c", "--config", default=None, help="config file (flat `key = value` lines)"
        )
        for flag, key in _FLAGS[command]:
            opt = options[key]
            if opt.kind == "bool":
                sub.add_argument(
                    flag, dest=_dest(flag), action=argparse.BooleanOptionalAction,
                    default=None, help=opt.help,
                )
            else:
                types = {"int": int, "float": float, "str": str}
                sub.add_argument(
                    flag, dest=_dest(flag), type=types[opt.kind], default=None,
                    help=opt.help,
                )
        if command == "gen":
            sub.add_argument(
                "--force", action="store_true",
                help="allow writing into an existing non-empty directory",
            )
        sub.set_defaults(runner=runner, command=command)
    return parser


def _resolve(args):
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {key: getattr(args, _dest(flag)) for flag, key in _FLAGS[args.command]}
    return resolve_options(_OPTIONS[args.command], file_values, overrides)


# ---------------------------------------------------------------------- gen


def cmd_gen(args):
    cfg = _resolve(args)
    out = Path(cfg["out"])
    if out.exists() and any(out.iterdir()) and not args.force:
        raise ConfigError(f"{out} exists and is not empty (pass --force to overwrite)")
    counts = {
        "train": cfg["gen.scenes"],
        "val": cfg["gen.val_scenes"],
        "test": cfg["gen.test_scenes"],
    }
    for name, count in counts.items():
        if not 0 <= count <= _MAX_SPLIT_SCENES:
            raise ConfigError(f"{name} scene count must be in [0, {_MAX_SPLIT_SCENES}]")
    try:
        params = SceneParams(
            min_objects=cfg["gen.min_objects"],
            max_objects=cfg["gen.max_objects"],
            frames=cfg["gen.frames"],
            image_width=cfg["gen.image_width"],
            image_height=cfg["gen.image_height"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    out.mkdir(parents=True, exist_ok=True)
    write_resolved(out / "gen.resolved.cfg", cfg, header="parq gen, resolved settings")
    for name, offset in _SPLIT_OFFSETS:
        seeds = [cfg["seed"] * 1_000_000 + offset + i for i in range(counts[name])]
        dataset = build_dataset(
            params, seeds, views=cfg["gen.views"], keep_depths=cfg["gen.save_depths"]
        )
        save_dataset(out / name, dataset, save_depths=cfg["gen.save_depths"])
        snippets = sum(len(scene.snippets) for scene in dataset.scenes)
        boxes = sum(
            len(snippet.boxes) for scene in dataset.scenes for snippet in scene.snippets
        )
        print(f"{name}: {counts[name]} scenes, {snippets} snippets, "
              f"{boxes} visible boxes -> {out / name}")
    return 0


# -------------------------------------------------------------------- train


def cmd_train(args):
    cfg = _resolve(args)
    data = Path(cfg["data"])
    dataset = load_dataset(data / "train")
    val_dir = data / "val"
    val_scenes = None
    if cfg["train.validate_every"] > 0 and (val_dir / "manifest.json").exists():
        val_scenes = list(load_dataset(val_dir).scenes)

    try:
        model_config = ModelConfig(
            num_classes=len(CLASS_CATALOG),
            mean_sizes=mean_sizes(CLASS_CATALOG),
            channels=cfg["model.channels"],
            heads=cfg["model.heads"],
            feedforward=cfg["model.feedforward"],
            iterations=cfg["model.iterations"],
            queries=cfg["model.queries"],
            views=cfg["model.views"],
            image_width=cfg["model.image_width"],
            image_height=cfg["model.image_height"],
            encoder_channels=cfg["model.encoder_channels"],
            dropout=cfg["model.dropout"],
        )
        train_config = TrainConfig(
            batch_size=cfg["train.batch_size"],
            steps=cfg["train.steps"],
            seed=cfg["seed"],
            weights=LossWeights(
                center=cfg["train.center_weight"],
                rotation=cfg["train.rotation_weight"],
                size=cfg["train.size_weight"],
                classification=cfg["train.class_weight"],
            ),
            match_class_weight=cfg["train.match_class_weight"],
            match_center_weight=cfg["train.match_center_weight"],
            proximity_radius=cfg["train.proximity_radius"],
            learning_rate=cfg["train.learning_rate"],
            weight_decay=cfg["train.weight_decay"],
            clip_norm=cfg["train.clip_norm"],
            validate_every=cfg["train.validate_every"],
            val_confidence=cfg["train.val_confidence"],
            taus=cfg["train.taus"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    model = Detector(model_config, derive_rng(cfg["seed"], "init"))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(out / "train.resolved.cfg", cfg, header="parq train, resolved settings")
    result = train(
        model, dataset, train_config,
        val_scenes=val_scenes, out_dir=out, resume=cfg["resume"],
    )
    if result.rows:
        print(f"trained {len(result.rows)} steps; final loss "
              f"{result.rows[-1]['total']:.4f}")
    if result.best_f1 >= 0.0:
        print(f"best F1@{train_config.taus[0]:g} = {result.best_f1:.4f}")
    print(f"checkpoints: {result.best_path} (best), {result.last_path} (last)")
    return 0


# -------------------------------------------------------------------- infer


def _sliced_views(records, views):
    """Scene records whose snippets keep a centered window of `views` views."""
    if views is None:
        return list(records)
    if views < 1:
        raise ConfigError("views override must be >= 1")
    sliced = []
    for record in records:
        snippets = []
        for snippet in record.snippets:
            have = len(snippet.cameras)
            if views > have:
                raise ConfigError(
                    f"requested {views} views but snippets carry {have}; "
                    "regenerate the dataset with more views per snippet"
                )
            start = (have - views) // 2
            stop = start + views
            snippets.append(dataclasses.replace(
                snippet,
                cameras=snippet.cameras[start:stop],
                images=snippet.images[start:stop],
                depths=None if snippet.depths is None else snippet.depths[start:stop],
            ))
        sliced.append(dataclasses.replace(record, snippets=tuple(snippets)))
    return sliced


def cmd_infer(args):
    cfg = _resolve(args)
    model, _ = load_detector(cfg["checkpoint"])
    dataset = load_dataset(Path(cfg["data"]) / cfg["infer.split"])
    per_scene = run_inference(model, list(dataset.scenes), cfg["seed"])
    sets = [detections for scene in per_scene for detections in scene]

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(out / "infer.resolved.cfg", cfg, header="parq infer, resolved settings")
    dump = out / "detections.jsonl"
    write_detection_dump(dump, sets)
    boxes = sum(len(d.boxes) for d in sets)
    print(f"wrote {len(sets)} snippet detection sets ({boxes} boxes) -> {dump}")
    return 0


# --------------------------------------------------------------------- eval


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def _plot_lines(path, xs, series, xlabel, ylabel):
    from matplotlib.figure import Figure

    fig = Figure(figsize=(4.8, 3.4))
    ax = fig.add_subplot(111)
    for label, ys in series.items():
        ax.plot(xs, ys, marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_ylim(0.0, 1.05)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")


def _f1_by_tau(model, records, gts, ecfg, seed, thresholds, iterations, queries):
    detections = run_inference(
        model, records, seed, iterations=iterations, num_queries=queries
    )
    report, _ = evaluate_scenes(detections, gts, ecfg, thresholds=thresholds)
    return {tau: report.totals[tau].f1 for tau in ecfg.taus}, report


def cmd_eval(args):
    cfg = _resolve(args)
    model, _ = load_detector(cfg["checkpoint"])
    data = Path(cfg["data"])
    records = _sliced_views(load_dataset(data / cfg["eval.split"]).scenes, cfg["eval.views"])
    gts = [list(record.objects) for record in records]
    try:
        ecfg = EvalConfig(
            confidence=cfg["eval.confidence"],
            fusion_iou=cfg["eval.fusion_iou"],
            nms_iou=cfg["eval.nms_iou"],
            taus=cfg["eval.taus"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    thresholds = None
    if cfg["eval.sweep"]:
        val_records = _sliced_views(load_dataset(data / "val").scenes, cfg["eval.views"])
        val_dets = run_inference(
            model, val_records, cfg["seed"],
            iterations=cfg["eval.iterations"], num_queries=cfg["eval.queries"],
        )
        thresholds = sweep_confidence(
            val_dets, [list(r.objects) for r in val_records], ecfg,
            tau=cfg["eval.sweep_tau"],
        )

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(out / "eval.resolved.cfg", cfg, header="parq eval, resolved settings")

    _, report = _f1_by_tau(
        model, records, gts, ecfg, cfg["seed"], thresholds,
        cfg["eval.iterations"], cfg["eval.queries"],
    )
    (out / "report.json").write_text(json.dumps(report_to_json(report), indent=1) + "\n")
    table = format_report(report, class_names=[c.name for c in CLASS_CATALOG])
    (out / "report.txt").write_text(table + "\n")
    print(table)
    if thresholds is not None:
        (out / "thresholds.json").write_text(
            json.dumps({str(k): v for k, v in sorted(thresholds.items())}, indent=1) + "\n"
        )

    taus = list(ecfg.taus)
    _write_csv(
        out / "f1_vs_tau.csv",
        ["tau", "precision", "recall", "f1"],
        [[tau, report.totals[tau].precision, report.totals[tau].recall,
          report.totals[tau].f1] for tau in taus],
    )
    if cfg["eval.plots"]:
        _plot_lines(
            out / "f1_vs_tau.svg", taus,
            {"precision": [report.totals[t].precision for t in taus],
             "recall": [report.totals[t].recall for t in taus],
             "f1": [report.totals[t].f1 for t in taus]},
            "IoU threshold", "score",
        )

    sweeps = (
        ("iterations", cfg["eval.iteration_sweep"], "f1_vs_iterations",
         lambda value: (value, cfg["eval.queries"])),
        ("queries", cfg["eval.query_sweep"], "f1_vs_queries",
         lambda value: (cfg["eval.iterations"], value)),
    )
    for axis, values, stem, to_overrides in sweeps:
        if not values:
            continue
        rows = []
        for value in values:
            iterations, queries = to_overrides(value)
            f1s, _ = _f1_by_tau(
                model, records, gts, ecfg, cfg["seed"], thresholds, iterations, queries
            )
            rows.append([value] + [f1s[tau] for tau in taus])
            print(f"{axis}={value}: " + " ".join(
                f"f1@{tau:g}={f1s[tau]:.4f}" for tau in taus
            ))
        _write_csv(out / f"{stem}.csv", [axis] + [f"f1@{tau:g}" for tau in taus], rows)
        if cfg["eval.plots"]:
            _plot_lines(
                out / f"{stem}.svg", [row[0] for row in rows],
                {f"f1@{tau:g}": [row[1 + i] for row in rows]
                 for i, tau in enumerate(taus)},
                axis, "F1",
            )
    return 0


# --------------------------------------------------------------------- main


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.runner(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GenerationError as exc:
        print(f"generation error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


__all__ = ["build_parser", "main"]
