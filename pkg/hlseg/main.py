"""CLI for the hlseg portrait segmentation and skin-tone grading engine.

This module provides the ``hlseg`` entry point:
- Parses global flags (--config, --json, --verbose/--quiet, --report) and one sub-command
- Loads weight and forest files, runs the pipeline through SegmentationEngine
- Prints results as rich tables and coloured status lines, or JSON lines with --json
- Maps failures onto exit codes (1 usage, 2 model files, 3 processing)
- Writes an optional standalone HTML report via generate_html_report
"""
import argparse
import json
import logging
import sys
from datetime import datetime
from pathlib import Path

import numpy as np
import yaml
from colorama import Fore, Style, init
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from . import config
from .core import colorfeat, hlnet, modelio
from .core.base import Box
from .core.errors import (
    CorruptionError, DomainError, HLSegError, LoadError, ModelFormatError, ParameterError, ShapeError,
)
from .core.forest import ForestParams, run_training
from .core.metrics import SegConfusion, accumulate, metric_report
from .engine import SegmentationEngine, benchmark, dataset_features, pca_preprocess
from .utils.constants import EXIT_MODEL_FILES, EXIT_OK, EXIT_PROCESSING, EXIT_USAGE
from .utils.image_io import read_image, read_label_mask, write_alpha, write_image, write_label_mask
from .utils.report_utils import generate_html_report
from .utils.synth import generate_skin_dataset, read_dataset_index

# Initialize colorama
init()

console = Console()
logger = logging.getLogger("hlseg")

ABLATION_SPACES = ("rgb", "hsv", "ycrcb")
ABLATION_METHODS = ("hist8", "hist256", "moments")


def print_colored(text, color, file=None):
    """Print text with color"""
    print(f"{color}{text}{Style.RESET_ALL}", file=file or sys.stdout)


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that exits with the usage exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print_colored(f"Error: {message}", Fore.RED, file=sys.stderr)
        sys.exit(EXIT_USAGE)


def setup_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.ERROR if quiet else logging.WARNING
    handler = RichHandler(console=Console(stderr=True), show_path=False)
    logger.handlers[:] = [handler]
    logger.setLevel(level)
    logger.propagate = False


def load_engine(args) -> SegmentationEngine:
    try:
        return SegmentationEngine.from_weights(args.weights, args.run_config, args.num_classes)
    except OSError as e:
        raise LoadError(f"cannot read weights {args.weights}: {e.strerror or e}") from e
    except ShapeError as e:
        raise LoadError(f"weights {args.weights} do not fit the network: {e}") from e


def load_forest_file(path):
    try:
        return modelio.load_forest(path)
    except OSError as e:
        raise LoadError(f"cannot read forest {path}: {e.strerror or e}") from e


def parse_roi(args):
    return Box.parse(args.roi) if getattr(args, "roi", None) else None


def parse_colour(text: str):
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError:
        raise ParameterError(f"colour must be r,g,b, got {text!r}")
    if len(parts) != 3:
        raise ParameterError(f"colour must be r,g,b, got {text!r}")
    return parts


def class_name(k: int) -> str:
    return config.CLASS_NAMES[k] if k < len(config.CLASS_NAMES) else f"class{k}"


def forest_params(args) -> ForestParams:
    f = args.run_config["forest"]
    return ForestParams(n_trees=f["n_trees"], max_depth=f["max_depth"],
                        min_samples_split=f["min_samples_split"],
                        features_per_split=f["features_per_split"], n_jobs=args.threads)


# --- commands ---------------------------------------------------------------

def cmd_init_weights(args) -> dict:
    cfg = hlnet.HLNetConfig(num_classes=args.num_classes)
    store = hlnet.init_weights(cfg, args.run_config["seed"])
    modelio.save(store, args.out)
    if args.manifest:
        modelio.write_manifest(store, args.manifest)
    model = hlnet.build(store, cfg=cfg)
    return {"weights": str(args.out), "tensors": len(store), "scalars": store.total_size(),
            "param_count": hlnet.param_count(model)}


def cmd_segment(args) -> dict:
    engine = load_engine(args)
    image = read_image(args.image)
    seg = engine.segment(image, args.roi_box)
    labels = seg.paste(seg.labels, image.shape[:2], fill=config.BACKGROUND).astype(np.int64)
    write_label_mask(args.out, labels)
    if args.prob_dir:
        for k in range(seg.prob.shape[2]):
            write_alpha(Path(args.prob_dir) / f"prob_{class_name(k)}.png",
                        seg.paste(seg.prob[:, :, k], image.shape[:2]))
    counts = np.bincount(labels.reshape(-1), minlength=seg.prob.shape[2])
    b = seg.box
    return {"image": str(args.image), "mask": str(args.out), "box": [b.x, b.y, b.w, b.h],
            "pixels": {class_name(k): int(c) for k, c in enumerate(counts)}}


def cmd_refine(args) -> dict:
    engine = load_engine(args)
    image = read_image(args.image)
    alpha = engine.refine(image, args.class_id, args.roi_box)
    write_alpha(args.out, alpha)
    gf = engine.gf_params
    return {"image": str(args.image), "alpha": str(args.out), "class": class_name(args.class_id),
            "guided_filter": {"s": gf.s, "r": gf.r, "eps": gf.eps}, "mean_alpha": float(alpha.mean())}


def cmd_dye(args) -> dict:
    engine = load_engine(args)
    image = read_image(args.image)
    out = engine.dye(image, args.colour, args.strength, args.roi_box)
    write_image(args.out, out)
    return {"image": str(args.image), "output": str(args.out), "color": args.colour, "strength": args.strength}


def cmd_grade(args) -> dict:
    forest = load_forest_file(args.forest)
    engine = load_engine(args)
    image = read_image(args.image)
    space = args.space or args.run_config["color_space"]
    try:
        result = engine.grade(image, forest, args.roi_box, args.method, space)
    except DomainError as e:
        raise DomainError(f"no face pixels left in {args.image} after masking; nothing to grade") from e
    return {"image": str(args.image), "space": space, "method": args.method, "grade": result["class_name"],
            "class_id": result["class_id"],
            "votes": {name: v for name, v in zip(forest.class_names, result["votes"])}}


def cmd_features(args) -> dict:
    engine = load_engine(args) if args.weights else None
    space = args.space or args.run_config["color_space"]
    data, _ = dataset_features(args.data_dir, args.method, space, engine, args.run_config)
    colorfeat.write_features_csv(args.out, data.features, data.labels,
                                 colorfeat.feature_names(args.method, space))
    return {"features": str(args.out), "rows": len(data), "dims": data.n_features,
            "method": args.method, "space": space}


def cmd_train_forest(args) -> dict:
    rc = args.run_config
    data = colorfeat.read_features_csv(args.features)
    report = run_training(data, forest_params(args), rc["test_fraction"], rc["seed"], rc["split_first"])
    modelio.save_forest(report.forest, args.out)
    record = {"forest": str(args.out), "trees": len(report.forest.trees),
              "train": len(report.train), "test": len(report.test)}
    if report.confusion is not None:
        record["accuracy"] = report.confusion.accuracy
        record["adjacent_error_share"] = report.confusion.adjacent_error_share()
        record["confusion"] = report.confusion.counts.tolist()
    return record


def cmd_eval(args) -> dict:
    root = Path(args.data_dir)
    engine = None if args.pred_dir else load_engine(args)
    conf = SegConfusion.empty(args.num_classes)
    index = read_dataset_index(root)
    for record in index.itertuples(index=False):
        truth = read_label_mask(root / record.mask)
        if args.pred_dir:
            pred = read_label_mask(Path(args.pred_dir) / Path(record.mask).name)
        else:
            image = read_image(root / record.image)
            seg = engine.segment(image)
            pred = seg.labels
        conf = accumulate(conf, truth, pred)
    report = metric_report(conf)
    report["images"] = len(index)
    report["class_iou"] = {class_name(k): v for k, v in enumerate(report["class_iou"])}
    return report


def cmd_bench(args) -> dict:
    bench = args.run_config["bench"]
    if args.weights:
        model = load_engine(args).model
    else:
        cfg = hlnet.HLNetConfig(num_classes=args.num_classes)
        model = hlnet.build(hlnet.init_weights(cfg, args.run_config["seed"]), cfg=cfg)
    report = benchmark(model, bench["iterations"], bench["warmup"], args.threads, args.run_config["seed"])
    report["weights"] = str(args.weights) if args.weights else "random"
    return report


def cmd_make_dataset(args) -> dict:
    out = generate_skin_dataset(args.out, args.count, args.size, args.run_config["seed"])
    return {"dataset": str(out), "images": args.count, "size": args.size,
            "classes": list(config.SKIN_TONE_CLASSES)}


def cmd_grade_ablation(args) -> dict:
    rc = args.run_config
    rows = []
    for space in ABLATION_SPACES:
        for method in ABLATION_METHODS:
            data, _ = dataset_features(args.data_dir, method, space, None, rc)
            preprocess = pca_preprocess(rc["pca_components"]) if method == "hist256" else None
            report = run_training(data, forest_params(args), rc["test_fraction"], rc["seed"],
                                  rc["split_first"], preprocess)
            rows.append({"space": space, "method": method + ("+pca" if preprocess else ""),
                         "accuracy": report.confusion.accuracy if report.confusion else None})
            logger.info("%s %s: %s", space, method, rows[-1]["accuracy"])
    best = max(rows, key=lambda r: r["accuracy"] or 0.0)
    return {"rows": rows, "best": f"{best['space']}/{best['method']}", "best_accuracy": best["accuracy"]}


# --- output -----------------------------------------------------------------

def _display(value) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    if isinstance(value, (dict, list)):
        return json.dumps(value)
    return str(value)


def print_record(command: str, record: dict) -> None:
    table = Table(title=f"hlseg {command}")
    table.add_column("Metric")
    table.add_column("Value")
    for key, value in record.items():
        if key not in ("rows", "confusion", "hardware"):
            table.add_row(key, _display(value))
    console.print(table)
    if "confusion" in record:
        cm = Table(title="Confusion matrix (rows: truth)")
        cm.add_column("")
        names = config.SKIN_TONE_CLASSES
        for name in names:
            cm.add_column(name)
        for name, row in zip(names, record["confusion"]):
            cm.add_row(name, *(str(v) for v in row))
        console.print(cm)
    if "rows" in record:
        grid = Table(title="Feature ablation")
        for column in record["rows"][0]:
            grid.add_column(column)
        for row in record["rows"]:
            grid.add_row(*(_display(v) for v in row.values()))
        console.print(grid)
    if "hardware" in record:
        console.print(f"[dim]{_display(record['hardware'])}[/dim]")
    print_colored(f"{command}: done", Fore.GREEN)


def report_failure(args, error: Exception, code: int) -> int:
    kind = getattr(error, "kind", type(error).__name__)
    if getattr(args, "json", False):
        print(json.dumps({"status": "error", "kind": kind, "message": str(error), "exit_code": code}))
    else:
        print_colored(f"Error: {error}", Fore.RED, file=sys.stderr)
    return code


def build_run_config(args) -> dict:
    rc = config.load_run_config(args.config)
    if args.seed is not None:
        rc["seed"] = args.seed
    overrides = {
        "roi_factor": ("roi_factor",),
        "gf_s": ("guided_filter", "s"), "gf_r": ("guided_filter", "r"), "gf_eps": ("guided_filter", "eps"),
        "n_trees": ("forest", "n_trees"), "max_depth": ("forest", "max_depth"),
        "min_samples_split": ("forest", "min_samples_split"),
        "features_per_split": ("forest", "features_per_split"),
        "test_fraction": ("test_fraction",), "pca_components": ("pca_components",),
        "iterations": ("bench", "iterations"), "warmup": ("bench", "warmup"),
    }
    for attr, path in overrides.items():
        value = getattr(args, attr, None)
        if value is not None:
            target = rc
            for key in path[:-1]:
                target = target[key]
            target[path[-1]] = value
    if getattr(args, "split_first", False):
        rc["split_first"] = True
    return rc


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog="hlseg", description="Portrait segmentation and skin-tone grading")
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument("--json", action="store_true", help="Emit one JSON line per result on stdout")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    parser.add_argument("--quiet", action="store_true", help="Errors only")
    parser.add_argument("--report", help="Write an HTML report to this path")
    parser.add_argument("--seed", type=int, help=f"Random seed (default {config.SEED})")
    parser.add_argument("--threads", type=int, help=f"Worker threads (env {config.THREADS_ENV} wins)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    model = CliParser(add_help=False)
    model.add_argument("--weights", required=True, help=".hlnw weight file")
    model.add_argument("--num-classes", type=int, default=config.NUM_CLASSES)
    image = CliParser(add_help=False)
    image.add_argument("image", help="Input image (PNG or PPM)")
    image.add_argument("--roi", help="Face box x,y,w,h; the full frame when omitted")
    image.add_argument("--roi-factor", type=float, help=f"ROI enlargement (default {config.ROI_FACTOR})")
    gf = CliParser(add_help=False)
    gf.add_argument("--gf-s", type=int, help=f"Guided filter subsampling (default {config.GF_SUBSAMPLE})")
    gf.add_argument("--gf-r", type=int, help=f"Guided filter radius (default {config.GF_RADIUS})")
    gf.add_argument("--gf-eps", type=float, help=f"Guided filter eps (default {config.GF_EPS})")
    trees = CliParser(add_help=False)
    trees.add_argument("--n-trees", type=int)
    trees.add_argument("--max-depth", type=int)
    trees.add_argument("--min-samples-split", type=int)
    trees.add_argument("--features-per-split", type=int)
    trees.add_argument("--test-fraction", type=float)
    trees.add_argument("--split-first", action="store_true", help="Oversample the training fold only")
    features = CliParser(add_help=False)
    features.add_argument("--space", choices=ABLATION_SPACES, help="Colour space (default from config)")

    p = sub.add_parser("init-weights", help="Write random HLNet weights")
    p.add_argument("--out", required=True)
    p.add_argument("--num-classes", type=int, default=config.NUM_CLASSES)
    p.add_argument("--manifest", help="Also write a tensor manifest")
    p.set_defaults(handler=cmd_init_weights)

    p = sub.add_parser("segment", parents=[model, image], help="Label mask of an image")
    p.add_argument("--out", required=True, help="Label mask PNG")
    p.add_argument("--prob-dir", help="Directory for per-class probability maps")
    p.set_defaults(handler=cmd_segment)

    p = sub.add_parser("refine", parents=[model, image, gf], help="Guided-filter alpha matte")
    p.add_argument("--out", required=True)
    p.add_argument("--class", dest="class_id", type=int, default=config.HAIR)
    p.set_defaults(handler=cmd_refine)

    p = sub.add_parser("dye", parents=[model, image, gf], help="Recolour hair")
    p.add_argument("--out", required=True)
    p.add_argument("--color", required=True, help="Target colour r,g,b")
    p.add_argument("--strength", type=float, default=1.0)
    p.set_defaults(handler=cmd_dye)

    p = sub.add_parser("grade", parents=[model, image, features], help="Skin-tone grade of an image")
    p.add_argument("--forest", required=True, help=".hlrf forest file")
    p.add_argument("--method", choices=("moments", "hist8", "hist256"), default="moments")
    p.set_defaults(handler=cmd_grade)

    p = sub.add_parser("features", parents=[features], help="Feature CSV of a labelled dataset")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("moments", "hist8", "hist256"), default="moments")
    p.add_argument("--weights", help="Segment with this network when truth masks are missing")
    p.add_argument("--num-classes", type=int, default=config.NUM_CLASSES)
    p.set_defaults(handler=cmd_features)

    p = sub.add_parser("train-forest", parents=[trees], help="Train and evaluate a grading forest")
    p.add_argument("--features", required=True, help="Feature CSV")
    p.add_argument("--out", required=True, help=".hlrf output")
    p.set_defaults(handler=cmd_train_forest)

    p = sub.add_parser("eval", help="Segmentation metrics over a labelled dataset")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--weights", help=".hlnw weight file (unless --pred-dir)")
    p.add_argument("--pred-dir", help="Precomputed label masks named like the truth masks")
    p.add_argument("--num-classes", type=int, default=config.NUM_CLASSES)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("bench", help="Forward-pass latency")
    p.add_argument("--weights", help=".hlnw weight file; random weights when omitted")
    p.add_argument("--num-classes", type=int, default=config.NUM_CLASSES)
    p.add_argument("--iterations", type=int)
    p.add_argument("--warmup", type=int)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("make-dataset", help="Synthetic five-tone portrait dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--size", type=int, default=96)
    p.set_defaults(handler=cmd_make_dataset)

    p = sub.add_parser("grade-ablation", parents=[trees], help="Colour space x feature accuracy grid")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--pca-components", type=int)
    p.set_defaults(handler=cmd_grade_ablation)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose, args.quiet)
    start_time = datetime.now()
    try:
        args.run_config = build_run_config(args)
        args.threads = config.resolve_threads(args.threads or args.run_config["threads"])
        args.roi_box = parse_roi(args)
        args.colour = parse_colour(args.color) if getattr(args, "color", None) else None
    except (ParameterError, OSError, yaml.YAMLError) as e:
        return report_failure(args, e, EXIT_USAGE)
    if args.command == "eval" and not (args.weights or args.pred_dir):
        return report_failure(args, ParameterError("eval needs --weights or --pred-dir"), EXIT_USAGE)

    try:
        record = args.handler(args)
    except (LoadError, ModelFormatError, CorruptionError) as e:
        return report_failure(args, e, EXIT_MODEL_FILES)
    except (HLSegError, OSError) as e:
        logger.debug("command %s failed", args.command, exc_info=True)
        return report_failure(args, e, EXIT_PROCESSING)

    if args.json:
        print(json.dumps({"status": "ok", "command": args.command, **record}))
    else:
        print_record(args.command, record)
    if args.report:
        details = record.get("rows")
        summary = {k: v for k, v in record.items() if k != "rows"}
        generate_html_report(args.command, start_time, summary, details, args.report)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
