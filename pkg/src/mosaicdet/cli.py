"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import __version__
from .dataset import (
    DatasetConfig,
    DatasetManifest,
    LabelParseError,
    LabelRecord,
    ManifestEntry,
    VisibilityConfig,
    discover_dataset,
    emit_partial_suite,
    format_key_values,
    load_labeled_image,
    parse_key_values,
    parse_prediction_file,
    read_label_path,
    read_manifest,
    save_raster,
    split_dataset,
    write_label_file,
    write_manifest,
    HALVES,
    HALF_SUFFIX,
)
from .evaluation import (
    AP_MODES,
    Detection,
    EvalReport,
    GroundTruth,
    evaluate,
    format_report,
)
from .mosaic import (
    AUGMENT_KINDS,
    AugmentOp,
    MosaicConfig,
    basic_augment,
    derive_seed,
    format_pass_manifest,
    run_mosaic_pass,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _on_off(value) -> bool:
    if isinstance(value, bool):
        return value
    v = str(value).strip().lower()
    if v in ("on", "true", "yes", "1"):
        return True
    if v in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {value!r}")


def _ratios(value) -> Tuple[float, float, float]:
    if isinstance(value, tuple):
        return value
    parts = tuple(float(p) for p in str(value).split(","))
    if len(parts) != 3:
        raise ValueError(f"expected three comma-separated ratios, got {value!r}")
    return parts  # type: ignore[return-value]


@dataclass
class RunConfig:
    seed: int = 0
    canvas_width: int = 640
    canvas_height: int = 640
    ratios: Tuple[float, float, float] = (0.7, 0.2, 0.1)
    stratify: bool = True
    min_visible: float = 0.25
    min_box_pixels: float = 2.0
    ap_interp: str = "all"
    conf_cutoff: float = 0.25
    mosaic: bool = True
    recycle: bool = True
    scored_crops: bool = False
    count: int = 0
    center_low: float = 0.25
    center_high: float = 0.75
    shear: float = 0.1
    interpolation: str = "bilinear"
    workers: int = 1
    names: str = ""
    dataset_root: str = "."
    output_root: str = "out"

    def validate(self) -> None:
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be an unsigned 64-bit integer")
        if len(self.ratios) != 3 or any(r <= 0 for r in self.ratios) or abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"ratios must be three positive numbers summing to 1, got {self.ratios}")
        if self.ap_interp not in AP_MODES:
            raise ValueError(f"ap_interp must be one of {AP_MODES}")
        if not 0.0 <= self.conf_cutoff <= 1.0:
            raise ValueError("conf_cutoff must lie in [0, 1]")
        if not 0.0 <= self.shear <= 0.5:
            raise ValueError("shear must lie in [0, 0.5]")
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        self.visibility()
        self.mosaic_config()

    def visibility(self) -> VisibilityConfig:
        return VisibilityConfig(self.min_visible, self.min_box_pixels)

    def mosaic_config(self) -> MosaicConfig:
        return MosaicConfig(
            canvas_width=self.canvas_width,
            canvas_height=self.canvas_height,
            center_range=(self.center_low, self.center_high),
            visibility=self.visibility(),
            interpolation=self.interpolation,
            recycle=self.recycle,
            scored_crops=self.scored_crops,
        )

    def to_text(self) -> str:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "on" if v else "off"
            elif isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            out[f.name] = v
        return format_key_values(out)


CONFIG_HELP = {
    "seed": "master seed (unsigned 64-bit)",
    "canvas_width": "mosaic canvas width in pixels",
    "canvas_height": "mosaic canvas height in pixels",
    "ratios": "train,val,test split ratios",
    "stratify": "stratify the split by category (on/off)",
    "min_visible": "drop clipped boxes keeping less than this fraction of their area",
    "min_box_pixels": "drop clipped boxes whose shorter side is below this many pixels",
    "ap_interp": "AP integration: all, 11pt or 101pt",
    "conf_cutoff": "confidence cutoff for reported precision/recall",
    "mosaic": "emit mosaic images in augment (on/off)",
    "recycle": "recycle mosaic leftovers into extra mosaics (on/off)",
    "scored_crops": "weight mosaic sources by box coverage (on/off)",
    "count": "number of mosaics; 0 means one per source image",
    "center_low": "lower bound of the mosaic center, fraction of canvas",
    "center_high": "upper bound of the mosaic center, fraction of canvas",
    "shear": "maximum absolute shear factor for basic augmentation",
    "interpolation": "pixel resampling: bilinear or nearest",
    "workers": "worker threads for mosaic generation",
    "names": "comma-separated category names (default: category indices)",
    "dataset_root": "dataset directory for split",
    "output_root": "output directory",
}

_CONVERTERS = {
    int: int,
    float: float,
    bool: _on_off,
    str: str,
}


def _convert(name: str, raw):
    default = getattr(RunConfig, name)
    if name == "ratios":
        return _ratios(raw)
    return _CONVERTERS[type(default)](raw)


def load_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, overridden by ``--config`` file, overridden by flags."""
    values: Dict[str, object] = {}
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot read config {args.config}: {exc}", EXIT_IO) from None
        try:
            file_values = parse_key_values(text)
        except LabelParseError as exc:
            raise CliError(f"{args.config}: {exc}") from None
        unknown = set(file_values) - set(CONFIG_HELP)
        if unknown:
            raise CliError(f"{args.config}: unknown config keys {sorted(unknown)}")
        values.update(file_values)
    for name in CONFIG_HELP:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    cfg = RunConfig()
    cfg.explicit = frozenset(values)
    try:
        for name, raw in values.items():
            setattr(cfg, name, _convert(name, raw))
        cfg.validate()
    except ValueError as exc:
        raise CliError(f"invalid config: {exc}") from None
    return cfg


def _prepare_output(cfg: RunConfig, root: Optional[str] = None) -> Path:
    out = Path(root or cfg.output_root)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "effective_config.txt").write_text(cfg.to_text(), encoding="utf-8", newline="\n")
    except OSError as exc:
        raise CliError(f"cannot write to {out}: {exc}", EXIT_IO) from None
    return out


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from None


def _read_manifest(path: str) -> DatasetManifest:
    try:
        return read_manifest(path)
    except OSError as exc:
        raise CliError(f"cannot read {exc.filename or path}: {exc.strerror}", EXIT_IO) from None
    except (LabelParseError, ValueError) as exc:
        raise CliError(str(exc)) from None


def _names(cfg: RunConfig) -> Dict[int, str]:
    if not cfg.names:
        return {}
    return {i: n.strip() for i, n in enumerate(cfg.names.split(","))}


# ---------------------------------------------------------------------------
# split


def cmd_split(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    root = Path(cfg.dataset_root)
    if not root.is_dir():
        raise CliError(f"dataset root {root} does not exist", EXIT_IO)
    try:
        manifest, missing = discover_dataset(root)
    except LabelParseError as exc:
        raise CliError(str(exc)) from None
    if missing:
        raise CliError("missing label files for:\n" + "\n".join(missing))
    if not manifest.entries:
        raise CliError("no images found")
    try:
        train, val, test = split_dataset(manifest, cfg.ratios, cfg.seed, cfg.stratify)
    except ValueError as exc:
        raise CliError(str(exc)) from None

    out = _prepare_output(cfg)
    for part in (train, val, test):
        try:
            write_manifest(part, out / f"{part.split}.txt")
        except OSError as exc:
            raise CliError(f"cannot write manifest: {exc}", EXIT_IO) from None
    cats = manifest.categories()
    count = (max(cats) + 1) if cats else 0
    names = _names(cfg)
    data_cfg = DatasetConfig(
        "train.txt", "val.txt", "test.txt", count, [names.get(i, str(i)) for i in range(count)]
    )
    _write_text(out / "dataset.cfg", data_cfg.to_text())
    print(f"train={len(train)} val={len(val)} test={len(test)} total={len(manifest)}")
    for w in train.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# augment


def _load_images(manifest: DatasetManifest, with_raster: bool = True):
    images = []
    for e in manifest.entries:
        try:
            images.append(load_labeled_image(e.image, e.label, with_raster=with_raster))
        except LabelParseError as exc:
            raise CliError(str(exc)) from None
        except OSError as exc:
            raise CliError(f"cannot read {exc.filename or e.image}: {exc}", EXIT_IO) from None
    return images


def _emit(img, out: Path, entries: List[ManifestEntry]) -> None:
    image_path = out / "images" / f"{img.image_id}.png"
    label_path = out / "labels" / f"{img.image_id}.txt"
    records = [LabelRecord.from_bbox(c, b) for c, b in img.boxes]
    _write_text(label_path, write_label_file(records))
    if img.raster is not None:
        try:
            save_raster(img.raster, image_path)
        except OSError as exc:
            raise CliError(f"cannot write {image_path}: {exc}", EXIT_IO) from None
    entries.append(ManifestEntry(str(image_path), str(label_path)))


def cmd_augment(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    manifest = _read_manifest(args.manifest)
    if not manifest.entries:
        raise CliError("no images found")
    images = _load_images(manifest, with_raster=not args.labels_only)
    out = _prepare_output(cfg)
    emitted: List[ManifestEntry] = []

    n_basic = 0
    for i, img in enumerate(images):
        for kind in AUGMENT_KINDS:
            op = AugmentOp(kind, None if kind != "hflip" else 0.0)
            aug = basic_augment(
                img,
                op,
                seed=derive_seed(cfg.seed, f"basic:{i}:{kind}"),
                visibility=cfg.visibility(),
                max_shear=cfg.shear,
                interpolation=cfg.interpolation,
            )
            _emit(aug, out, emitted)
            n_basic += 1

    n_mosaic = n_extra = 0
    if cfg.mosaic:
        result = run_mosaic_pass(
            images,
            count=cfg.count or len(images),
            config=cfg.mosaic_config(),
            master_seed=cfg.seed,
            workers=cfg.workers,
            render=not args.labels_only,
        )
        paths = []
        for item in result.all_items():
            _emit(item.labeled_image(), out, emitted)
            paths.append(f"images/{item.name}.png")
        _write_text(out / "mosaic_manifest.txt", format_pass_manifest(result, paths))
        n_mosaic, n_extra = len(result.mosaics), len(result.extras)

    try:
        write_manifest(DatasetManifest(emitted, "augmented", cfg.seed), out / "augmented.txt")
    except OSError as exc:
        raise CliError(f"cannot write manifest: {exc}", EXIT_IO) from None
    print(f"basic={n_basic} mosaic={n_mosaic} recycled={n_extra}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# crop-partial


def cmd_crop_partial(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    manifest = _read_manifest(args.manifest)
    images = _load_images(manifest, with_raster=not args.labels_only)
    out = _prepare_output(cfg)
    per_half: Dict[str, List[ManifestEntry]] = {h: [] for h in HALVES}
    box_counts = {h: 0 for h in HALVES}
    for img in images:
        for half, crop in zip(HALVES, emit_partial_suite(img, cfg.visibility())):
            _emit(crop, out / half, per_half[half])
            box_counts[half] += len(crop.boxes)
    for half in HALVES:
        tag = HALF_SUFFIX[half].lstrip("_")
        try:
            write_manifest(DatasetManifest(per_half[half], f"test{HALF_SUFFIX[half]}", manifest.seed),
                           out / f"test_{tag}.txt")
        except OSError as exc:
            raise CliError(f"cannot write manifest: {exc}", EXIT_IO) from None
        print(f"{half}: images={len(per_half[half])} boxes={box_counts[half]}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval / report


def _ground_truth(manifest: DatasetManifest) -> Tuple[List[GroundTruth], List[str]]:
    gts, ids = [], []
    for e in manifest.entries:
        image_id = Path(e.image).stem
        ids.append(image_id)
        try:
            records = read_label_path(e.label)
        except OSError as exc:
            raise CliError(f"cannot read {e.label}: {exc.strerror}", EXIT_IO) from None
        except LabelParseError as exc:
            raise CliError(str(exc)) from None
        gts.extend(GroundTruth(image_id, r.category, r.bbox(), "normalized") for r in records)
    return gts, ids


def _predictions(pred_dir: str, image_ids: Sequence[str]) -> Tuple[List[Detection], int]:
    root = Path(pred_dir)
    if not root.is_dir():
        raise CliError(f"prediction directory {root} does not exist", EXIT_IO)
    dets, files = [], 0
    for image_id in image_ids:
        path = root / f"{image_id}.txt"
        if not path.exists():
            continue
        files += 1
        try:
            preds = parse_prediction_file(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from None
        except LabelParseError as exc:
            raise CliError(f"{path}:{exc}") from None
        dets.extend(Detection(image_id, p.category, p.bbox(), p.confidence, "normalized") for p in preds)
    return dets, files


def evaluate_dir(gt_manifest: DatasetManifest, pred_dir: str, cfg: RunConfig, thresholds=None) -> EvalReport:
    gts, ids = _ground_truth(gt_manifest)
    dets, files = _predictions(pred_dir, ids)
    kwargs = {} if thresholds is None else {"thresholds": thresholds}
    try:
        report = evaluate(dets, gts, cfg.ap_interp, cfg.conf_cutoff, **kwargs)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if files == 0:
        report.warnings.append(f"no prediction files found in {pred_dir}")
    return report


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    manifest = _read_manifest(args.gt)
    names = _names(cfg)
    if args.threshold is not None:
        if not 0.0 < args.threshold <= 1.0:
            raise CliError("threshold must lie in (0, 1]")
        report = evaluate_dir(manifest, args.pred, cfg, thresholds=(args.threshold,))
        text = f"mAP {args.threshold:g}\n{report.map50:.4f}\n\nmap@{args.threshold:g}={report.map50!r}\n"
        for w in report.warnings:
            text += f"warning: {w}\n"
    else:
        report = evaluate_dir(manifest, args.pred, cfg)
        text = format_report(report, names)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    sys.stdout.write(text)
    if "output_root" in cfg.explicit:
        out = _prepare_output(cfg)
        _write_text(out / "report.txt", text)
        if not args.no_figures:
            from .plotting import plot_map_by_threshold, plot_pr_curves

            plot_pr_curves(report, out / "pr_curve.png", names)
            if args.threshold is None:
                plot_map_by_threshold(report, out / "map_by_threshold.png")
    return EXIT_OK


def format_comparison(rows: Sequence[Tuple[str, Optional[float], Optional[float], str]], sep: str = "  ") -> str:
    width = max([len("Models")] + [len(r[0]) for r in rows])
    lines = [f"{'Models':<{width}}{sep}mAP 0.5{sep}mAP 0.5:0.95" if sep != "\t" else "Models\tmAP 0.5\tmAP 0.5:0.95"]
    for name, m50, m5095, err in rows:
        label = f"{name:<{width}}" if sep != "\t" else name
        if m50 is None:
            lines.append(f"{label}{sep}FAILED{sep}{err}")
        else:
            lines.append(f"{label}{sep}{m50:.4f}{sep}{m5095:.4f}")
    return "\n".join(lines) + "\n"


def _parse_arm(text: str) -> Tuple[str, str]:
    name, sep, path = text.partition("=")
    if not sep or not name or not path:
        raise CliError(f"--arm expects NAME=DIR, got {text!r}")
    return name, path


def cmd_report(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    if not args.arm:
        raise CliError("report needs at least one --arm NAME=DIR")
    manifest = _read_manifest(args.gt)
    rows = []
    kv = []
    failed = False
    for text in args.arm:
        name, path = _parse_arm(text)
        try:
            report = evaluate_dir(manifest, path, cfg)
        except CliError as exc:
            failed = True
            rows.append((name, None, None, str(exc).splitlines()[0]))
            continue
        rows.append((name, report.map50, report.map5095, ""))
        kv.append(f"arm={name} map50={report.map50!r} map5095={report.map5095!r}")
    table = format_comparison(rows)
    sys.stdout.write(table)
    if "output_root" in cfg.explicit:
        out = _prepare_output(cfg)
        _write_text(out / "report.txt", table)
        _write_text(out / "report.tsv", format_comparison(rows, sep="\t"))
        _write_text(out / "report.kv", "\n".join(kv) + "\n")
        if not args.no_figures:
            from .plotting import plot_comparison

            plot_comparison([(n, a, b) for n, a, b, _ in rows], out / "comparison.png", args.title or "")
    return EXIT_INPUT if failed else EXIT_OK


# ---------------------------------------------------------------------------
# losscheck


def _floats(text: str, n: int, flag: str) -> List[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise CliError(f"{flag} expects {n} comma-separated numbers") from None
    if len(vals) != n:
        raise CliError(f"{flag} expects {n} comma-separated numbers")
    return vals


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise CliError(f"{args.kernel} needs --{' --'.join(missing)}")


def cmd_losscheck(args: argparse.Namespace) -> int:
    import numpy as np

    from . import geometry, losses

    k = args.kernel
    try:
        if k == "bce":
            _require(args, "x", "y")
            w = 1.0 if args.w is None else args.w
            pc = 1.0 if args.pc is None else args.pc
            point = [args.x]
            f = lambda v: losses.bce_with_logits(v[0], args.y, w, pc, reduction="sum")  # noqa: E731
            grad = [float(losses.bce_with_logits_grad(args.x, args.y, w, pc, reduction="sum"))]
        elif k == "focal":
            _require(args, "p", "y")
            params = losses.FocalParams(
                0.25 if args.alpha is None else args.alpha, 2.0 if args.gamma is None else args.gamma
            )
            yv = int(args.y)
            if yv != args.y:
                raise losses.DomainError(f"focal target must be an integer label, got {args.y}")
            point = [args.p]
            f = lambda v: losses.focal_loss(v[0], yv, params)  # noqa: E731
            grad = [losses.focal_loss_grad(args.p, yv, params)]
        elif k == "qfl":
            _require(args, "sigma", "y")
            params = losses.QFLParams(2.0 if args.beta is None else args.beta)
            point = [args.sigma]
            f = lambda v: losses.quality_focal_loss(v[0], args.y, params)  # noqa: E731
            grad = [losses.quality_focal_loss_grad(args.sigma, args.y, params)]
        elif k == "smooth":
            _require(args, "y")
            params = losses.SmoothingParams(0.1 if args.ls is None else args.ls)
            point = [args.y]
            f = lambda v: losses.smooth_labels(v[0], params)  # noqa: E731
            grad = [losses.smooth_labels_grad(args.y, params)]
        elif k == "ciou":
            _require(args, "b", "gt")
            b = geometry.as_bbox(_floats(args.b, 4, "--b"))
            gt = geometry.as_bbox(_floats(args.gt, 4, "--gt"))
            if gt.width <= 0 or gt.height <= 0:
                raise losses.DomainError("ground-truth box needs positive width and height")
            point = list(b.as_tuple())
            f = lambda v: geometry.ciou_loss(geometry.as_bbox(v), gt)  # noqa: E731
            grad = list(geometry.ciou_loss_grad(b, gt))
        else:  # pragma: no cover - argparse restricts choices
            raise CliError(f"unknown kernel {k}")
        value = float(f(np.asarray(point, dtype=float)))
    except ValueError as exc:
        raise CliError(str(exc)) from None

    fmt = lambda xs: ",".join(repr(float(x)) for x in xs)  # noqa: E731
    print(f"kernel={k}")
    print(f"value={value!r}")
    print(f"gradient={fmt(grad)}")
    steps = [args.eps * max(1.0, abs(v)) for v in point]
    try:
        fd = losses.finite_difference_gradient(f, point, steps)
    except ValueError as exc:
        print(f"fd_gradient=unavailable ({exc})")
        return EXIT_OK
    print(f"fd_gradient={fmt(fd)}")
    print(f"max_rel_error={losses.max_relative_error(grad, fd, floor=1e-12):.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("config keys (flags > --config file > defaults)")
    group.add_argument("--config", metavar="FILE", help="key = value config file")
    defaults = RunConfig()
    for name, text in CONFIG_HELP.items():
        default = getattr(defaults, name)
        if isinstance(default, bool):
            shown = "on" if default else "off"
        elif isinstance(default, tuple):
            shown = ",".join(str(x) for x in default)
        else:
            shown = default
        group.add_argument(
            "--" + name.replace("_", "-"),
            dest=name,
            default=None,
            metavar="VALUE",
            help=f"{text} (default: {shown})",
        )
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mosaicdet",
        description="Detection dataset augmentation and evaluation toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parent = _config_parent()

    p = sub.add_parser("split", parents=[parent], help="seeded train/val/test split of a dataset root")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("augment", parents=[parent], help="flip/shear and mosaic augmentation")
    p.add_argument("--manifest", required=True, help="manifest of images to augment")
    p.add_argument("--labels-only", action="store_true", help="skip pixel work, emit labels only")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("crop-partial", parents=[parent], help="left/right/upper/lower half test sets")
    p.add_argument("--manifest", required=True, help="manifest of test images")
    p.add_argument("--labels-only", action="store_true", help="skip pixel work, emit labels only")
    p.set_defaults(func=cmd_crop_partial)

    p = sub.add_parser("eval", parents=[parent], help="evaluate one prediction directory")
    p.add_argument("--gt", required=True, help="ground-truth manifest")
    p.add_argument("--pred", required=True, help="directory of <image-stem>.txt prediction files")
    p.add_argument("--threshold", type=float, default=None, help="single IoU threshold mode")
    p.add_argument("--no-figures", action="store_true", help="do not render figures")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[parent], help="comparison table over several prediction dirs")
    p.add_argument("--gt", required=True, help="ground-truth manifest")
    p.add_argument("--arm", action="append", default=[], metavar="NAME=DIR", help="named prediction dir")
    p.add_argument("--title", default=None, help="figure title")
    p.add_argument("--no-figures", action="store_true", help="do not render figures")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("losscheck", parents=[parent], help="evaluate a loss kernel and check its gradient")
    p.add_argument("kernel", choices=("bce", "focal", "qfl", "smooth", "ciou"))
    for flag in ("x", "y", "w", "pc", "p", "alpha", "gamma", "sigma", "beta", "ls"):
        p.add_argument(f"--{flag}", type=float, default=None)
    p.add_argument("--b", default=None, help="predicted box x1,y1,x2,y2")
    p.add_argument("--gt", default=None, help="ground-truth box x1,y1,x2,y2")
    p.add_argument("--eps", type=float, default=1e-6, help="relative finite-difference step")
    p.set_defaults(func=cmd_losscheck)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
