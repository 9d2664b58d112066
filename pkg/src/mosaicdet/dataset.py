"""Label files, manifests, seeded splits and half-image crops.

Label grammar, one record per line, single spaces, LF endings::

    <category> <cx> <cy> <w> <h>

Prediction files add a sixth ``<confidence>`` field. All coordinates are
normalized to the image size.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import BBox, clip

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
HALVES = ("left", "right", "upper", "lower")
HALF_SUFFIX = {"left": "_L", "right": "_R", "upper": "_U", "lower": "_D"}

# Slack for normalized coordinates that were rounded to 6 decimals.
RANGE_TOL = 1e-6


class LabelParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line
        self.path = path


@dataclass(frozen=True)
class VisibilityConfig:
    """When does a box survive clipping.

    A clipped box is dropped if it keeps less than ``min_visible`` of its
    pre-clip area or if its shorter side is below ``min_box_pixels``.
    """

    min_visible: float = 0.25
    min_box_pixels: float = 2.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.min_visible <= 1.0:
            raise ValueError(f"min_visible must lie in [0, 1], got {self.min_visible}")
        if self.min_box_pixels < 0.0:
            raise ValueError(f"min_box_pixels must be >= 0, got {self.min_box_pixels}")


def visible_clip(box: BBox, viewport: BBox, vis: VisibilityConfig) -> Optional[BBox]:
    """Clip ``box`` (pixels) to ``viewport`` and apply the visibility filter."""
    clipped = clip(box, viewport)
    if clipped is None:
        return None
    if clipped.area < vis.min_visible * box.area:
        return None
    if min(clipped.width, clipped.height) < vis.min_box_pixels:
        return None
    return clipped


@dataclass(frozen=True)
class LabelRecord:
    category: int
    cx: float
    cy: float
    w: float
    h: float

    def validate(self, tol: float = RANGE_TOL) -> None:
        if self.category < 0:
            raise ValueError(f"negative category {self.category}")
        for name in ("cx", "cy", "w", "h"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} is not finite")
        if self.w <= 0.0 or self.h <= 0.0:
            raise ValueError(f"non-positive size w={self.w} h={self.h}")
        lo_x, hi_x = self.cx - self.w / 2.0, self.cx + self.w / 2.0
        lo_y, hi_y = self.cy - self.h / 2.0, self.cy + self.h / 2.0
        if lo_x < -tol or hi_x > 1.0 + tol or lo_y < -tol or hi_y > 1.0 + tol:
            raise ValueError(f"box ({self.cx}, {self.cy}, {self.w}, {self.h}) leaves the unit square")

    def bbox(self) -> BBox:
        """Corner form, clamped into the unit square."""
        b = BBox.from_xywh(self.cx, self.cy, self.w, self.h)
        return BBox(max(b.x_min, 0.0), max(b.y_min, 0.0), min(b.x_max, 1.0), min(b.y_max, 1.0))

    @classmethod
    def from_bbox(cls, category: int, box: BBox) -> "LabelRecord":
        cx, cy, w, h = box.to_xywh()
        return cls(int(category), cx, cy, w, h)


@dataclass(frozen=True)
class PredictionRecord:
    category: int
    cx: float
    cy: float
    w: float
    h: float
    confidence: float

    def bbox(self) -> BBox:
        return BBox.from_xywh(self.cx, self.cy, self.w, self.h)


def _parse_fields(line: str, n_fields: int, lineno: int) -> Tuple[int, List[float]]:
    tokens = line.split(" ")
    if len(tokens) != n_fields or any(t == "" for t in tokens):
        raise LabelParseError(f"expected {n_fields} single-space separated fields, got {line!r}", lineno)
    cat_tok = tokens[0]
    if not cat_tok.isdigit():
        if cat_tok.lstrip("-").isdigit():
            raise LabelParseError(f"negative category {cat_tok}", lineno)
        raise LabelParseError(f"malformed category token {cat_tok!r}", lineno)
    values = []
    for tok in tokens[1:]:
        try:
            v = float(tok)
        except ValueError:
            raise LabelParseError(f"malformed number {tok!r}", lineno) from None
        if not math.isfinite(v):
            raise LabelParseError(f"non-finite number {tok!r}", lineno)
        values.append(v)
    return int(cat_tok), values


def parse_label_file(text: str) -> List[LabelRecord]:
    records = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        cat, (cx, cy, w, h) = _parse_fields(line, 5, lineno)
        rec = LabelRecord(cat, cx, cy, w, h)
        try:
            rec.validate()
        except ValueError as exc:
            raise LabelParseError(str(exc), lineno) from None
        records.append(rec)
    return records


def write_label_file(records: Iterable[LabelRecord]) -> str:
    lines = []
    for rec in records:
        rec.validate()
        lines.append(f"{rec.category:d} {rec.cx:.6f} {rec.cy:.6f} {rec.w:.6f} {rec.h:.6f}\n")
    return "".join(lines)


def parse_prediction_file(text: str) -> List[PredictionRecord]:
    preds = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        cat, (cx, cy, w, h, conf) = _parse_fields(line, 6, lineno)
        try:
            LabelRecord(cat, cx, cy, w, h).validate()
        except ValueError as exc:
            raise LabelParseError(str(exc), lineno) from None
        if not 0.0 <= conf <= 1.0:
            raise LabelParseError(f"confidence {conf} outside [0, 1]", lineno)
        preds.append(PredictionRecord(cat, cx, cy, w, h, conf))
    return preds


def write_prediction_file(preds: Iterable[PredictionRecord]) -> str:
    return "".join(
        f"{p.category:d} {p.cx:.6f} {p.cy:.6f} {p.w:.6f} {p.h:.6f} {p.confidence:.6f}\n" for p in preds
    )


def read_label_path(path: os.PathLike) -> List[LabelRecord]:
    path = Path(path)
    try:
        return parse_label_file(path.read_text(encoding="utf-8"))
    except LabelParseError as exc:
        raise LabelParseError(str(exc), path=str(path)) from None


# ---------------------------------------------------------------------------
# images


@dataclass(frozen=True)
class LabeledImage:
    """An image plus its normalized ground-truth boxes.

    ``raster`` is an optional ``(H, W, 3)`` uint8 array; label-only workflows
    leave it unset and carry just the dimensions.
    """

    image_id: str
    width: int
    height: int
    boxes: Tuple[Tuple[int, BBox], ...] = ()
    raster: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image {self.image_id!r} has zero dimension {self.width}x{self.height}")
        if self.raster is not None and self.raster.shape[:2] != (self.height, self.width):
            raise ValueError(
                f"raster shape {self.raster.shape[:2]} does not match {self.height}x{self.width}"
            )

    def pixel_boxes(self) -> List[Tuple[int, BBox]]:
        return [(c, b.scaled(self.width, self.height)) for c, b in self.boxes]

    def records(self) -> List[LabelRecord]:
        return [LabelRecord.from_bbox(c, b) for c, b in self.boxes]

    def with_raster(self, raster: Optional[np.ndarray]) -> "LabeledImage":
        return LabeledImage(self.image_id, self.width, self.height, self.boxes, raster, self.path)


def load_raster(path: os.PathLike) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def save_raster(raster: np.ndarray, path: os.PathLike) -> None:
    from PIL import Image

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(raster, dtype=np.uint8)).save(path)


def image_size(path: os.PathLike) -> Tuple[int, int]:
    from PIL import Image

    with Image.open(path) as im:
        return im.size


def load_labeled_image(image_path: os.PathLike, label_path: os.PathLike, with_raster: bool = True) -> LabeledImage:
    image_path = Path(image_path)
    records = read_label_path(label_path)
    raster = load_raster(image_path) if with_raster else None
    if raster is not None:
        h, w = raster.shape[:2]
    else:
        w, h = image_size(image_path)
    boxes = tuple((r.category, r.bbox()) for r in records)
    return LabeledImage(image_path.stem, w, h, boxes, raster, str(image_path))


# ---------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class ManifestEntry:
    image: str
    label: str
    categories: frozenset = frozenset()


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry]
    split: str = "none"
    seed: Optional[int] = None
    warnings: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen = set()
        for e in self.entries:
            if e.image in seen:
                raise ValueError(f"duplicate image path {e.image}")
            seen.add(e.image)

    def __len__(self) -> int:
        return len(self.entries)

    def categories(self) -> List[int]:
        cats = set()
        for e in self.entries:
            cats.update(e.categories)
        return sorted(cats)


def label_path_for(image_path: Path) -> Path:
    """YOLO convention: ``.../images/x.png`` -> ``.../labels/x.txt``, else a sibling ``x.txt``."""
    parts = list(image_path.parts)
    if "images" in parts:
        idx = len(parts) - 1 - parts[::-1].index("images")
        parts[idx] = "labels"
        candidate = Path(*parts).with_suffix(".txt")
        if candidate.exists() or not image_path.with_suffix(".txt").exists():
            return candidate
    return image_path.with_suffix(".txt")


def discover_dataset(root: os.PathLike) -> Tuple[DatasetManifest, List[str]]:
    """Scan ``root`` for images; returns the manifest and any images missing labels."""
    root = Path(root)
    images = sorted(
        p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    entries, missing = [], []
    for img in images:
        lab = label_path_for(img)
        if not lab.exists():
            missing.append(str(img))
            continue
        cats = frozenset(r.category for r in read_label_path(lab))
        entries.append(ManifestEntry(str(img), str(lab), cats))
    return DatasetManifest(entries), missing


def _rel(path: str, base: Path) -> str:
    try:
        return Path(os.path.relpath(path, base)).as_posix()
    except ValueError:
        return Path(path).as_posix()


def format_manifest(manifest: DatasetManifest, base: Optional[Path] = None) -> str:
    lines = []
    if manifest.seed is not None:
        lines.append(f"# seed={manifest.seed}")
    lines.append(f"# split={manifest.split}")
    for w in manifest.warnings:
        lines.append(f"# warning={w}")
    for e in manifest.entries:
        img, lab = (e.image, e.label) if base is None else (_rel(e.image, base), _rel(e.label, base))
        lines.append(f"{img}\t{lab}")
    return "\n".join(lines) + "\n"


def write_manifest(manifest: DatasetManifest, path: os.PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_manifest(manifest, base=path.parent.resolve()), encoding="utf-8", newline="\n")


def read_manifest(path: os.PathLike, load_categories: bool = True) -> DatasetManifest:
    path = Path(path)
    base = path.parent
    seed, split, warnings, entries = None, "none", [], []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").split("\n"), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key == "seed":
                seed = int(value)
            elif key == "split":
                split = value
            elif key == "warning":
                warnings.append(value)
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise LabelParseError("expected '<image>\\t<label>'", lineno, str(path))
        img, lab = (str(p if Path(p).is_absolute() else (base / p)) for p in parts)
        cats = frozenset(r.category for r in read_label_path(lab)) if load_categories else frozenset()
        entries.append(ManifestEntry(os.path.normpath(img), os.path.normpath(lab), cats))
    return DatasetManifest(entries, split, seed, warnings)


# ---------------------------------------------------------------------------
# splits


def _allocate(n: int, ratios: Sequence[float]) -> List[int]:
    counts = [int(math.floor(n * r + 1e-9)) for r in ratios]
    remainder = n - sum(counts)
    # leftovers go to train, then val, then train again ...
    targets = [0, 1] if len(ratios) > 1 else [0]
    i = 0
    while remainder > 0:
        counts[targets[i % len(targets)]] += 1
        remainder -= 1
        i += 1
    return counts


def split_dataset(
    manifest: DatasetManifest,
    ratios: Sequence[float] = (0.70, 0.20, 0.10),
    seed: int = 0,
    stratify: bool = True,
    categories: Optional[Iterable[int]] = None,
) -> Tuple[DatasetManifest, DatasetManifest, DatasetManifest]:
    """Seeded train/val/test split.

    Images are grouped by their smallest category index (images without boxes
    form their own group), each group is shuffled and receives
    ``floor(n * ratio)`` images per split; the leftover images go to train and
    then val. With ``stratify=False`` the whole manifest is one group.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0.0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    if not manifest.entries:
        raise ValueError("no images found")

    groups: Dict[int, List[ManifestEntry]] = {}
    for e in sorted(manifest.entries, key=lambda e: e.image):
        key = (min(e.categories) if e.categories else -1) if stratify else 0
        groups.setdefault(key, []).append(e)
    if categories is not None and stratify:
        empty = sorted(set(categories) - set(groups))
        if empty:
            raise ValueError(f"categories without any image: {empty}")

    rng = np.random.Generator(np.random.PCG64(seed))
    parts: Tuple[List[ManifestEntry], ...] = ([], [], [])
    warnings = []
    for key in sorted(groups):
        members = groups[key]
        order = rng.permutation(len(members))
        counts = _allocate(len(members), ratios)
        if counts[0] == 0:
            warnings.append(f"category {key} has no training image")
        start = 0
        for part, n in zip(parts, counts):
            part.extend(members[j] for j in order[start:start + n])
            start += n
    return tuple(  # type: ignore[return-value]
        DatasetManifest(sorted(p, key=lambda e: e.image), tag, seed, list(warnings))
        for p, tag in zip(parts, ("train", "val", "test"))
    )


# ---------------------------------------------------------------------------
# partial crops


def half_viewport(width: int, height: int, half: str) -> BBox:
    """Pixel viewport of one image half; left/upper get ``floor(dim / 2)``."""
    mx, my = width // 2, height // 2
    if half == "left":
        return BBox(0, 0, mx, height)
    if half == "right":
        return BBox(mx, 0, width, height)
    if half == "upper":
        return BBox(0, 0, width, my)
    if half == "lower":
        return BBox(0, my, width, height)
    raise ValueError(f"unknown half {half!r}; expected one of {HALVES}")


def crop_partial(img: LabeledImage, half: str, vis: VisibilityConfig = VisibilityConfig()) -> LabeledImage:
    if img.width < 2 or img.height < 2:
        raise ValueError("image must be at least 2x2 pixels to halve")
    vp = half_viewport(img.width, img.height, half)
    vw, vh = int(vp.width), int(vp.height)
    boxes = []
    for cat, pbox in img.pixel_boxes():
        kept = visible_clip(pbox, vp, vis)
        if kept is None:
            continue
        local = kept.translated(-vp.x_min, -vp.y_min).scaled(1.0 / vw, 1.0 / vh)
        boxes.append((cat, local))
    raster = None
    if img.raster is not None:
        x0, y0 = int(vp.x_min), int(vp.y_min)
        raster = img.raster[y0:y0 + vh, x0:x0 + vw].copy()
    return LabeledImage(img.image_id + HALF_SUFFIX[half], vw, vh, tuple(boxes), raster, None)


def emit_partial_suite(img: LabeledImage, vis: VisibilityConfig = VisibilityConfig()) -> List[LabeledImage]:
    return [crop_partial(img, half, vis) for half in HALVES]


# ---------------------------------------------------------------------------
# dataset config (key = value)


def parse_key_values(text: str) -> Dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise LabelParseError(f"expected 'key = value', got {line!r}", lineno)
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def format_key_values(values: Dict[str, object]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in values.items())


@dataclass
class DatasetConfig:
    train_dir: str
    val_dir: str
    test_dir: str
    category_count: int
    names: List[str]

    def to_text(self) -> str:
        return format_key_values(
            {
                "train_dir": self.train_dir,
                "val_dir": self.val_dir,
                "test_dir": self.test_dir,
                "category_count": self.category_count,
                "names": ",".join(self.names),
            }
        )

    @classmethod
    def from_text(cls, text: str) -> "DatasetConfig":
        kv = parse_key_values(text)
        missing = {"train_dir", "val_dir", "test_dir", "category_count", "names"} - set(kv)
        if missing:
            raise ValueError(f"dataset config is missing keys: {sorted(missing)}")
        names = [n.strip() for n in kv["names"].split(",")] if kv["names"] else []
        count = int(kv["category_count"])
        if len(names) != count:
            raise ValueError(f"{len(names)} names for {count} categories")
        return cls(kv["train_dir"], kv["val_dir"], kv["test_dir"], count, names)
