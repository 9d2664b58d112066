"""Deterministic four-image mosaic augmentation plus flip/shear augmentations.

A mosaic canvas is split into four viewports by a sampled center point. Each
source is uniformly resized so it covers its viewport, an integer-offset crop
the size of the viewport is taken, and the crop is translated into place. Box
remapping is analytic: normalized box -> source pixels -> resized pixels ->
canvas pixels, then clipped to the viewport and filtered for visibility.
Whatever part of a resized source falls outside its crop can be recycled as a
new labeled crop if it still holds a visible box.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .dataset import LabeledImage, VisibilityConfig, load_raster, visible_clip
from .geometry import Affine2D, BBox, affine_apply

FILL_VALUE = 114
AUGMENT_KINDS = ("hflip", "shear_h", "shear_v")


@dataclass(frozen=True)
class MosaicConfig:
    canvas_width: int = 640
    canvas_height: int = 640
    center_range: Tuple[float, float] = (0.25, 0.75)
    visibility: VisibilityConfig = VisibilityConfig()
    interpolation: str = "bilinear"
    recycle: bool = True
    scored_crops: bool = False

    def __post_init__(self) -> None:
        if self.canvas_width < 2 or self.canvas_height < 2:
            raise ValueError("canvas must be at least 2x2 pixels")
        lo, hi = self.center_range
        if not 0.0 < lo <= hi < 1.0:
            raise ValueError(f"center range must satisfy 0 < lo <= hi < 1, got {self.center_range}")
        if self.interpolation not in ("bilinear", "nearest"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")


def derive_seed(master_seed: int, tag) -> int:
    """Stable 64-bit seed for ``(master_seed, tag)``, independent of platform."""
    digest = hashlib.sha256(f"{int(master_seed)}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class TileRecord:
    source_id: str
    source_width: int
    source_height: int
    scale: float
    crop: BBox  # resized-source pixels
    viewport: BBox  # canvas pixels
    placement: Affine2D  # resized-source -> canvas
    leftover_regions: Tuple[BBox, ...] = ()

    @property
    def resized_extent(self) -> Tuple[float, float]:
        return (self.source_width * self.scale, self.source_height * self.scale)

    def source_to_canvas(self) -> Affine2D:
        """Source pixels -> canvas pixels."""
        return self.placement.compose(Affine2D.scale(self.scale))


@dataclass(frozen=True)
class MosaicRecipe:
    canvas_size: Tuple[int, int]
    center: Tuple[int, int]
    tiles: Tuple[TileRecord, ...]
    seed: int

    def to_text(self) -> str:
        """Canonical text form; equal recipes give identical bytes."""
        lines = [
            f"canvas={self.canvas_size[0]}x{self.canvas_size[1]}",
            f"center={self.center[0]},{self.center[1]}",
            f"seed={self.seed}",
        ]
        for i, t in enumerate(self.tiles):
            p = t.placement
            lines.append(
                f"tile{i} source={t.source_id} dims={t.source_width}x{t.source_height} "
                f"scale={t.scale!r} crop={','.join(repr(v) for v in t.crop.as_tuple())} "
                f"viewport={','.join(repr(v) for v in t.viewport.as_tuple())} "
                f"placement={p.a!r},{p.b!r},{p.c!r},{p.d!r},{p.tx!r},{p.ty!r}"
            )
            for r in t.leftover_regions:
                lines.append(f"tile{i} leftover={','.join(repr(v) for v in r.as_tuple())}")
        return "\n".join(lines) + "\n"


def viewports(width: int, height: int, cx: int, cy: int) -> Tuple[BBox, BBox, BBox, BBox]:
    return (
        BBox(0, 0, cx, cy),
        BBox(cx, 0, width, cy),
        BBox(0, cy, cx, height),
        BBox(cx, cy, width, height),
    )


def _leftover_regions(rw: float, rh: float, crop: BBox) -> Tuple[BBox, ...]:
    x0, y0, x1, y1 = crop.as_tuple()
    candidates = [
        BBox(0.0, 0.0, x0, rh),  # left strip, full height
        BBox(x1, 0.0, max(rw, x1), rh),  # right strip, full height
        BBox(x0, 0.0, x1, y0),  # above the crop
        BBox(x0, y1, x1, max(rh, y1)),  # below the crop
    ]
    # sub-pixel slivers come from float rounding of the cover scale
    return tuple(r for r in candidates if r.width >= 1.0 and r.height >= 1.0)


def plan_mosaic(
    sources: Sequence,
    seed: int,
    config: MosaicConfig = MosaicConfig(),
) -> MosaicRecipe:
    """Plan one mosaic from four sources.

    ``sources`` holds four :class:`LabeledImage` objects or ``(id, width,
    height)`` tuples. Only ids and dimensions are used.
    """
    if len(sources) != 4:
        raise ValueError(f"a mosaic needs exactly 4 sources, got {len(sources)}")
    dims = []
    for s in sources:
        sid, w, h = (s.image_id, s.width, s.height) if isinstance(s, LabeledImage) else s
        if int(w) < 1 or int(h) < 1:
            raise ValueError(f"source {sid!r} has zero dimension {w}x{h}")
        dims.append((str(sid), int(w), int(h)))

    W, H = config.canvas_width, config.canvas_height
    lo, hi = config.center_range
    rng = _rng(seed)
    cx = int(rng.integers(math.ceil(lo * W), math.floor(hi * W), endpoint=True))
    cy = int(rng.integers(math.ceil(lo * H), math.floor(hi * H), endpoint=True))

    tiles = []
    for (sid, sw, sh), vp in zip(dims, viewports(W, H, cx, cy)):
        vw, vh = int(vp.width), int(vp.height)
        scale = max(vw / sw, vh / sh)
        rw, rh = sw * scale, sh * scale
        max_ox = max(0, math.floor(rw - vw + 1e-9))
        max_oy = max(0, math.floor(rh - vh + 1e-9))
        ox = int(rng.integers(0, max_ox, endpoint=True))
        oy = int(rng.integers(0, max_oy, endpoint=True))
        crop = BBox(ox, oy, ox + vw, oy + vh)
        placement = Affine2D.translation(vp.x_min - ox, vp.y_min - oy)
        tiles.append(
            TileRecord(sid, sw, sh, scale, crop, vp, placement, _leftover_regions(rw, rh, crop))
        )
    return MosaicRecipe((W, H), (cx, cy), tuple(tiles), int(seed))


def remap_boxes(
    recipe: MosaicRecipe,
    tile_index: int,
    source_boxes: Iterable[Tuple[int, BBox]],
    visibility: VisibilityConfig = VisibilityConfig(),
) -> List[Tuple[int, BBox]]:
    """Normalized source boxes -> surviving canvas-pixel boxes for one tile."""
    tile = recipe.tiles[tile_index]
    to_canvas = tile.source_to_canvas()
    out = []
    for cat, box in source_boxes:
        src_px = box.scaled(tile.source_width, tile.source_height)
        placed = affine_apply(src_px, to_canvas)
        kept = visible_clip(placed, tile.viewport, visibility)
        if kept is not None:
            out.append((cat, kept))
    return out


def recycle_leftovers(
    recipe: MosaicRecipe,
    source_boxes: Sequence[Sequence[Tuple[int, BBox]]],
    visibility: VisibilityConfig = VisibilityConfig(),
    rasters: Optional[Sequence[Optional[np.ndarray]]] = None,
    interpolation: str = "bilinear",
) -> List[LabeledImage]:
    """Turn the uncovered parts of each resized source into labeled crops.

    Regions with no visible box are dropped. Boxes are normalized to the
    region's extent in resized-source pixels.
    """
    out = []
    for ti, tile in enumerate(recipe.tiles):
        for ri, region in enumerate(tile.leftover_regions):
            boxes = []
            for cat, box in source_boxes[ti]:
                resized = box.scaled(tile.source_width * tile.scale, tile.source_height * tile.scale)
                kept = visible_clip(resized, region, visibility)
                if kept is None:
                    continue
                local = kept.translated(-region.x_min, -region.y_min).scaled(
                    1.0 / region.width, 1.0 / region.height
                )
                boxes.append((cat, local))
            if not boxes:
                continue
            w = max(1, int(round(region.width)))
            h = max(1, int(round(region.height)))
            raster = None
            if rasters is not None and rasters[ti] is not None:
                # output pixel j covers resized x in region.x_min + [j, j+1) * region.width / w
                sx = (region.x_min + (np.arange(w) + 0.5) * (region.width / w)) / tile.scale - 0.5
                sy = (region.y_min + (np.arange(h) + 0.5) * (region.height / h)) / tile.scale - 0.5
                gx, gy = np.meshgrid(sx, sy)
                raster = sample(rasters[ti], gx, gy, interpolation)
            image_id = f"{tile.source_id}~{recipe.seed:016x}t{ti}r{ri}"
            out.append(LabeledImage(image_id, w, h, tuple(boxes), raster))
    return out


# ---------------------------------------------------------------------------
# pixels


def sample(
    raster: np.ndarray,
    sx: np.ndarray,
    sy: np.ndarray,
    interpolation: str = "bilinear",
    fill: Optional[int] = None,
) -> np.ndarray:
    """Sample ``raster`` at fractional array coordinates ``(sy, sx)``.

    ``fill=None`` clamps to the nearest edge pixel; otherwise points outside
    the raster get ``fill``.
    """
    src = np.asarray(raster)
    h, w = src.shape[:2]
    if interpolation == "nearest":
        ix = np.floor(sx + 0.5).astype(np.int64)
        iy = np.floor(sy + 0.5).astype(np.int64)
        out = src[np.clip(iy, 0, h - 1), np.clip(ix, 0, w - 1)].astype(np.float64)
    elif interpolation == "bilinear":
        x0 = np.floor(sx).astype(np.int64)
        y0 = np.floor(sy).astype(np.int64)
        fx = (sx - x0)[..., None]
        fy = (sy - y0)[..., None]
        x0c, x1c = np.clip(x0, 0, w - 1), np.clip(x0 + 1, 0, w - 1)
        y0c, y1c = np.clip(y0, 0, h - 1), np.clip(y0 + 1, 0, h - 1)
        f = src.astype(np.float64)
        if f.ndim == 2:
            f = f[..., None]
        top = f[y0c, x0c] * (1.0 - fx) + f[y0c, x1c] * fx
        bot = f[y1c, x0c] * (1.0 - fx) + f[y1c, x1c] * fx
        out = top * (1.0 - fy) + bot * fy
        if src.ndim == 2:
            out = out[..., 0]
    else:
        raise ValueError(f"unknown interpolation {interpolation!r}")
    if fill is not None:
        outside = (sx < -0.5) | (sx > w - 0.5) | (sy < -0.5) | (sy > h - 0.5)
        out[outside] = fill
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def render_mosaic(
    recipe: MosaicRecipe,
    rasters: Sequence[np.ndarray],
    interpolation: str = "bilinear",
) -> np.ndarray:
    """Paint each viewport with the resized-then-cropped pixels of its source."""
    if len(rasters) != 4:
        raise ValueError(f"expected 4 rasters, got {len(rasters)}")
    W, H = recipe.canvas_size
    canvas = np.full((H, W, 3), FILL_VALUE, dtype=np.uint8)
    for tile, raster in zip(recipe.tiles, rasters):
        if raster.shape[:2] != (tile.source_height, tile.source_width):
            raise ValueError(
                f"raster for {tile.source_id!r} is {raster.shape[1]}x{raster.shape[0]}, "
                f"recipe expects {tile.source_width}x{tile.source_height}"
            )
        vp = tile.viewport
        x0, y0, x1, y1 = (int(v) for v in vp.as_tuple())
        tx, ty = tile.placement.tx, tile.placement.ty
        sx = ((np.arange(x0, x1) + 0.5) - tx) / tile.scale - 0.5
        sy = ((np.arange(y0, y1) + 0.5) - ty) / tile.scale - 0.5
        gx, gy = np.meshgrid(sx, sy)
        patch = sample(raster, gx, gy, interpolation)
        if patch.ndim == 2:
            patch = np.repeat(patch[..., None], 3, axis=2)
        canvas[y0:y1, x0:x1] = patch[..., :3]
    return canvas


# ---------------------------------------------------------------------------
# flip / shear


@dataclass(frozen=True)
class AugmentOp:
    kind: str
    magnitude: Optional[float] = 0.0

    def __post_init__(self) -> None:
        if self.kind not in AUGMENT_KINDS:
            raise ValueError(f"unknown augmentation {self.kind!r}")
        if self.magnitude is not None and not -0.5 <= self.magnitude <= 0.5:
            raise ValueError(f"shear magnitude must lie in [-0.5, 0.5], got {self.magnitude}")

    def transform(self, width: int, height: int) -> Affine2D:
        if self.kind == "hflip":
            return Affine2D(a=-1.0, tx=float(width))
        if self.kind == "shear_h":
            return Affine2D.shear(horizontal=self.magnitude or 0.0)
        return Affine2D.shear(vertical=self.magnitude or 0.0)


def basic_augment(
    img: LabeledImage,
    op: AugmentOp,
    seed: Optional[int] = None,
    visibility: VisibilityConfig = VisibilityConfig(),
    max_shear: float = 0.1,
    interpolation: str = "bilinear",
) -> LabeledImage:
    """Horizontal flip or shear about the top-left origin.

    If ``op.magnitude`` is ``None`` a shear factor is drawn uniformly from
    ``[-max_shear, max_shear]`` using ``seed``.
    """
    if op.magnitude is None:
        op = AugmentOp(op.kind, float(_rng(seed or 0).uniform(-max_shear, max_shear)))
    W, H = img.width, img.height
    suffix = f"_{op.kind}" if op.kind == "hflip" else f"_{op.kind}{op.magnitude:+.3f}"

    if op.kind == "hflip":
        # reflect in normalized space so cx -> 1 - cx holds without pixel round-off
        boxes = tuple((c, BBox(1.0 - b.x_max, b.y_min, 1.0 - b.x_min, b.y_max)) for c, b in img.boxes)
        raster = None if img.raster is None else img.raster[:, ::-1].copy()
        return LabeledImage(img.image_id + suffix, W, H, boxes, raster)

    t = op.transform(W, H)
    frame = BBox(0, 0, W, H)
    boxes = []
    for cat, pbox in img.pixel_boxes():
        kept = visible_clip(affine_apply(pbox, t), frame, visibility)
        if kept is not None:
            boxes.append((cat, kept.scaled(1.0 / W, 1.0 / H)))
    raster = None
    if img.raster is not None:
        inv = t.inverse()
        gx, gy = np.meshgrid(np.arange(W) + 0.5, np.arange(H) + 0.5)
        sx = inv.a * gx + inv.b * gy + inv.tx - 0.5
        sy = inv.c * gx + inv.d * gy + inv.ty - 0.5
        raster = sample(img.raster, sx, sy, interpolation, fill=FILL_VALUE)
    return LabeledImage(img.image_id + suffix, W, H, tuple(boxes), raster)


# ---------------------------------------------------------------------------
# passes


@dataclass
class MosaicItem:
    index: int
    generation: int
    seed: int
    source_ids: Tuple[str, ...]
    recipe: MosaicRecipe
    boxes: List[Tuple[int, BBox]]
    leftovers: List[LabeledImage] = field(default_factory=list)
    raster: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def name(self) -> str:
        prefix = "mosaic" if self.generation == 0 else "recycled"
        return f"{prefix}_{self.index:05d}"

    def labeled_image(self) -> LabeledImage:
        W, H = self.recipe.canvas_size
        boxes = tuple((c, b.scaled(1.0 / W, 1.0 / H)) for c, b in self.boxes)
        return LabeledImage(self.name, W, H, boxes, self.raster)


@dataclass
class MosaicPassResult:
    mosaics: List[MosaicItem]
    extras: List[MosaicItem]

    def all_items(self) -> List[MosaicItem]:
        return self.mosaics + self.extras


def _source_weights(pool: Sequence[LabeledImage]) -> np.ndarray:
    # fraction of the image covered by boxes, floored so empty images stay drawable
    w = np.array([min(1.0, sum(b.area for _, b in img.boxes)) + 1e-3 for img in pool])
    return w / w.sum()


def _raster_of(img: LabeledImage) -> np.ndarray:
    if img.raster is not None:
        return img.raster
    if img.path is None:
        raise ValueError(f"no pixels available for {img.image_id!r}")
    return load_raster(img.path)


def _build_item(
    index: int,
    generation: int,
    seed: int,
    chosen: Sequence[LabeledImage],
    config: MosaicConfig,
    render: bool,
) -> MosaicItem:
    plan_seed = derive_seed(seed, "plan")
    recipe = plan_mosaic(chosen, plan_seed, config)
    boxes = []
    for ti, src in enumerate(chosen):
        boxes.extend(remap_boxes(recipe, ti, src.boxes, config.visibility))
    rasters = [_raster_of(s) for s in chosen] if render else None
    leftovers = []
    if config.recycle and generation == 0:
        leftovers = recycle_leftovers(
            recipe, [s.boxes for s in chosen], config.visibility, rasters, config.interpolation
        )
    raster = render_mosaic(recipe, rasters, config.interpolation) if render else None
    return MosaicItem(index, generation, seed, tuple(s.image_id for s in chosen), recipe, boxes, leftovers, raster)


def run_mosaic_pass(
    dataset: Sequence[LabeledImage],
    count: Optional[int] = None,
    config: MosaicConfig = MosaicConfig(),
    master_seed: int = 0,
    workers: int = 1,
    render: bool = False,
) -> MosaicPassResult:
    """Generate ``count`` mosaics (default: one per source image).

    Sources are drawn with replacement from a per-item stream seeded by
    ``derive_seed(master_seed, i)``. With recycling on, the leftover crops of
    all first-generation mosaics are packed four at a time into extra
    mosaics; those extras are never recycled again.
    """
    if not dataset:
        raise ValueError("mosaic pass needs at least one source image")
    n = len(dataset) if count is None else int(count)
    if n < 0:
        raise ValueError("mosaic count must be >= 0")
    weights = _source_weights(dataset) if config.scored_crops else None

    def first_gen(i: int) -> MosaicItem:
        seed = derive_seed(master_seed, i)
        idx = _rng(seed).choice(len(dataset), size=4, replace=True, p=weights)
        return _build_item(i, 0, seed, [dataset[k] for k in idx], config, render)

    def run(fn, args):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                return list(ex.map(fn, args))
        return [fn(a) for a in args]

    mosaics = run(first_gen, range(n))

    pool = [lo for item in mosaics for lo in item.leftovers]
    extras: List[MosaicItem] = []
    if config.recycle and pool:
        pool_weights = _source_weights(pool) if config.scored_crops else None

        def second_gen(j: int) -> MosaicItem:
            seed = derive_seed(master_seed, f"recycle:{j}")
            chosen = list(pool[4 * j:4 * j + 4])
            if len(chosen) < 4:
                fill = _rng(seed).choice(len(pool), size=4 - len(chosen), replace=True, p=pool_weights)
                chosen.extend(pool[k] for k in fill)
            return _build_item(j, 1, seed, chosen, config, render)

        extras = run(second_gen, range(math.ceil(len(pool) / 4)))
    return MosaicPassResult(mosaics, extras)


def format_pass_manifest(result: MosaicPassResult, paths: Optional[Sequence[str]] = None) -> str:
    """One line per output: path, the four source ids, per-item seed."""
    items = result.all_items()
    if paths is None:
        paths = [item.name for item in items]
    return "".join(
        f"{p}\t{','.join(item.source_ids)}\t{item.seed}\n" for p, item in zip(paths, items)
    )
