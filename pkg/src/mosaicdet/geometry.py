"""Axis-aligned bounding-box arithmetic.

Boxes are stored as corner coordinates ``(x_min, y_min, x_max, y_max)`` with the
origin at the top-left corner, x growing rightward and y growing downward. A box
does not record whether it lives in pixel or normalized space; callers keep the
two apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

# Smallest height used in aspect-ratio terms, in pixels.
ASPECT_EPS = 1e-9

_V_SCALE = 4.0 / math.pi**2


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max):
            raise ValueError(f"invalid box {self.as_tuple()}: min corner exceeds max corner")

    @classmethod
    def from_xywh(cls, cx: float, cy: float, w: float, h: float) -> "BBox":
        """Build a box from center, width and height."""
        return cls(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def to_xywh(self) -> Tuple[float, float, float, float]:
        cx, cy = self.center
        return (cx, cy, self.width, self.height)

    def scaled(self, sx: float, sy: Optional[float] = None) -> "BBox":
        sy = sx if sy is None else sy
        return BBox(self.x_min * sx, self.y_min * sy, self.x_max * sx, self.y_max * sy)

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def contains(self, other: "BBox", tol: float = 0.0) -> bool:
        return (
            other.x_min >= self.x_min - tol
            and other.y_min >= self.y_min - tol
            and other.x_max <= self.x_max + tol
            and other.y_max <= self.y_max + tol
        )


@dataclass(frozen=True)
class CIoUTerms:
    iou: float
    center_distance_sq: float
    enclosing_diag_sq: float
    v: float
    alpha_tradeoff: float

    @property
    def distance_term(self) -> float:
        if self.enclosing_diag_sq <= 0.0:
            return 0.0
        return self.center_distance_sq / self.enclosing_diag_sq

    @property
    def aspect_term(self) -> float:
        return self.alpha_tradeoff * self.v


@dataclass(frozen=True)
class Affine2D:
    """``p' = A @ p + t`` with ``A = [[a, b], [c, d]]`` and ``t = (tx, ty)``."""

    a: float = 1.0
    b: float = 0.0
    c: float = 0.0
    d: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    @classmethod
    def identity(cls) -> "Affine2D":
        return cls()

    @classmethod
    def scale(cls, sx: float, sy: Optional[float] = None) -> "Affine2D":
        return cls(a=sx, d=sx if sy is None else sy)

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Affine2D":
        return cls(tx=tx, ty=ty)

    @classmethod
    def shear(cls, horizontal: float = 0.0, vertical: float = 0.0) -> "Affine2D":
        # horizontal: x' = x + k*y ; vertical: y' = y + k*x
        return cls(b=horizontal, c=vertical)

    def then(self, other: "Affine2D") -> "Affine2D":
        """Transform that applies ``self`` first, then ``other``."""
        return other.compose(self)

    def compose(self, inner: "Affine2D") -> "Affine2D":
        """``self ∘ inner``: apply ``inner`` first."""
        return Affine2D(
            a=self.a * inner.a + self.b * inner.c,
            b=self.a * inner.b + self.b * inner.d,
            c=self.c * inner.a + self.d * inner.c,
            d=self.c * inner.b + self.d * inner.d,
            tx=self.a * inner.tx + self.b * inner.ty + self.tx,
            ty=self.c * inner.tx + self.d * inner.ty + self.ty,
        )

    def inverse(self) -> "Affine2D":
        det = self.a * self.d - self.b * self.c
        if det == 0.0:
            raise ValueError("singular affine transform")
        ia, ib, ic, id_ = self.d / det, -self.b / det, -self.c / det, self.a / det
        return Affine2D(ia, ib, ic, id_, -(ia * self.tx + ib * self.ty), -(ic * self.tx + id_ * self.ty))

    def apply_point(self, x: float, y: float) -> Tuple[float, float]:
        return (self.a * x + self.b * y + self.tx, self.c * x + self.d * y + self.ty)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when the union is empty."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _aspect_angle(w: float, h: float) -> float:
    return math.atan(w / max(h, ASPECT_EPS))


def ciou_terms(b: BBox, gt: BBox) -> CIoUTerms:
    """Overlap, center-distance and aspect-ratio pieces of the CIoU loss."""
    overlap = iou(b, gt)
    (bx, by), (gx, gy) = b.center, gt.center
    rho2 = (bx - gx) ** 2 + (by - gy) ** 2
    cw = max(b.x_max, gt.x_max) - min(b.x_min, gt.x_min)
    ch = max(b.y_max, gt.y_max) - min(b.y_min, gt.y_min)
    c2 = cw * cw + ch * ch
    v = _V_SCALE * (_aspect_angle(gt.width, gt.height) - _aspect_angle(b.width, b.height)) ** 2
    denom = (1.0 - overlap) + v
    alpha = v / denom if denom > 0.0 else 0.0
    return CIoUTerms(overlap, rho2, c2, v, alpha)


def ciou_loss(b: BBox, gt: BBox) -> float:
    t = ciou_terms(b, gt)
    return (1.0 - t.iou) + t.distance_term + t.aspect_term


def ciou_loss_grad(b: BBox, gt: BBox) -> Tuple[float, float, float, float]:
    """Analytic gradient of :func:`ciou_loss` with respect to ``b``'s corners.

    The trade-off weight ``alpha`` is differentiated too, so the result is the
    true derivative of the loss value (not the fixed-alpha surrogate used by
    some detector heads). Where a min/max switches branch the one-sided
    derivative of the active branch is returned.
    """
    x1, y1, x2, y2 = b.as_tuple()
    gx1, gy1, gx2, gy2 = gt.as_tuple()
    w, h = x2 - x1, y2 - y1
    wg, hg = gx2 - gx1, gy2 - gy1

    # overlap
    iw = min(x2, gx2) - max(x1, gx1)
    ih = min(y2, gy2) - max(y1, gy1)
    overlapping = iw > 0.0 and ih > 0.0
    inter = iw * ih if overlapping else 0.0
    union = w * h + wg * hg - inter
    if overlapping:
        d_inter = (
            -ih if x1 > gx1 else 0.0,
            -iw if y1 > gy1 else 0.0,
            ih if x2 < gx2 else 0.0,
            iw if y2 < gy2 else 0.0,
        )
    else:
        d_inter = (0.0, 0.0, 0.0, 0.0)
    d_area = (-h, -w, h, w)
    if union > 0.0:
        overlap = inter / union
        d_iou = tuple((di * union - inter * (da - di)) / union**2 for di, da in zip(d_inter, d_area))
    else:
        overlap = 0.0
        d_iou = (0.0, 0.0, 0.0, 0.0)

    # center distance over enclosing diagonal
    dx = (x1 + x2 - gx1 - gx2) / 2.0
    dy = (y1 + y2 - gy1 - gy2) / 2.0
    rho2 = dx * dx + dy * dy
    d_rho2 = (dx, dy, dx, dy)
    cw = max(x2, gx2) - min(x1, gx1)
    ch = max(y2, gy2) - min(y1, gy1)
    c2 = cw * cw + ch * ch
    d_c2 = (
        -2.0 * cw if x1 < gx1 else 0.0,
        -2.0 * ch if y1 < gy1 else 0.0,
        2.0 * cw if x2 > gx2 else 0.0,
        2.0 * ch if y2 > gy2 else 0.0,
    )
    if c2 > 0.0:
        d_dist = tuple((dr * c2 - rho2 * dc) / c2**2 for dr, dc in zip(d_rho2, d_c2))
    else:
        d_dist = (0.0, 0.0, 0.0, 0.0)

    # aspect consistency, alpha treated as a function of b
    hc = max(h, ASPECT_EPS)
    diff = _aspect_angle(wg, hg) - math.atan(w / hc)
    v = _V_SCALE * diff * diff
    denom_atan = w * w + hc * hc
    dv_dw = -2.0 * _V_SCALE * diff * hc / denom_atan
    dv_dh = 2.0 * _V_SCALE * diff * w / denom_atan if h >= ASPECT_EPS else 0.0
    d_v = (-dv_dw, -dv_dh, dv_dw, dv_dh)
    denom = (1.0 - overlap) + v
    if denom > 0.0:
        # d(v^2 / D) with D = 1 - iou + v
        k_v = 2.0 * v / denom - (v / denom) ** 2
        k_iou = (v / denom) ** 2
        d_aspect = tuple(k_v * dvi + k_iou * dii for dvi, dii in zip(d_v, d_iou))
    else:
        d_aspect = (0.0, 0.0, 0.0, 0.0)

    return tuple(-dii + ddi + dai for dii, ddi, dai in zip(d_iou, d_dist, d_aspect))  # type: ignore[return-value]


def clip(b: BBox, viewport: BBox) -> Optional[BBox]:
    """Intersection of ``b`` with ``viewport``; ``None`` if it has no area."""
    x1 = max(b.x_min, viewport.x_min)
    y1 = max(b.y_min, viewport.y_min)
    x2 = min(b.x_max, viewport.x_max)
    y2 = min(b.y_max, viewport.y_max)
    if x2 <= x1 or y2 <= y1:
        return None
    return BBox(x1, y1, x2, y2)


def affine_apply(b: BBox, t: Affine2D) -> BBox:
    """Axis-aligned hull of the four transformed corners of ``b``."""
    corners = [
        t.apply_point(x, y)
        for x, y in ((b.x_min, b.y_min), (b.x_max, b.y_min), (b.x_min, b.y_max), (b.x_max, b.y_max))
    ]
    xs = [p[0] for p in corners]
    ys = [p[1] for p in corners]
    return BBox(min(xs), min(ys), max(xs), max(ys))


def hull(boxes: Iterable[BBox]) -> Optional[BBox]:
    boxes = list(boxes)
    if not boxes:
        return None
    return BBox(
        min(b.x_min for b in boxes),
        min(b.y_min for b in boxes),
        max(b.x_max for b in boxes),
        max(b.y_max for b in boxes),
    )


def as_bbox(values: Sequence[float]) -> BBox:
    x1, y1, x2, y2 = (float(v) for v in values)
    return BBox(x1, y1, x2, y2)
