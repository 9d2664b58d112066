"""Detection matching, precision/recall curves, AP and mAP.

Matching is greedy per image: detections are visited by descending confidence
(ties by input order) and each claims the unmatched ground truth of its own
category with the highest IoU at or above the threshold (ties by ground-truth
order). AP is the exact area under the monotone precision envelope over
recall in [0, 1]. Categories with no ground truth are left out of the mean.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import BBox, iou

IOU_THRESHOLDS: Tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
AP_MODES = ("all", "11pt", "101pt")
BRUTE_FORCE_LIMIT = 50


@dataclass(frozen=True)
class Detection:
    image_id: str
    category: int
    bbox: BBox
    confidence: float
    space: str = "pixel"

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    category: int
    bbox: BBox
    space: str = "pixel"


@dataclass
class MatchOutcome:
    det_tp: List[bool]  # parallel to the detections passed in
    gt_matched: List[bool]  # parallel to the ground truths passed in
    iou_threshold: float
    order: List[int]  # detection indices by rank

    @property
    def tp(self) -> int:
        return sum(self.det_tp)

    @property
    def fp(self) -> int:
        return len(self.det_tp) - self.tp

    @property
    def fn(self) -> int:
        return len(self.gt_matched) - sum(self.gt_matched)


@dataclass
class PRCurve:
    recall: np.ndarray
    precision: np.ndarray
    category: Optional[int] = None
    iou_threshold: Optional[float] = None

    def points(self) -> List[Tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))


def rank_order(confidences: Sequence[float]) -> List[int]:
    """Indices by descending confidence, ties by ascending index."""
    return sorted(range(len(confidences)), key=lambda i: (-confidences[i], i))


def _check_space(dets: Sequence[Detection], gts: Sequence[GroundTruth]) -> None:
    spaces = {d.space for d in dets} | {g.space for g in gts}
    if len(spaces) > 1:
        raise ValueError(f"mixed coordinate spaces: {sorted(spaces)}")


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_threshold: float,
) -> MatchOutcome:
    """Greedy confidence-ordered matching for a single category."""
    _check_space(dets, gts)
    cats = {d.category for d in dets} | {g.category for g in gts}
    if len(cats) > 1:
        raise ValueError("match_detections expects one category; partition the inputs first")
    order = rank_order([d.confidence for d in dets])
    gts_by_image: Dict[str, List[int]] = defaultdict(list)
    for gi, g in enumerate(gts):
        gts_by_image[g.image_id].append(gi)
    matched = [False] * len(gts)
    det_tp = [False] * len(dets)
    for di in order:
        d = dets[di]
        best, best_iou = -1, -1.0
        for gi in gts_by_image.get(d.image_id, ()):
            if matched[gi]:
                continue
            o = iou(d.bbox, gts[gi].bbox)
            if o >= iou_threshold and o > best_iou:
                best, best_iou = gi, o
        if best >= 0:
            matched[best] = True
            det_tp[di] = True
    return MatchOutcome(det_tp, matched, iou_threshold, order)


def pr_curve(
    ranked_tp: Sequence[bool],
    total_gt: int,
    category: Optional[int] = None,
    iou_threshold: Optional[float] = None,
) -> PRCurve:
    """Cumulative (recall, precision) after each detection in rank order."""
    if total_gt < 0:
        raise ValueError("total_gt must be >= 0")
    if total_gt == 0:
        raise ValueError("no ground truth for this category")
    tp = np.cumsum(np.asarray(ranked_tp, dtype=np.float64))
    fp = np.cumsum(1.0 - np.asarray(ranked_tp, dtype=np.float64))
    recall = tp / total_gt
    precision = tp / np.maximum(tp + fp, 1.0)
    return PRCurve(recall, precision, category, iou_threshold)


def average_precision(curve: PRCurve, mode: str = "all") -> float:
    """Area under the precision envelope.

    ``all`` integrates the step function exactly; ``11pt``/``101pt`` average
    the envelope at evenly spaced recall levels.
    """
    r, p = curve.recall, curve.precision
    if r.size == 0:
        return 0.0
    # envelope: best precision at any recall >= r
    env = np.maximum.accumulate(p[::-1])[::-1]
    if mode == "all":
        ap = 0.0
        prev = 0.0
        for ri, ei in zip(r.tolist(), env.tolist()):
            if ri > prev:
                ap += (ri - prev) * ei
                prev = ri
        return ap
    if mode in ("11pt", "101pt"):
        n = 11 if mode == "11pt" else 101
        levels = np.linspace(0.0, 1.0, n)
        idx = np.searchsorted(r, levels, side="left")
        vals = np.where(idx < r.size, env[np.minimum(idx, r.size - 1)], 0.0)
        return float(np.sum(vals) / n)
    raise ValueError(f"unknown AP interpolation {mode!r}; expected one of {AP_MODES}")


def mean_ap(per_category_ap: Iterable[float]) -> float:
    values = list(per_category_ap)
    if not values:
        raise ValueError("no evaluable categories")
    return float(sum(values) / len(values))


def _by_category(dets, gts):
    d_by: Dict[int, List[Detection]] = defaultdict(list)
    g_by: Dict[int, List[GroundTruth]] = defaultdict(list)
    for d in dets:
        d_by[d.category].append(d)
    for g in gts:
        g_by[g.category].append(g)
    return d_by, g_by


def _canonical(dets: Sequence[Detection]) -> List[Detection]:
    # input order must not matter, so ties in confidence are broken by content
    return sorted(dets, key=lambda d: (-d.confidence, d.image_id, d.bbox.as_tuple()))


def category_ap(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    threshold: float,
    mode: str = "all",
) -> Tuple[float, MatchOutcome]:
    dets = _canonical(dets)
    gts = sorted(gts, key=lambda g: (g.image_id, g.bbox.as_tuple()))
    m = match_detections(dets, gts, threshold)
    ranked = [m.det_tp[i] for i in m.order]
    return average_precision(pr_curve(ranked, len(gts)), mode), m


def per_category_ap(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    threshold: float,
    mode: str = "all",
) -> Dict[int, float]:
    """AP per category that has at least one ground truth."""
    _check_space(dets, gts)
    d_by, g_by = _by_category(dets, gts)
    return {c: category_ap(d_by.get(c, []), g_by[c], threshold, mode)[0] for c in sorted(g_by)}


def map_at(dets: Sequence[Detection], gts: Sequence[GroundTruth], threshold: float, mode: str = "all") -> float:
    return mean_ap(per_category_ap(dets, gts, threshold, mode).values())


def map_per_threshold(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    thresholds: Sequence[float] = IOU_THRESHOLDS,
    mode: str = "all",
) -> List[float]:
    return [map_at(dets, gts, t, mode) for t in thresholds]


def map_range(dets: Sequence[Detection], gts: Sequence[GroundTruth], mode: str = "all") -> Tuple[float, float]:
    """(mAP@0.5, mAP@0.5:0.95 over the ten thresholds 0.50, 0.55, ..., 0.95)."""
    per = map_per_threshold(dets, gts, IOU_THRESHOLDS, mode)
    return per[0], float(sum(per) / len(per))


# ---------------------------------------------------------------------------
# brute-force oracle


def _greedy_tp_count(dets: Sequence[Detection], gts: Sequence[GroundTruth], threshold: float) -> int:
    # straightforward re-implementation, kept apart from match_detections
    taken = set()
    tp = 0
    for d in dets:
        best, best_iou = None, -1.0
        for gi, g in enumerate(gts):
            if gi in taken or g.image_id != d.image_id:
                continue
            o = iou(d.bbox, g.bbox)
            if o >= threshold and o > best_iou:
                best, best_iou = gi, o
        if best is not None:
            taken.add(best)
            tp += 1
    return tp


def brute_force_category_ap(dets: Sequence[Detection], gts: Sequence[GroundTruth], threshold: float) -> float:
    """Recompute TP/FP from scratch at every confidence cutoff, then integrate."""
    if not gts:
        raise ValueError("no ground truth for this category")
    ranked = _canonical(dets)
    points = []
    for k in range(1, len(ranked) + 1):
        tp = _greedy_tp_count(ranked[:k], gts, threshold)
        points.append((tp / len(gts), tp / k))
    levels = sorted({r for r, _ in points if r > 0.0})
    ap, prev = 0.0, 0.0
    for r in levels:
        best = max(p for rr, p in points if rr >= r)
        ap += (r - prev) * best
        prev = r
    return ap


def brute_force_ap(dets: Sequence[Detection], gts: Sequence[GroundTruth], threshold: float) -> float:
    """Oracle mAP at one IoU threshold for small instances (<= 50 detections)."""
    if len(dets) > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute-force oracle refuses {len(dets)} detections (limit {BRUTE_FORCE_LIMIT})")
    _check_space(dets, gts)
    d_by, g_by = _by_category(dets, gts)
    aps = [brute_force_category_ap(d_by.get(c, []), g_by[c], threshold) for c in sorted(g_by)]
    return mean_ap(aps)


# ---------------------------------------------------------------------------
# reports


@dataclass
class CategoryResult:
    category: int
    ap: Dict[float, float]
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    n_gt: int
    n_det: int

    @property
    def ap50(self) -> float:
        return self.ap[IOU_THRESHOLDS[0]]

    @property
    def ap5095(self) -> float:
        return float(sum(self.ap.values()) / len(self.ap))


@dataclass
class EvalReport:
    categories: List[CategoryResult]
    map_by_threshold: Dict[float, float]
    map50: float
    map5095: float
    conf_cutoff: float
    ap_mode: str = "all"
    no_ground_truth: List[int] = field(default_factory=list)
    curves: Dict[int, PRCurve] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    @property
    def totals(self) -> Tuple[int, int, int]:
        return (
            sum(c.tp for c in self.categories),
            sum(c.fp for c in self.categories),
            sum(c.fn for c in self.categories),
        )


def evaluate(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    mode: str = "all",
    conf_cutoff: float = 0.25,
    thresholds: Sequence[float] = IOU_THRESHOLDS,
) -> EvalReport:
    """Full report: per-category AP at every threshold plus P/R at ``conf_cutoff``.

    P/R and TP/FP/FN counts are taken at IoU 0.5 using only detections with
    confidence >= ``conf_cutoff``.
    """
    _check_space(dets, gts)
    if mode not in AP_MODES:
        raise ValueError(f"unknown AP interpolation {mode!r}; expected one of {AP_MODES}")
    d_by, g_by = _by_category(dets, gts)
    results, curves = [], {}
    for c in sorted(g_by):
        cd = _canonical(d_by.get(c, []))
        cg = sorted(g_by[c], key=lambda g: (g.image_id, g.bbox.as_tuple()))
        aps = {}
        for t in thresholds:
            m = match_detections(cd, cg, t)
            ranked = [m.det_tp[i] for i in m.order]
            curve = pr_curve(ranked, len(cg), c, t)
            aps[t] = average_precision(curve, mode)
            if t == thresholds[0]:
                curves[c] = curve
        kept = [d for d in cd if d.confidence >= conf_cutoff]
        m = match_detections(kept, cg, thresholds[0])
        tp, fp, fn = m.tp, m.fp, m.fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        results.append(CategoryResult(c, aps, precision, recall, tp, fp, fn, len(cg), len(cd)))
    if not results:
        raise ValueError("no evaluable categories")
    by_t = {t: mean_ap(r.ap[t] for r in results) for t in thresholds}
    no_gt = sorted(set(d_by) - set(g_by))
    warnings = []
    if not dets:
        warnings.append("no detections supplied")
    return EvalReport(
        categories=results,
        map_by_threshold=by_t,
        map50=by_t[thresholds[0]],
        map5095=float(sum(by_t.values()) / len(by_t)),
        conf_cutoff=conf_cutoff,
        ap_mode=mode,
        no_ground_truth=no_gt,
        curves=curves,
        warnings=warnings,
    )


def format_report(report: EvalReport, names: Optional[Dict[int, str]] = None) -> str:
    """Plain-text table followed by a ``key=value`` block."""
    names = names or {}
    label = lambda c: names.get(c, str(c))  # noqa: E731
    width = max([len("Category")] + [len(label(r.category)) for r in report.categories])
    lines = [
        f"{'Category':<{width}}  AP 0.5  AP 0.5:0.95  P       R       TP    FP    FN",
    ]
    for r in report.categories:
        lines.append(
            f"{label(r.category):<{width}}  {r.ap50:.4f}  {r.ap5095:<11.4f}  {r.precision:.4f}  "
            f"{r.recall:.4f}  {r.tp:<4d}  {r.fp:<4d}  {r.fn:d}"
        )
    lines.append("")
    lines.append("mAP 0.5  mAP 0.5:0.95")
    lines.append(f"{report.map50:<7.4f}  {report.map5095:.4f}")
    lines.append("")
    if report.no_ground_truth:
        lines.append(
            "note: categories without ground truth excluded from mAP: "
            + ",".join(label(c) for c in report.no_ground_truth)
        )
    else:
        lines.append("note: categories without ground truth excluded from mAP: none")
    for w in report.warnings:
        lines.append(f"warning: {w}")
    lines.append("")
    lines.append(format_key_values(report))
    return "\n".join(lines)


def format_key_values(report: EvalReport) -> str:
    tp, fp, fn = report.totals
    kv = [
        f"map50={report.map50!r}",
        f"map5095={report.map5095!r}",
    ]
    kv += [f"map@{t:.2f}={v!r}" for t, v in report.map_by_threshold.items()]
    kv += [
        f"ap_interp={report.ap_mode}",
        f"conf_cutoff={report.conf_cutoff!r}",
        f"tp={tp}",
        f"fp={fp}",
        f"fn={fn}",
        "no_ground_truth=" + ",".join(str(c) for c in report.no_ground_truth),
    ]
    for r in report.categories:
        kv.append(
            f"category={r.category} ap50={r.ap50!r} ap5095={r.ap5095!r} "
            f"precision={r.precision!r} recall={r.recall!r} tp={r.tp} fp={r.fp} fn={r.fn}"
        )
    return "\n".join(kv) + "\n"


def parse_key_values(text: str) -> Dict[str, str]:
    """Read back the scalar keys of a ``key=value`` block (per-category lines skipped)."""
    out = {}
    for line in text.splitlines():
        if "=" not in line or " " in line.split("=", 1)[0] or line.startswith("category="):
            continue
        k, _, v = line.partition("=")
        out[k] = v
    return out
