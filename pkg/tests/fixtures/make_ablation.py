"""Regenerate the bundled ablation fixture.

Ground truth: 12 images, 3 categories. Two prediction arms:
``mosaic-on`` hugs the ground truth closely, ``mosaic-off`` is looser, misses
one object and has more confident false positives.

    python tests/fixtures/make_ablation.py
"""

from pathlib import Path

import numpy as np

from mosaicdet.dataset import DatasetManifest, LabelRecord, ManifestEntry, write_label_file, write_manifest

ROOT = Path(__file__).parent / "ablation"


def clamp_record(cat, cx, cy, w, h):
    w, h = min(max(w, 0.02), 0.98), min(max(h, 0.02), 0.98)
    cx = min(max(cx, w / 2), 1 - w / 2)
    cy = min(max(cy, h / 2), 1 - h / 2)
    return cat, round(cx, 6), round(cy, 6), round(w, 6), round(h, 6)


def prediction_text(rows):
    return "".join(f"{c} {cx:.6f} {cy:.6f} {w:.6f} {h:.6f} {conf:.4f}\n" for c, cx, cy, w, h, conf in rows)


def main():
    rng = np.random.default_rng(2024)
    entries = []
    gts = {}
    for i in range(12):
        stem = f"img_{i:02d}"
        recs = []
        for k in range(1 + i % 2):
            cat = (i + k) % 3
            w, h = rng.uniform(0.15, 0.4, 2)
            cx = 0.25 + 0.5 * k + rng.uniform(-0.05, 0.05)
            cy = rng.uniform(0.3, 0.7)
            recs.append(LabelRecord(*clamp_record(cat, cx, cy, w, h)))
        gts[stem] = recs
        lab = ROOT / "labels" / f"{stem}.txt"
        lab.parent.mkdir(parents=True, exist_ok=True)
        lab.write_text(write_label_file(recs), encoding="utf-8")
        entries.append(ManifestEntry(str(ROOT / "images" / f"{stem}.png"), str(lab)))
    write_manifest(DatasetManifest(entries, "test", 2024), ROOT / "gt.txt")

    stems = sorted(gts)
    arms = {
        "mosaic-on": dict(shift=0.004, size=0.01, conf=(0.75, 0.99), miss=(), fps=2, fp_conf=(0.05, 0.3)),
        "mosaic-off": dict(shift=0.03, size=0.12, conf=(0.4, 0.95), miss=("img_05",), fps=4, fp_conf=(0.2, 0.6)),
    }
    for arm, p in arms.items():
        rows_by = {s: [] for s in stems}
        for s in stems:
            if s in p["miss"]:
                continue
            for r in gts[s]:
                cat, cx, cy, w, h = clamp_record(
                    r.category,
                    r.cx + rng.normal(0, p["shift"]),
                    r.cy + rng.normal(0, p["shift"]),
                    r.w * (1 + rng.normal(0, p["size"])),
                    r.h * (1 + rng.normal(0, p["size"])),
                )
                rows_by[s].append((cat, cx, cy, w, h, rng.uniform(*p["conf"])))
        for _ in range(p["fps"]):
            s = stems[int(rng.integers(len(stems)))]
            cat, cx, cy, w, h = clamp_record(int(rng.integers(3)), *rng.uniform(0.1, 0.9, 2), *rng.uniform(0.05, 0.2, 2))
            rows_by[s].append((cat, cx, cy, w, h, rng.uniform(*p["fp_conf"])))
        out = ROOT / arm
        out.mkdir(parents=True, exist_ok=True)
        for s, rows in rows_by.items():
            (out / f"{s}.txt").write_text(prediction_text(rows), encoding="utf-8")


if __name__ == "__main__":
    main()
