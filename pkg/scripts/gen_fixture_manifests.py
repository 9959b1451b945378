#!/usr/bin/env python3
"""Regenerate the expected-value manifests shipped with the synthetic fixtures.

The numbers here are derived with deliberately naive scalar loops (no shared
code with the pipeline's vectorized stages) so the manifests act as an
independent cross-check.  Run from the repo root:

    python3 scripts/gen_fixture_manifests.py
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from scenedepth.camera import DepthMode
from scenedepth.segmentation import Category
from scenedepth.synthetic import FIXTURE_NAMES, fixture

OUT_DIR = Path(__file__).resolve().parent.parent / "src" / "scenedepth" / "fixtures"


def brute_surface(rig):
    """Scalar ray/plane intersection per pixel (identity extrinsics only)."""
    intr = rig.intrinsics
    values = np.zeros((rig.height_px, rig.width_px))
    valid = np.zeros((rig.height_px, rig.width_px), dtype=bool)
    for v in range(rig.height_px):
        for u in range(rig.width_px):
            denom = v - intr.oy
            if denom <= 1e-6:
                continue
            zc = intr.fy * rig.height_m / denom
            if rig.depth_mode is DepthMode.EUCLIDEAN:
                xc = (u - intr.ox) * zc / intr.fx
                d = math.sqrt(xc * xc + rig.height_m**2 + zc * zc)
            else:
                d = zc
            if 0 < d <= rig.max_range_m:
                values[v, u] = d
                valid[v, u] = True
    return values, valid


def category_grid(seg):
    lut = {i: c for i, (_, c) in seg.table.entries.items()}
    H, W = seg.labels.shape
    grid = np.empty((H, W), dtype=object)
    for v in range(H):
        for u in range(W):
            grid[v, u] = lut[int(seg.labels[v, u])]
    return grid


def brute_extended(ground_values, ground_valid, cats):
    """Per-column literal application of the vertical-extension rule."""
    H, W = ground_valid.shape
    values = ground_values.copy()
    valid = ground_valid.copy()
    for u in range(W):
        runs = []
        v = H - 1
        while v >= 0:
            if cats[v, u] is Category.VERTICAL:
                bottom = v
                while v >= 0 and cats[v, u] is Category.VERTICAL:
                    v -= 1
                runs.append((v + 1, bottom))  # top, bottom (inclusive)
            else:
                v -= 1
        below_assigned = None  # (value,) of nearest vertical run below
        for top, bottom in runs:  # bottom-most first
            assigned = None
            if bottom + 1 < H and ground_valid[bottom + 1, u]:
                assigned = ground_values[bottom + 1, u]
            elif below_assigned is not None:
                assigned = below_assigned
            if assigned is not None:
                for vv in range(top, bottom + 1):
                    if not valid[vv, u]:
                        values[vv, u] = assigned
                        valid[vv, u] = True
            below_assigned = assigned
    return values, valid


def build_manifest(name):
    scene = fixture(name)
    rig = scene.rig
    sval, svalid = brute_surface(rig)
    cats = category_grid(scene.seg)
    road = np.array([[c is Category.ROAD for c in row] for row in cats])
    ground_cat = np.array(
        [[c in (Category.ROAD, Category.FLAT_GROUND) for c in row] for row in cats]
    )
    sky_cat = np.array([[c is Category.SKY for c in row] for row in cats])
    gvalid = svalid & ground_cat
    gvalues = np.where(gvalid, sval, 0.0)
    evalues, evalid = brute_extended(gvalues, gvalid, cats)
    sky = sky_cat & ~evalid
    scene_valid = (~sky).sum()

    expected = {
        "stage_valid_counts": {
            "surface": int(svalid.sum()),
            "road": int((svalid & road).sum()),
            "ground": int(gvalid.sum()),
            "extended": int(evalid.sum()),
            "scene": int(scene_valid),
        },
        "sky_count": int(sky.sum()),
        "gt_valid_count": int(scene.gt.valid.sum()),
        "spot_checks": spot_checks(name, sval, evalues, evalid),
    }
    manifest = {
        "fixture": name,
        "rig": {
            "fx": rig.intrinsics.fx,
            "fy": rig.intrinsics.fy,
            "ox": rig.intrinsics.ox,
            "oy": rig.intrinsics.oy,
            "height_m": rig.height_m,
            "width_px": rig.width_px,
            "height_px": rig.height_px,
            "depth_mode": rig.depth_mode.value,
            "max_range_m": rig.max_range_m,
        },
        "expected": expected,
    }
    return manifest


def spot_checks(name, sval, evalues, evalid):
    checks = []

    def add(stage, u, v, value):
        checks.append({"stage": stage, "u": u, "v": v, "value": value, "rtol": 1e-9})

    if name == "flat":
        add("surface", 320, 128, sval[128, 320])           # principal column
        add("surface", 0, 191, sval[191, 0])               # far corner
    elif name == "urban-3-box":
        # one pixel on each ground-contacting front face: extended == contact depth
        add("extended", 224, 120, evalues[120, 224])
        add("extended", 368, 120, evalues[120, 368])
        add("extended", 320, 110, evalues[110, 320])
    elif name == "floating-object":
        # above the VOID band the intermediary rule propagates the near box's contact depth
        add("extended", 320, 100, evalues[100, 320])
        add("extended", 320, 30, evalues[30, 320])
    elif name == "stacked-rider":
        add("extended", 4, 3, evalues[3, 4])
        add("extended", 4, 5, evalues[5, 4])
    checks = [c for c in checks if c["value"] > 0]
    return checks


def main():
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    for name in FIXTURE_NAMES:
        manifest = build_manifest(name)
        path = OUT_DIR / f"{name}.json"
        path.write_text(json.dumps(manifest, indent=2) + "\n")
        counts = manifest["expected"]["stage_valid_counts"]
        print(f"{name}: {counts} sky={manifest['expected']['sky_count']}")


if __name__ == "__main__":
    main()
