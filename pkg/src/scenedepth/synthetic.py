"""Analytic scenes with exact ray-cast depth: the geometric ground truth.

Scenes are a ground plane plus axis-aligned boxes standing on it.  Every
pixel's depth is the nearest ray intersection, so segmentation, instance ids,
and depth are mutually consistent by construction.  Segmentation is perfect
by construction; imperfection is injected only through perturb_mask.

The ray caster is intentionally independent of the camera module's linear
backprojection solve: rays are built from K^-1 and the inverse extrinsics,
and intersections use explicit plane/slab tests.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .camera import CameraRig, DepthMode, Extrinsics, Intrinsics
from .depthmap import DepthMap
from .errors import SceneDepthError
from .segmentation import (
    Category,
    ClassTable,
    DEFAULT_CLASS_TABLE,
    InstanceMap,
    SegmentationMap,
    mask_for,
)

_T_EPS = 1e-9


@dataclass(frozen=True)
class BoxSpec:
    """An axis-aligned box standing on the ground plane (bottom at y_w = h)."""

    center_x: float   # world x of the box center (m)
    center_z: float   # world z of the box center (m)
    width: float      # extent along x (m)
    depth: float      # extent along z (m)
    height: float     # extent upward from the ground plane (m)
    label: int        # class label id (must be VERTICAL-category)
    instance_id: int  # nonzero

    def __post_init__(self):
        if min(self.width, self.depth, self.height) <= 0:
            raise SceneDepthError(f"box extents must be positive: {self}")
        if self.instance_id < 1:
            raise SceneDepthError(f"box instance ids must be nonzero: {self}")


@dataclass(frozen=True)
class SyntheticScene:
    rig: CameraRig
    boxes: tuple[BoxSpec, ...]
    seg: SegmentationMap
    instances: InstanceMap
    gt: DepthMap
    table: ClassTable


def _rays(rig: CameraRig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """World-frame camera center and per-pixel ray directions (H, W, 3).

    Directions are normalized so the camera-frame z component is 1; the ray
    parameter t is therefore the camera-frame z depth of the hit point.
    """
    intr = rig.intrinsics
    u = np.arange(rig.width_px, dtype=np.float64)
    v = np.arange(rig.height_px, dtype=np.float64)
    dx = (u[None, :] - intr.ox) / intr.fx
    dy = (v[:, None] - intr.oy) / intr.fy
    d_cam = np.stack(
        [
            np.broadcast_to(dx, (rig.height_px, rig.width_px)),
            np.broadcast_to(dy, (rig.height_px, rig.width_px)),
            np.ones((rig.height_px, rig.width_px)),
        ],
        axis=-1,
    )
    R = rig.extrinsics.rotation
    T = rig.extrinsics.translation
    center = -R.T @ T
    d_world = d_cam @ R  # (R.T @ d) for each pixel
    cam_norm = np.linalg.norm(d_cam, axis=-1)
    return center, d_world, cam_norm


def _plane_t(center: np.ndarray, d_world: np.ndarray, h: float) -> np.ndarray:
    dy = d_world[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(dy != 0.0, (h - center[1]) / np.where(dy == 0.0, 1.0, dy), np.inf)
    return np.where(t > _T_EPS, t, np.inf)


def _box_t(center: np.ndarray, d_world: np.ndarray, box: BoxSpec, h: float) -> np.ndarray:
    lo = np.array([box.center_x - box.width / 2, h - box.height, box.center_z - box.depth / 2])
    hi = np.array([box.center_x + box.width / 2, h, box.center_z + box.depth / 2])
    d = np.where(np.abs(d_world) < 1e-300, 1e-300, d_world)
    t1 = (lo - center) / d
    t2 = (hi - center) / d
    tnear = np.minimum(t1, t2).max(axis=-1)
    tfar = np.maximum(t1, t2).min(axis=-1)
    hit = (tnear <= tfar) & (tnear > _T_EPS)
    return np.where(hit, tnear, np.inf)


def _ground_labels(
    width: int, height: int, hit_ground: np.ndarray, road_fraction: float, table: ClassTable
) -> np.ndarray:
    road_id = table.first_id_of(Category.ROAD)
    flat_ids = [
        i for i, (_, c) in sorted(table.entries.items()) if c is Category.FLAT_GROUND
    ]
    flat_id = flat_ids[0] if flat_ids else road_id
    road_cols = int(round(road_fraction * width))
    left = (width - road_cols) // 2
    is_road_col = np.zeros(width, dtype=bool)
    is_road_col[left : left + road_cols] = True
    labels = np.where(is_road_col[None, :], road_id, flat_id)
    return np.where(hit_ground, labels, 0).astype(np.uint16)


def gen_box_scene(
    rig: CameraRig,
    boxes: list[BoxSpec] | tuple[BoxSpec, ...] = (),
    road_fraction: float = 1.0,
    table: ClassTable = DEFAULT_CLASS_TABLE,
) -> SyntheticScene:
    """Ray-cast a ground plane plus boxes; nearest hit wins, boxes win ties."""
    if not (0 < road_fraction <= 1):
        raise SceneDepthError(f"road_fraction must be in (0, 1], got {road_fraction}")
    boxes = tuple(boxes)
    for b in boxes:
        if table.category_of(b.label) is not Category.VERTICAL:
            raise SceneDepthError(f"box label {b.label} is not VERTICAL-category")
    center, d_world, cam_norm = _rays(rig)

    # Candidate order fixes tie-breaking: boxes (in list order) beat the ground.
    ts = [_box_t(center, d_world, b, rig.height_m) for b in boxes]
    ts.append(_plane_t(center, d_world, rig.height_m))
    t_stack = np.stack(ts, axis=0)
    winner = np.argmin(t_stack, axis=0)
    t_best = np.take_along_axis(t_stack, winner[None], axis=0)[0]
    hit = np.isfinite(t_best)

    ground_idx = len(boxes)
    sky_id = table.first_id_of(Category.SKY)
    labels = np.full(t_best.shape, sky_id, dtype=np.uint16)
    ground_hit = hit & (winner == ground_idx)
    glabels = _ground_labels(rig.width_px, rig.height_px, ground_hit, road_fraction, table)
    labels[ground_hit] = glabels[ground_hit]
    inst = np.zeros(t_best.shape, dtype=np.uint16)
    for k, b in enumerate(boxes):
        sel = hit & (winner == k)
        labels[sel] = b.label
        inst[sel] = b.instance_id

    if rig.depth_mode is DepthMode.EUCLIDEAN:
        depth = np.where(hit, t_best * cam_norm, 0.0)
    else:
        depth = np.where(hit, t_best, 0.0)
    gt = DepthMap.create(depth, hit, ~hit)
    return SyntheticScene(
        rig=rig,
        boxes=boxes,
        seg=SegmentationMap(labels, table),
        instances=InstanceMap(inst),
        gt=gt,
        table=table,
    )


def gen_flat_scene(
    rig: CameraRig, road_fraction: float = 1.0, table: ClassTable = DEFAULT_CLASS_TABLE
) -> SyntheticScene:
    """Pure ground-plane scene; the central road_fraction of columns is ROAD."""
    return gen_box_scene(rig, (), road_fraction, table)


_CROSS = ndimage.generate_binary_structure(2, 1)  # 4-connectivity


def perturb_mask(seg: SegmentationMap, k: int, op: str, seed: int = 0) -> SegmentationMap:
    """Morphologically erode/dilate the flat-ground region by k pixels.

    Erosion relabels displaced ground pixels as the table's first VERTICAL
    class; dilation claims adjacent pixels for the first ROAD class.  k = 0 is
    the identity.  The operation is deterministic; `seed` is reserved for
    randomized perturbations and currently unused.
    """
    if k < 0:
        raise SceneDepthError(f"perturbation size must be >= 0, got {k}")
    if op not in ("erode", "dilate"):
        raise SceneDepthError(f"op must be 'erode' or 'dilate', got {op!r}")
    if k == 0:
        return seg
    ground = mask_for(seg, {Category.FLAT_GROUND}).data
    if op == "erode":
        new_ground = ndimage.binary_erosion(ground, structure=_CROSS, iterations=k)
        displaced = ground & ~new_ground
        labels = seg.labels.copy()
        labels[displaced] = seg.table.first_id_of(Category.VERTICAL)
    else:
        new_ground = ndimage.binary_dilation(ground, structure=_CROSS, iterations=k)
        added = new_ground & ~ground
        labels = seg.labels.copy()
        labels[added] = seg.table.first_id_of(Category.ROAD)
    return seg.with_labels(labels)


# ---------------------------------------------------------------------------
# Shipped fixtures
# ---------------------------------------------------------------------------

def _rig(fx, fy, ox, oy, h, w, hpx, mode, max_range=200.0) -> CameraRig:
    return CameraRig(
        intrinsics=Intrinsics(fx=fx, fy=fy, ox=ox, oy=oy),
        extrinsics=Extrinsics.identity(),
        height_m=h,
        width_px=w,
        height_px=hpx,
        depth_mode=mode,
        max_range_m=max_range,
    )


def _flat_fixture() -> SyntheticScene:
    rig = _rig(256.0, 256.0, 320.0, 64.0, 1.5, 640, 192, DepthMode.EUCLIDEAN)
    return gen_flat_scene(rig, road_fraction=0.5)


def _urban_fixture() -> SyntheticScene:
    rig = _rig(384.0, 384.0, 320.0, 96.0, 1.5, 640, 192, DepthMode.Z_DEPTH)
    boxes = (
        BoxSpec(center_x=-2.0, center_z=8.5, width=1.8, depth=1.0, height=1.8,
                label=26, instance_id=1),
        BoxSpec(center_x=1.5, center_z=12.5, width=1.6, depth=1.0, height=1.6,
                label=24, instance_id=2),
        BoxSpec(center_x=0.0, center_z=24.5, width=2.2, depth=1.0, height=2.0,
                label=27, instance_id=3),
    )
    return gen_box_scene(rig, boxes, road_fraction=0.6)


def _floating_fixture() -> SyntheticScene:
    """Two stacked-in-image boxes with a VOID band cut between their runs.

    The upper run's support pixel is VOID (invalid), so vertical extension
    must fall back to the assigned run below it (the intermediary-object
    rule).  Ray-cast depth is untouched by the relabeling.
    """
    rig = _rig(384.0, 384.0, 320.0, 96.0, 1.5, 640, 192, DepthMode.Z_DEPTH)
    near = BoxSpec(center_x=0.0, center_z=8.5, width=3.0, depth=1.0, height=2.5,
                   label=26, instance_id=1)
    far = BoxSpec(center_x=0.0, center_z=12.5, width=1.2, depth=1.0, height=4.0,
                  label=28, instance_id=2)
    scene = gen_box_scene(rig, (near, far), road_fraction=1.0)
    labels = scene.seg.labels.copy()
    band = np.zeros(labels.shape, dtype=bool)
    band[156:164, 248:393] = labels[156:164, 248:393] == near.label
    labels[band] = 0  # unlabeled
    return replace(scene, seg=scene.seg.with_labels(labels))


def _stacked_rider_fixture() -> SyntheticScene:
    """Hand-built 8x8 frame: a rider run directly atop a bicycle run.

    Both runs are VERTICAL-category, so they form one contiguous run whose
    ground support sets the depth of every pixel in the stack.  Ground truth
    for the painted pixels is defined as that contact depth.
    """
    rig = _rig(8.0, 8.0, 4.0, 2.0, 1.0, 8, 8, DepthMode.Z_DEPTH)
    scene = gen_flat_scene(rig, road_fraction=1.0)
    col = 4
    contact = 8.0 * 1.0 / (6 - 2)  # plane depth at the support row
    labels = scene.seg.labels.copy()
    labels[3:5, col] = 25  # rider
    labels[5, col] = 33    # bicycle
    inst = scene.instances.ids.copy()
    inst[3:5, col] = 1
    inst[5, col] = 2
    values = scene.gt.values.copy()
    valid = scene.gt.valid.copy()
    sky = scene.gt.sky.copy()
    values[3:6, col] = contact
    valid[3:6, col] = True
    sky[3:6, col] = False
    return replace(
        scene,
        seg=scene.seg.with_labels(labels),
        instances=InstanceMap(inst),
        gt=DepthMap.create(values, valid, sky),
    )


FIXTURE_BUILDERS = {
    "flat": _flat_fixture,
    "urban-3-box": _urban_fixture,
    "floating-object": _floating_fixture,
    "stacked-rider": _stacked_rider_fixture,
}

FIXTURE_NAMES = tuple(FIXTURE_BUILDERS)


def fixture(name: str) -> SyntheticScene:
    try:
        builder = FIXTURE_BUILDERS[name]
    except KeyError:
        raise SceneDepthError(
            f"unknown fixture {name!r}; available: {', '.join(FIXTURE_NAMES)}"
        ) from None
    return builder()
