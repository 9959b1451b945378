"""The five depth stages: surface -> road -> ground -> extended -> scene.

Stage semantics:

* surface:   per-pixel plane depth for the whole frame (camera module).
* road:      surface kept only on ROAD pixels.
* ground:    surface kept on all flat-ground pixels (ROAD + FLAT_GROUND).
* extended:  ground depth propagated upward along each column onto vertical
             objects at their ground contact.
* scene:     sky flagged, every remaining hole inpainted; dense and gap-free.

Valid-pixel sets are nested (road <= ground <= extended <= scene minus sky)
and a pixel valid at an earlier stage keeps its exact value at every later
stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraRig, surface_depth
from .depthmap import DepthMap
from .errors import DimensionMismatchError, PipelineStageError
from .segmentation import Category, ClassTable, Mask, SegmentationMap, mask_for
from .telea import DEFAULT_RADIUS_PX, inpaint_telea

STAGE_NAMES = ("surface", "road", "ground", "extended", "scene")


@dataclass(frozen=True)
class DepthBundle:
    """All five stages for one frame, same dimensions."""

    surface: DepthMap
    road: DepthMap
    ground: DepthMap
    extended: DepthMap
    scene: DepthMap

    def stages(self) -> dict[str, DepthMap]:
        return {
            "surface": self.surface,
            "road": self.road,
            "ground": self.ground,
            "extended": self.extended,
            "scene": self.scene,
        }


def _require_same_shape(a, b, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"{what}: {a.shape} vs {b.shape}")


def _masked(surface: DepthMap, mask: Mask) -> DepthMap:
    _require_same_shape(surface.values, mask.data, "depth/mask dimensions differ")
    keep = mask.data & surface.valid
    return DepthMap.create(np.where(keep, surface.values, 0.0), keep)


def road_depth(surface: DepthMap, road_mask: Mask) -> DepthMap:
    """Keep surface depth only where the road mask is true."""
    return _masked(surface, road_mask)


def ground_depth(surface: DepthMap, ground_mask: Mask) -> DepthMap:
    """Keep surface depth on all flat-ground pixels (mask should include road)."""
    return _masked(surface, ground_mask)


def extend_vertical(ground: DepthMap, seg: SegmentationMap, table: ClassTable | None = None) -> DepthMap:
    """Propagate ground depth up vertical objects, column by column.

    Each maximal vertical run of VERTICAL-category pixels takes the depth of
    the pixel immediately below its bottom when that pixel is valid ground.
    A run without ground support inherits the depth assigned to the vertical
    run directly beneath it in the same column, if that run was assigned one;
    otherwise it stays invalid and is left for inpainting.  Runs touching the
    image bottom have no support pixel and stay invalid.  Valid input pixels
    are never modified.
    """
    table = table or seg.table
    _require_same_shape(ground.values, seg.labels, "depth/segmentation dimensions differ")
    vert = np.isin(seg.labels, table.ids_for({Category.VERTICAL}))
    height, width = vert.shape

    values = ground.values.copy()
    valid = ground.valid.copy()
    # Per-column state while walking rows bottom-up:
    #   run_*:  assignment of the vertical run currently being traversed
    #   last_*: assignment state of the nearest vertical pixel below this row
    run_val = np.zeros(width)
    run_ok = np.zeros(width, dtype=bool)
    last_val = np.zeros(width)
    last_ok = np.zeros(width, dtype=bool)

    for i in range(height - 1, -1, -1):
        v = vert[i]
        if not v.any():
            continue
        if i == height - 1:
            below_vert = np.zeros(width, dtype=bool)
            below_gok = np.zeros(width, dtype=bool)
            below_gval = np.zeros(width)
        else:
            below_vert = vert[i + 1]
            below_gok = ground.valid[i + 1]
            below_gval = ground.values[i + 1]

        bottom = v & ~below_vert
        if bottom.any():
            use_ground = bottom & below_gok
            new_ok = use_ground | (bottom & ~below_gok & last_ok)
            new_val = np.where(use_ground, below_gval, last_val)
            run_val = np.where(bottom, new_val, run_val)
            run_ok = np.where(bottom, new_ok, run_ok)

        assign = v & run_ok & ~valid[i]
        if assign.any():
            values[i] = np.where(assign, run_val, values[i])
            valid[i] |= assign

        last_val = np.where(v, run_val, last_val)
        last_ok = np.where(v, run_ok, last_ok)

    return DepthMap.create(values, valid, ground.sky)


def compose_scene(
    extended: DepthMap,
    seg: SegmentationMap,
    table: ClassTable | None = None,
    radius: int = DEFAULT_RADIUS_PX,
) -> DepthMap:
    """Flag sky and inpaint every remaining hole; no invalid non-sky pixel survives.

    SKY-category pixels that already carry a valid depth (a mislabeled
    below-horizon pixel) keep their value; the sky flag applies only to
    pixels with no depth.  VOID pixels are holes, never sky.
    """
    table = table or seg.table
    _require_same_shape(extended.values, seg.labels, "depth/segmentation dimensions differ")
    sky_label = np.isin(seg.labels, table.ids_for({Category.SKY}))
    sky = sky_label & ~extended.valid
    flagged = DepthMap.create(extended.values, extended.valid, sky)
    return inpaint_telea(flagged, radius)


@dataclass(frozen=True)
class PipelineOptions:
    inpaint_radius: int = DEFAULT_RADIUS_PX


def run_pipeline(
    rig: CameraRig,
    seg: SegmentationMap,
    table: ClassTable | None = None,
    opts: PipelineOptions | None = None,
) -> DepthBundle:
    """Run all five stages; deterministic for fixed inputs.

    Any stage failure is re-raised as PipelineStageError tagged with the
    stage name.
    """
    table = table or seg.table
    opts = opts or PipelineOptions()
    if (rig.height_px, rig.width_px) != seg.labels.shape:
        raise DimensionMismatchError(
            f"rig is {rig.width_px}x{rig.height_px} but segmentation is "
            f"{seg.width}x{seg.height}"
        )

    def _stage(name, fn):
        try:
            return fn()
        except Exception as e:  # noqa: BLE001 - re-tagged with stage context
            raise PipelineStageError(name, e) from e

    surface = _stage("surface", lambda: surface_depth(rig))
    road = _stage("road", lambda: road_depth(surface, mask_for(seg, {Category.ROAD})))
    ground = _stage(
        "ground",
        lambda: ground_depth(surface, mask_for(seg, {Category.FLAT_GROUND, Category.ROAD})),
    )
    extended = _stage("extended", lambda: extend_vertical(ground, seg, table))
    scene = _stage("scene", lambda: compose_scene(extended, seg, table, opts.inpaint_radius))
    return DepthBundle(surface=surface, road=road, ground=ground, extended=extended, scene=scene)
