import json
from pathlib import Path

import numpy as np
import pytest

from scenedepth.camera import (
    CameraRig,
    DepthMode,
    Extrinsics,
    Intrinsics,
    backproject_ground_pixel,
    ground_range,
    surface_depth,
)
from scenedepth.errors import SceneDepthError
from scenedepth.metrics import error_distribution
from scenedepth.scene import run_pipeline
from scenedepth.segmentation import Category, DEFAULT_CLASS_TABLE, mask_for
from scenedepth.synthetic import (
    BoxSpec,
    FIXTURE_NAMES,
    fixture,
    gen_box_scene,
    gen_flat_scene,
    perturb_mask,
)

MANIFEST_DIR = Path(__file__).parent.parent / "src" / "scenedepth" / "fixtures"


def small_rig(mode=DepthMode.EUCLIDEAN, h=1.5, fx=32.0, fy=32.0, ox=32.0, oy=16.0, w=64, hp=64):
    return CameraRig(
        intrinsics=Intrinsics(fx, fy, ox, oy),
        extrinsics=Extrinsics.identity(),
        height_m=h,
        width_px=w,
        height_px=hp,
        depth_mode=mode,
        max_range_m=200.0,
    )


class TestFlatScene:
    def test_spot_value_one_focal_below_horizon(self):
        sc = gen_flat_scene(small_rig(h=1.5))
        # pixel (ox, oy + fy): ray direction (0, 1, 1) -> range h*sqrt(2)
        assert sc.gt.values[16 + 32, 32] == pytest.approx(1.5 * np.sqrt(2), rel=1e-12)

    def test_above_horizon_is_sky_without_depth(self):
        sc = gen_flat_scene(small_rig())
        assert sc.gt.sky[:17, :].all()
        assert not sc.gt.valid[:17, :].any()
        sky_id = DEFAULT_CLASS_TABLE.first_id_of(Category.SKY)
        assert (sc.seg.labels[:17, :] == sky_id).all()

    def test_surface_depth_matches_oracle(self):
        rig = small_rig(h=1.7)
        sc = gen_flat_scene(rig)
        dm = surface_depth(rig)
        jv = dm.valid & sc.gt.valid
        rel = np.abs(dm.values[jv] - sc.gt.values[jv]) / sc.gt.values[jv]
        assert dm.valid.sum() > 0
        assert rel.max() < 1e-4

    def test_road_fraction_splits_columns(self):
        sc = gen_flat_scene(small_rig(), road_fraction=0.5)
        road = mask_for(sc.seg, {Category.ROAD}).data
        flat_only = mask_for(sc.seg, {Category.FLAT_GROUND}).data & ~road
        assert road[30, 32]
        assert flat_only[30, 2]
        assert abs(int(road[30].sum()) - 32) <= 1

    def test_bad_road_fraction(self):
        with pytest.raises(SceneDepthError):
            gen_flat_scene(small_rig(), road_fraction=0.0)


class TestBoxScene:
    def test_nearest_box_wins_overlap(self):
        rig = small_rig(mode=DepthMode.Z_DEPTH)
        near = BoxSpec(0.0, 5.0, 3.0, 1.0, 1.2, label=26, instance_id=1)
        far = BoxSpec(0.0, 10.0, 3.0, 1.0, 1.2, label=27, instance_id=2)
        sc = gen_box_scene(rig, (near, far))
        only_near = gen_box_scene(rig, (near,))
        only_far = gen_box_scene(rig, (far,))
        overlap = (only_near.instances.ids == 1) & (only_far.instances.ids == 2)
        assert overlap.any()
        assert (sc.instances.ids[overlap] == 1).all()  # near box wins everywhere both hit
        np.testing.assert_allclose(
            sc.gt.values[overlap], only_near.gt.values[overlap], rtol=0, atol=0
        )

    def test_front_face_depth_exact_in_z_mode(self):
        rig = small_rig(mode=DepthMode.Z_DEPTH)
        box = BoxSpec(0.0, 10.5, 2.0, 1.0, 1.2, label=26, instance_id=1)
        sc = gen_box_scene(rig, (box,))
        on_box = sc.instances.ids == 1
        front = on_box & (sc.gt.values == 10.0)
        assert front.any()
        # every box column's depth is constant down the column (axis-aligned faces)
        for u in range(rig.width_px):
            col = sc.gt.values[:, u][on_box[:, u]]
            if col.size:
                assert np.allclose(col, col[0], rtol=0, atol=1e-12)

    def test_box_labels_and_instances(self):
        rig = small_rig(mode=DepthMode.Z_DEPTH)
        box = BoxSpec(0.0, 10.5, 2.0, 1.0, 1.2, label=24, instance_id=9)
        sc = gen_box_scene(rig, (box,))
        sel = sc.instances.ids == 9
        assert sel.any()
        assert (sc.seg.labels[sel] == 24).all()

    def test_non_vertical_box_label_rejected(self):
        rig = small_rig()
        with pytest.raises(SceneDepthError):
            gen_box_scene(rig, (BoxSpec(0, 5, 1, 1, 1, label=7, instance_id=1),))

    def test_occlusion_is_min_over_primitives(self):
        rig = small_rig(mode=DepthMode.Z_DEPTH)
        boxes = (
            BoxSpec(-1.0, 6.5, 1.5, 1.0, 1.3, label=26, instance_id=1),
            BoxSpec(0.5, 9.5, 1.5, 1.0, 1.3, label=27, instance_id=2),
        )
        sc = gen_box_scene(rig, boxes)
        singles = [gen_box_scene(rig, (b,)) for b in boxes]
        flat = gen_flat_scene(rig)
        for v in range(0, rig.height_px, 7):
            for u in range(0, rig.width_px, 7):
                candidates = [s.gt.values[v, u] for s in singles if s.gt.valid[v, u]]
                if flat.gt.valid[v, u]:
                    candidates.append(flat.gt.values[v, u])
                if candidates:
                    assert sc.gt.values[v, u] == pytest.approx(min(candidates), rel=1e-12)
                else:
                    assert not sc.gt.valid[v, u]


class TestOracleSelfConsistency:
    def test_ray_cast_matches_closed_form_on_ground(self):
        rig = small_rig(h=1.3)
        sc = gen_flat_scene(rig)
        vs, us = np.nonzero(sc.gt.valid)
        rng = np.random.default_rng(8)
        for idx in rng.choice(len(vs), size=200, replace=False):
            u, v = int(us[idx]), int(vs[idx])
            p = backproject_ground_pixel(rig, u, v)
            assert sc.gt.values[v, u] == pytest.approx(
                ground_range(p, rig.depth_mode), abs=1e-9
            )


class TestPerturbMask:
    def test_zero_is_identity(self):
        sc = fixture("flat")
        out = perturb_mask(sc.seg, 0, "erode")
        np.testing.assert_array_equal(out.labels, sc.seg.labels)

    def test_dilate_monotone_in_k(self):
        sc = fixture("urban-3-box")
        counts = []
        prev = None
        for k in range(4):
            pert = perturb_mask(sc.seg, k, "dilate")
            g = mask_for(pert, {Category.FLAT_GROUND}).data
            counts.append(int(g.sum()))
            if prev is not None:
                assert not (prev & ~g).any()  # set inclusion
            prev = g
        assert counts == sorted(counts)

    def test_erode_monotone_in_k(self):
        sc = fixture("urban-3-box")
        prev = None
        for k in range(4):
            pert = perturb_mask(sc.seg, k, "erode")
            g = mask_for(pert, {Category.FLAT_GROUND}).data
            if prev is not None:
                assert not (g & ~prev).any()
            prev = g

    def test_displaced_pixels_become_vertical(self):
        sc = fixture("flat")
        pert = perturb_mask(sc.seg, 1, "erode")
        changed = pert.labels != sc.seg.labels
        assert changed.any()
        cats = {DEFAULT_CLASS_TABLE.category_of(int(l)) for l in np.unique(pert.labels[changed])}
        assert cats == {Category.VERTICAL}

    def test_bad_op_rejected(self):
        sc = fixture("flat")
        with pytest.raises(SceneDepthError):
            perturb_mask(sc.seg, 1, "open")

    def test_pipeline_robust_to_k2_perturbation(self):
        sc = fixture("flat")
        base = run_pipeline(sc.rig, sc.seg)
        road_mask = mask_for(sc.seg, {Category.ROAD})
        base_dist = error_distribution(base.road, sc.gt, road_mask)
        for op in ("erode", "dilate"):
            pert = perturb_mask(sc.seg, 2, op)
            b = run_pipeline(sc.rig, pert)
            pert_road = mask_for(pert, {Category.ROAD})
            dist = error_distribution(b.road, sc.gt, pert_road)
            assert abs(dist.pct_within_10 - base_dist.pct_within_10) < 0.02


class TestFixtures:
    @pytest.mark.parametrize("name", FIXTURE_NAMES)
    def test_manifest_counts_match_pipeline(self, name):
        manifest = json.loads((MANIFEST_DIR / f"{name}.json").read_text())
        sc = fixture(name)
        b = run_pipeline(sc.rig, sc.seg)
        got = {k: v.valid_count for k, v in b.stages().items()}
        assert got == manifest["expected"]["stage_valid_counts"]
        assert int(b.scene.sky.sum()) == manifest["expected"]["sky_count"]
        assert sc.gt.valid_count == manifest["expected"]["gt_valid_count"]
        for check in manifest["expected"]["spot_checks"]:
            stage = b.stages()[check["stage"]]
            got_value = stage.values[check["v"], check["u"]]
            assert got_value == pytest.approx(check["value"], rel=check["rtol"])

    def test_unknown_fixture_name(self):
        with pytest.raises(SceneDepthError, match="unknown fixture"):
            fixture("downtown")

    def test_floating_fixture_exercises_intermediary_rule(self):
        sc = fixture("floating-object")
        b = run_pipeline(sc.rig, sc.seg)
        contact = 384 * 1.5 / 73  # plane depth one row below the near box
        far_box = sc.instances.ids == 2
        assert far_box.any()
        assert b.extended.valid[far_box].all()
        np.testing.assert_allclose(b.extended.values[far_box], contact, rtol=0, atol=0)

    def test_stacked_rider_run_depth(self):
        sc = fixture("stacked-rider")
        b = run_pipeline(sc.rig, sc.seg)
        stack = sc.instances.ids > 0
        assert int(stack.sum()) == 3
        np.testing.assert_array_equal(b.extended.values[stack], np.full(3, 2.0))
        np.testing.assert_array_equal(sc.gt.values[stack], np.full(3, 2.0))
