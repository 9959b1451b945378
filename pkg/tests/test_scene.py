import numpy as np
import pytest

from scenedepth.depthmap import DepthMap
from scenedepth.errors import DimensionMismatchError, PipelineStageError
from scenedepth.scene import (
    DepthBundle,
    PipelineOptions,
    compose_scene,
    extend_vertical,
    ground_depth,
    road_depth,
    run_pipeline,
)
from scenedepth.segmentation import Category, DEFAULT_CLASS_TABLE, Mask, SegmentationMap, mask_for
from scenedepth.synthetic import FIXTURE_NAMES, fixture

from reference import extend_reference

ROAD, SKY, CAR, PERSON, VOID = 7, 23, 26, 24, 0


def seg_of(labels):
    return SegmentationMap(np.asarray(labels, dtype=np.uint16), DEFAULT_CLASS_TABLE)


def depth_of(values, valid=None):
    values = np.asarray(values, dtype=np.float64)
    if valid is None:
        valid = values > 0
    return DepthMap.create(values, valid)


class TestMaskingStages:
    def test_all_true_mask_is_identity(self):
        dm = depth_of([[1.0, 2.0], [3.0, 0.0]])
        out = road_depth(dm, Mask(np.ones((2, 2), bool)))
        np.testing.assert_array_equal(out.values, dm.values)
        np.testing.assert_array_equal(out.valid, dm.valid)

    def test_all_false_mask_clears(self):
        dm = depth_of([[1.0, 2.0], [3.0, 4.0]])
        out = road_depth(dm, Mask(np.zeros((2, 2), bool)))
        assert not out.valid.any()
        assert (out.values == 0).all()

    def test_dimension_mismatch(self):
        dm = depth_of([[1.0, 2.0]])
        with pytest.raises(DimensionMismatchError):
            road_depth(dm, Mask(np.ones((2, 2), bool)))

    def test_ground_superset_of_road(self):
        rng = np.random.default_rng(0)
        values = rng.uniform(1, 50, (8, 8))
        surface = depth_of(values)
        road_mask = rng.random((8, 8)) < 0.3
        ground_mask = road_mask | (rng.random((8, 8)) < 0.3)
        r = road_depth(surface, Mask(road_mask))
        g = ground_depth(surface, Mask(ground_mask))
        assert not (r.valid & ~g.valid).any()
        np.testing.assert_array_equal(r.values[r.valid], g.values[r.valid])

    def test_equal_masks_give_equal_stages(self):
        dm = depth_of([[2.0, 3.0], [4.0, 5.0]])
        m = Mask(np.array([[True, False], [False, True]]))
        np.testing.assert_array_equal(road_depth(dm, m).values, ground_depth(dm, m).values)


class TestExtendVertical:
    def test_single_column_run_takes_contact_depth(self):
        h, w = 100, 3
        labels = np.full((h, w), VOID, dtype=np.uint16)
        labels[50:100, 1] = ROAD
        labels[20:50, 1] = CAR
        values = np.zeros((h, w))
        valid = np.zeros((h, w), bool)
        values[50:100, 1] = 10.0
        valid[50:100, 1] = True
        out = extend_vertical(DepthMap.create(values, valid), seg_of(labels))
        assert out.valid[20:50, 1].all()
        np.testing.assert_array_equal(out.values[20:50, 1], np.full(30, 10.0))

    def test_unsupported_run_stays_invalid(self):
        labels = np.full((10, 1), VOID, dtype=np.uint16)
        labels[2:5, 0] = CAR  # below it: VOID with no depth
        values = np.zeros((10, 1))
        valid = np.zeros((10, 1), bool)
        out = extend_vertical(DepthMap.create(values, valid), seg_of(labels))
        assert not out.valid.any()

    def test_run_touching_image_bottom_stays_invalid(self):
        labels = np.full((6, 1), CAR, dtype=np.uint16)
        out = extend_vertical(depth_of(np.zeros((6, 1))), seg_of(labels))
        assert not out.valid.any()

    def test_stacked_runs_share_contact_depth(self):
        # rider directly atop bicycle, bicycle supported by ground: 8x8 fixture
        labels = np.full((8, 8), VOID, dtype=np.uint16)
        labels[6:8, :] = ROAD
        labels[3:5, 4] = 25  # rider
        labels[5, 4] = 33    # bicycle
        values = np.zeros((8, 8))
        valid = np.zeros((8, 8), bool)
        values[6, :] = 2.0
        values[7, :] = 1.6
        valid[6:8, :] = True
        out = extend_vertical(DepthMap.create(values, valid), seg_of(labels))
        np.testing.assert_array_equal(out.values[3:6, 4], np.full(3, 2.0))

    def test_floating_run_inherits_from_assigned_run_below(self):
        labels = np.full((12, 1), VOID, dtype=np.uint16)
        labels[10, 0] = ROAD
        labels[7:10, 0] = CAR    # grounded run
        labels[6, 0] = VOID      # gap with no depth
        labels[3:6, 0] = PERSON  # floating run
        values = np.zeros((12, 1))
        valid = np.zeros((12, 1), bool)
        values[10, 0] = 8.0
        valid[10, 0] = True
        out = extend_vertical(DepthMap.create(values, valid), seg_of(labels))
        assert out.valid[7:10, 0].all()
        assert out.valid[3:6, 0].all()
        np.testing.assert_array_equal(out.values[3:6, 0], np.full(3, 8.0))
        np.testing.assert_array_equal(out.values[7:10, 0], np.full(3, 8.0))
        assert not out.valid[6, 0]  # the gap itself is left for inpainting

    def test_floating_run_above_unassigned_run_stays_invalid(self):
        labels = np.full((12, 1), VOID, dtype=np.uint16)
        labels[7:10, 0] = CAR    # unsupported (nothing below)
        labels[5, 0] = VOID
        labels[2:5, 0] = PERSON
        out = extend_vertical(depth_of(np.zeros((12, 1))), seg_of(labels))
        assert not out.valid.any()

    def test_matches_per_column_reference_on_random_grids(self):
        rng = np.random.default_rng(12)
        ids = np.array([ROAD, CAR, PERSON, SKY, VOID, 8], dtype=np.uint16)
        vertical_ids = {CAR, PERSON}
        for _ in range(25):
            h, w = int(rng.integers(4, 30)), int(rng.integers(1, 30))
            labels = rng.choice(ids, size=(h, w)).astype(np.uint16)
            seg = seg_of(labels)
            gvals = rng.uniform(1, 100, (h, w))
            gvalid = (rng.random((h, w)) < 0.5) & np.isin(labels, [ROAD, 8])
            ground = DepthMap.create(np.where(gvalid, gvals, 0), gvalid)
            out = extend_vertical(ground, seg)
            ref_vals, ref_valid = extend_reference(
                ground.values, ground.valid, np.isin(labels, list(vertical_ids))
            )
            np.testing.assert_array_equal(out.valid, ref_valid)
            np.testing.assert_array_equal(out.values, ref_vals)

    def test_never_modifies_valid_pixels_and_never_shrinks(self):
        rng = np.random.default_rng(31)
        labels = rng.choice(
            np.array([ROAD, CAR, SKY, VOID], dtype=np.uint16), size=(20, 20)
        ).astype(np.uint16)
        gvalid = (rng.random((20, 20)) < 0.6) & (labels == ROAD)
        gvals = np.where(gvalid, rng.uniform(1, 30, (20, 20)), 0)
        ground = DepthMap.create(gvals, gvalid)
        out = extend_vertical(ground, seg_of(labels))
        assert out.valid_count >= ground.valid_count
        assert (ground.valid <= out.valid).all()
        np.testing.assert_array_equal(out.values[ground.valid], ground.values[ground.valid])

    def test_column_locality_under_permutation(self):
        rng = np.random.default_rng(44)
        labels = rng.choice(np.array([ROAD, CAR, VOID], dtype=np.uint16), size=(12, 6)).astype(np.uint16)
        gvalid = (rng.random((12, 6)) < 0.5) & (labels == ROAD)
        gvals = np.where(gvalid, rng.uniform(1, 9, (12, 6)), 0)
        out = extend_vertical(DepthMap.create(gvals, gvalid), seg_of(labels))
        perm = [1, 0, 2, 3, 5, 4]
        out_p = extend_vertical(
            DepthMap.create(gvals[:, perm], gvalid[:, perm]), seg_of(labels[:, perm])
        )
        np.testing.assert_array_equal(out_p.values, out.values[:, perm])
        np.testing.assert_array_equal(out_p.valid, out.valid[:, perm])


class TestComposeScene:
    def test_no_holes_no_sky_is_identity(self):
        values = np.arange(1.0, 10.0).reshape(3, 3)
        labels = np.full((3, 3), ROAD, dtype=np.uint16)
        dm = DepthMap.create(values, np.ones((3, 3), bool))
        out = compose_scene(dm, seg_of(labels))
        np.testing.assert_array_equal(out.values, dm.values)
        assert not out.sky.any()

    def test_sky_flagged_and_holes_filled(self):
        labels = np.full((6, 4), SKY, dtype=np.uint16)
        labels[3:, :] = ROAD
        labels[2, 1] = VOID
        values = np.zeros((6, 4))
        valid = np.zeros((6, 4), bool)
        values[3:, :] = 5.0
        valid[3:, :] = True
        out = compose_scene(DepthMap.create(values, valid), seg_of(labels))
        assert out.sky[0:2, :].all()
        assert not out.sky[2, 1]
        assert out.valid[2, 1]
        assert (~out.valid[out.sky]).all()
        assert (out.valid | out.sky).all()

    def test_mislabeled_valid_sky_pixel_keeps_value(self):
        labels = np.full((2, 2), SKY, dtype=np.uint16)
        values = np.array([[3.0, 0.0], [0.0, 0.0]])
        valid = np.array([[True, False], [False, False]])
        out = compose_scene(DepthMap.create(values, valid), seg_of(labels))
        assert out.valid[0, 0] and out.values[0, 0] == 3.0
        assert out.sky[0, 1] and out.sky[1, 0] and out.sky[1, 1]


class TestRunPipeline:
    def test_all_ground_frame_stages_coincide(self):
        sc = fixture("flat")
        b = run_pipeline(sc.rig, sc.seg)
        gv = b.ground.valid
        np.testing.assert_array_equal(b.ground.values[gv], b.surface.values[gv])
        np.testing.assert_array_equal(b.scene.values[gv], b.ground.values[gv])
        np.testing.assert_array_equal(b.extended.values, b.ground.values)

    @pytest.mark.parametrize("name", FIXTURE_NAMES)
    def test_nesting_and_value_preservation(self, name):
        sc = fixture(name)
        b = run_pipeline(sc.rig, sc.seg)
        chain = [b.road, b.ground, b.extended, b.scene]
        for earlier, later in zip(chain, chain[1:]):
            assert not (earlier.valid & ~later.valid).any()
            np.testing.assert_array_equal(
                later.values[earlier.valid], earlier.values[earlier.valid]
            )
        assert not (b.scene.sky & b.extended.valid).any()
        assert (b.scene.valid | b.scene.sky).all()

    def test_deterministic(self):
        sc = fixture("urban-3-box")
        a = run_pipeline(sc.rig, sc.seg)
        b = run_pipeline(sc.rig, sc.seg)
        for name in a.stages():
            np.testing.assert_array_equal(a.stages()[name].values, b.stages()[name].values)
            np.testing.assert_array_equal(a.stages()[name].valid, b.stages()[name].valid)
            np.testing.assert_array_equal(a.stages()[name].sky, b.stages()[name].sky)

    def test_dimension_mismatch_rejected(self):
        sc = fixture("flat")
        small = SegmentationMap(sc.seg.labels[:10, :10].copy(), sc.seg.table)
        with pytest.raises(DimensionMismatchError):
            run_pipeline(sc.rig, small)

    def test_stage_error_is_tagged(self):
        # an all-VOID frame leaves the scene stage with holes and no knowns
        labels = np.full((8, 8), VOID, dtype=np.uint16)
        sc = fixture("stacked-rider")
        with pytest.raises(PipelineStageError) as exc_info:
            run_pipeline(sc.rig, seg_of(labels), opts=PipelineOptions(inpaint_radius=3))
        assert exc_info.value.stage == "scene"
