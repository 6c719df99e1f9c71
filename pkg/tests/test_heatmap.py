"""Heatmap decoder: grids, ranking, rasters, projection, targets, loss."""

import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from gohome.exceptions import (
    DomainError,
    GridAlignmentError,
    ShapeMismatchError,
    TargetOutsideGridError,
)
from gohome.heatmap import (
    FEATURE_CHANNELS,
    HeatmapDecoder,
    HeatmapGrid,
    LaneRaster,
    combined_loss,
    lane_labels,
    load_heatmap,
    merge_heatmaps,
    project_heatmap,
    save_heatmap,
    select_top_k,
    target_heatmap,
)
from gohome.maps import Lanelet
from gohome.nn import tensor as T
from gohome.nn.tensor import Tensor, recording

from oracles import scatter_average_brute_force
from conftest import dyadic, fd_check


def straight_lanelet(lanelet_id=0, y=0.0, x0=0.0, length=10.0, n=5):
    xs = np.linspace(x0, x0 + length, n)
    return Lanelet(id=lanelet_id, centerline=np.stack([xs, np.full(n, y)], axis=1))


def make_raster(lanelet_id, world, features=None, proba=None):
    n = world.shape[0]
    feats = features if features is not None else np.zeros((n, FEATURE_CHANNELS))
    r = LaneRaster(
        lanelet_id=lanelet_id, h=n, w=1,
        features=T.as_tensor(feats),
        geo=T.as_tensor(np.zeros((n, 5))),
        world=np.asarray(world, dtype=np.float64),
    )
    if proba is not None:
        r.proba = T.as_tensor(np.asarray(proba, dtype=np.float64).reshape(n, 1))
    return r


class TestGrid:
    def test_centered_round_trip(self):
        grid = HeatmapGrid.centered((10.0, -3.0), 0.7, 32.0, 0.5)
        assert grid.H == grid.W == 64
        assert_allclose(grid.center, [10.0, -3.0], atol=1e-12)
        pts = np.random.default_rng(0).normal(size=(20, 2)) * 10
        assert_allclose(grid.grid_to_world(grid.world_to_grid(pts)), pts, atol=1e-12)

    def test_point_to_index(self):
        grid = HeatmapGrid(H=4, W=6, resolution=1.0, origin=(0.0, 0.0), orientation=0.0)
        rows, cols, ok = grid.point_to_index(np.array([[2.5, 1.5], [6.5, 0.5], [-0.1, 0.0]]))
        assert (rows[0], cols[0], ok[0]) == (1, 2, True)
        assert not ok[1] and not ok[2]

    def test_rotated_indexing(self):
        grid = HeatmapGrid(H=4, W=4, resolution=1.0, origin=(0.0, 0.0),
                           orientation=math.pi / 2)
        # grid +x points along world +y
        rows, cols, ok = grid.point_to_index(np.array([[0.0, 3.5]]))
        assert ok[0] and cols[0] == 3

    def test_pixel_center_inverts_index(self):
        grid = HeatmapGrid.centered((5.0, 5.0), 1.1, 16.0, 0.5)
        centers = grid.pixel_centers(np.array([3, 17]), np.array([9, 0]))
        rows, cols, ok = grid.point_to_index(centers)
        assert_array_equal(rows, [3, 17])
        assert_array_equal(cols, [9, 0])
        assert ok.all()

    def test_values_validated(self):
        with pytest.raises(DomainError):
            HeatmapGrid(H=2, W=2, resolution=1.0, origin=(0, 0), orientation=0.0,
                        values=np.array([[0.0, 2.0], [0.0, 0.0]]))
        with pytest.raises(ShapeMismatchError):
            HeatmapGrid(H=2, W=2, resolution=1.0, origin=(0, 0), orientation=0.0,
                        values=np.zeros((3, 2)))


class TestRanking:
    def test_zero_weights_give_half(self):
        dec = HeatmapDecoder(8, np.random.default_rng(0))
        dec.score_head.W.data[:] = 0.0
        dec.score_head.b.data[:] = 0.0
        lanelets = [straight_lanelet(i, y=4.0 * i) for i in range(3)]
        scores, ranked = dec.rank_lanes(T.as_tensor(np.ones((3, 8))), lanelets)
        assert_array_equal(scores.data, np.full((3, 1), 0.5))
        assert [e.lanelet_id for e in ranked] == [0, 1, 2]  # tie -> ascending id

    def test_sorted_descending(self):
        dec = HeatmapDecoder(2, np.random.default_rng(1))
        dec.score_head.W.data[:] = np.array([[1.0], [0.0]])
        dec.score_head.b.data[:] = 0.0
        enc = T.as_tensor(np.array([[0.2, 0.0], [1.5, 0.0], [-0.3, 0.0]]))
        lanelets = [straight_lanelet(i) for i in range(3)]
        _, ranked = dec.rank_lanes(enc, lanelets)
        assert [e.lanelet_id for e in ranked] == [1, 0, 2]

    def test_select_top_k(self):
        dec = HeatmapDecoder(2, np.random.default_rng(1))
        enc = T.as_tensor(np.random.default_rng(2).normal(size=(5, 2)))
        lanelets = [straight_lanelet(i) for i in range(5)]
        _, ranked = dec.rank_lanes(enc, lanelets)
        assert len(select_top_k(ranked, 3)) == 3
        assert select_top_k(ranked, 99) == [e.lanelet_id for e in ranked]
        with pytest.raises(DomainError):
            select_top_k(ranked, 0)

    def test_single_lanelet_always_selected(self):
        dec = HeatmapDecoder(2, np.random.default_rng(3))
        _, ranked = dec.rank_lanes(T.as_tensor(np.zeros((1, 2))), [straight_lanelet(7)])
        assert select_top_k(ranked, 20) == [7]

    def test_lane_labels(self):
        lanelets = [straight_lanelet(0, y=0.0), straight_lanelet(1, y=4.0)]
        assert_array_equal(lane_labels(lanelets, np.array([5.0, 0.3])), [1.0, 0.0])
        assert_array_equal(lane_labels(lanelets, np.array([5.0, 3.5])), [0.0, 1.0])


class TestLaneRaster:
    def make(self, dim=8, res=0.5, seed=0):
        return HeatmapDecoder(dim, np.random.default_rng(seed), resolution=res)

    def test_default_raster_shape(self):
        dec = self.make()
        assert (dec.h, dec.w) == (40, 8)

    def test_broadcast_rank1_exact(self):
        dec = self.make(dim=8)
        rng = np.random.default_rng(5)
        for head in (dec.long_head, dec.lat_head):
            head.W.data[:] = dyadic(rng, head.W.data.shape)
            head.b.data[:] = dyadic(rng, head.b.data.shape)
        row = T.as_tensor(dyadic(rng, (1, 8)))
        grid = HeatmapGrid.centered((5.0, 0.0), 0.0, 32.0, 0.5)
        raster = dec.build_lane_raster(straight_lanelet(), row, grid)
        R = raster.features_hw
        residual = R - R[:, :1] - R[:1, :] + R[:1, :1]
        assert_array_equal(residual, np.zeros_like(residual))

    def test_broadcast_flop_count(self):
        dec = self.make(dim=16)
        grid = HeatmapGrid.centered((5.0, 0.0), 0.0, 32.0, 0.5)
        row = T.as_tensor(np.random.default_rng(0).normal(size=(1, 16)))
        with recording() as rec:
            dec.build_lane_raster(straight_lanelet(), row, grid)
        assert rec.total == (dec.h + dec.w) * FEATURE_CHANNELS * 16
        assert rec.total == dec.raster_flops()

    def test_dense_reference_matches_and_costs_more(self):
        dec = self.make(dim=16)
        grid = HeatmapGrid.centered((5.0, 0.0), 0.0, 32.0, 0.5)
        row = T.as_tensor(np.random.default_rng(1).normal(size=(1, 16)))
        raster = dec.build_lane_raster(straight_lanelet(), row, grid)
        with recording() as rec:
            dense = dec.dense_raster_reference(row)
        assert rec.total == dec.h * dec.w * FEATURE_CHANNELS * 16
        assert rec.total == dec.dense_raster_flops()
        assert_allclose(dense.data, raster.features.data, atol=1e-12)

    def test_geometric_channels(self):
        dec = self.make(res=0.5)
        grid = HeatmapGrid(H=64, W=64, resolution=0.5, origin=(0.0, 0.0), orientation=0.0)
        lanelet = straight_lanelet(0, y=2.0, x0=0.0, length=10.0)
        row = T.as_tensor(np.zeros((1, 8)))
        raster = dec.build_lane_raster(lanelet, row, grid)
        geo = raster.geo.data.reshape(dec.h, dec.w, 5)
        # first raster pixel center: s=0.25, d=-1.75 -> world (0.25, 0.25)
        assert_allclose(raster.world[0], [0.25, 0.25], atol=1e-12)
        assert_allclose(geo[0, 0, 0], (0.25 - 16.0) / 16.0, atol=1e-12)
        assert_allclose(geo[0, 0, 1], (0.25 - 16.0) / 16.0, atol=1e-12)
        assert_allclose(geo[..., 2], 0.0, atol=1e-12)  # lane parallel to grid x
        # occupancy flag marks s beyond the 10 m lanelet end
        flags = geo[..., 3]
        assert_array_equal(flags[:20], np.zeros((20, 8)))
        assert_array_equal(flags[20:], np.ones((20, 8)))
        assert_allclose(geo[..., 4], 0.0, atol=1e-12)  # straight -> zero curvature

    def test_curvature_channel_clipped(self):
        dec = self.make(res=0.5)
        theta = np.linspace(0.0, np.pi, 40)
        wiggle = Lanelet(id=0, centerline=np.stack([np.cos(theta), np.sin(theta)], axis=1))
        grid = HeatmapGrid.centered((0.0, 0.0), 0.0, 32.0, 0.5)
        raster = dec.build_lane_raster(wiggle, T.as_tensor(np.zeros((1, 8))), grid)
        kappa = raster.geo.data[:, 4]
        assert kappa.max() <= 0.5 and kappa.min() >= -0.5
        assert np.any(np.abs(kappa) == 0.5)  # unit circle kappa=1 clips


class TestCartesianConnection:
    def test_identity_without_overlap(self):
        dec = HeatmapDecoder(4, np.random.default_rng(0), resolution=1.0)
        grid = HeatmapGrid(H=8, W=8, resolution=1.0, origin=(0.0, 0.0), orientation=0.0)
        world = np.stack([np.arange(5) + 0.5, np.full(5, 0.5)], axis=1)
        feats = np.random.default_rng(1).normal(size=(5, FEATURE_CHANNELS))
        raster = make_raster(0, world, features=feats)
        dec.cartesian_connection([raster], grid)
        ones = np.ones((5, 1))
        expected = dec.connect(T.as_tensor(np.concatenate([feats, ones], axis=1)))
        assert_array_equal(raster.connected.data, expected.data)

    def test_shared_pixel_averages_and_counts(self):
        dec = HeatmapDecoder(4, np.random.default_rng(0), resolution=1.0)
        grid = HeatmapGrid(H=4, W=4, resolution=1.0, origin=(0.0, 0.0), orientation=0.0)
        v = np.random.default_rng(2).normal(size=(1, FEATURE_CHANNELS))
        a = make_raster(0, np.array([[1.5, 1.5]]), features=v)
        b = make_raster(1, np.array([[1.5, 1.5]]), features=v)
        dec.cartesian_connection([a, b], grid)
        expected = dec.connect(T.as_tensor(np.concatenate([v, [[2.0]]], axis=1)))
        assert_allclose(a.connected.data, expected.data, atol=1e-15)
        assert_array_equal(a.connected.data, b.connected.data)

    def test_out_of_grid_pixels_get_zeros(self):
        dec = HeatmapDecoder(4, np.random.default_rng(0), resolution=1.0)
        grid = HeatmapGrid(H=4, W=4, resolution=1.0, origin=(0.0, 0.0), orientation=0.0)
        world = np.array([[1.5, 1.5], [99.0, 99.0]])
        raster = make_raster(0, world, features=np.ones((2, FEATURE_CHANNELS)))
        dec.cartesian_connection([raster], grid)
        assert_array_equal(raster.connected.data[1], np.zeros(FEATURE_CHANNELS))
        assert np.any(raster.connected.data[0] != 0.0)


class TestFinalize:
    def test_zero_weights_give_half(self):
        dec = HeatmapDecoder(4, np.random.default_rng(0), resolution=0.5)
        dec.pixel_head.W.data[:] = 0.0
        dec.pixel_head.b.data[:] = 0.0
        grid = HeatmapGrid.centered((5.0, 0.0), 0.0, 32.0, 0.5)
        raster = dec.build_lane_raster(straight_lanelet(), T.as_tensor(np.zeros((1, 4))), grid)
        dec.cartesian_connection([raster], grid)
        proba = dec.finalize_proba(raster)
        assert proba.shape == (40 * 8, 1)
        assert_array_equal(proba.data, np.full((320, 1), 0.5))

    def test_bias_monotonicity(self):
        dec = HeatmapDecoder(4, np.random.default_rng(3), resolution=0.5)
        grid = HeatmapGrid.centered((5.0, 0.0), 0.0, 32.0, 0.5)

        def run():
            raster = dec.build_lane_raster(
                straight_lanelet(), T.as_tensor(np.ones((1, 4))), grid)
            dec.cartesian_connection([raster], grid)
            return dec.finalize_proba(raster).data.copy()

        base = run()
        dec.pixel_head.b.data[:] += 0.25
        assert np.all(run() > base)

    def test_requires_connection_first(self):
        dec = HeatmapDecoder(4, np.random.default_rng(0), resolution=0.5)
        grid = HeatmapGrid.centered((5.0, 0.0), 0.0, 32.0, 0.5)
        raster = dec.build_lane_raster(straight_lanelet(), T.as_tensor(np.zeros((1, 4))), grid)
        with pytest.raises(DomainError):
            dec.finalize_proba(raster)


class TestProjection:
    def test_no_rasters_all_zero(self):
        grid = HeatmapGrid(H=4, W=4, resolution=1.0, origin=(0.0, 0.0), orientation=0.0)
        heat, yhat = project_heatmap([], grid)
        assert_array_equal(heat.values, np.zeros((4, 4)))
        assert_array_equal(yhat.data, np.zeros((16, 1)))

    def test_aligned_corridor_exact(self):
        dec = HeatmapDecoder(4, np.random.default_rng(0), resolution=0.5)
        grid = HeatmapGrid(H=40, W=48, resolution=0.5, origin=(0.0, 0.0), orientation=0.0)
        lanelet = straight_lanelet(0, y=2.0, x0=0.0, length=10.0)
        raster = dec.build_lane_raster(lanelet, T.as_tensor(np.zeros((1, 4))), grid)
        p = 0.37
        raster.proba = T.as_tensor(np.full((dec.h * dec.w, 1), p))
        heat, _ = project_heatmap([raster], grid)
        expected = np.zeros((40, 48))
        expected[0:8, 0:40] = p  # 4 m wide x 20 m long corridor from the origin
        assert_array_equal(heat.values, expected)

    def test_overlap_averages(self):
        grid = HeatmapGrid(H=4, W=4, resolution=1.0, origin=(0.0, 0.0), orientation=0.0)
        a = make_raster(0, np.array([[1.5, 2.5]]), proba=[0.8])
        b = make_raster(1, np.array([[1.5, 2.5]]), proba=[0.4])
        heat, _ = project_heatmap([a, b], grid)
        assert heat.values[2, 1] == (0.8 + 0.4) / 2.0
        assert heat.values.sum() == heat.values[2, 1]

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            H, W = int(rng.integers(8, 24)), int(rng.integers(8, 24))
            theta = rng.uniform(-np.pi, np.pi)
            origin = rng.normal(size=2) * 5
            grid = HeatmapGrid(H=H, W=W, resolution=0.5, origin=origin, orientation=theta)
            rasters = []
            pts_int, vals = [], []
            for rid in range(int(rng.integers(1, 5))):
                n = int(rng.integers(1, 60))
                world = origin + rng.normal(size=(n, 2)) * 4.0
                proba = rng.uniform(size=n)
                rasters.append(make_raster(rid, world, proba=proba))
                # oracle indices computed with independent trig
                c, s = math.cos(theta), math.sin(theta)
                rel = world - origin
                gx = c * rel[:, 0] + s * rel[:, 1]
                gy = -s * rel[:, 0] + c * rel[:, 1]
                cols = np.floor(gx / 0.5).astype(int)
                rows = np.floor(gy / 0.5).astype(int)
                for (r, cc, v) in zip(rows, cols, proba):
                    if 0 <= r < H and 0 <= cc < W:
                        pts_int.append((r, cc))
                        vals.append(v)
            heat, _ = project_heatmap(rasters, grid)
            expected, _ = scatter_average_brute_force(pts_int, vals, (H, W))
            assert_array_equal(heat.values, expected)

    def test_dropping_rasters_preserves_untouched_pixels(self):
        rng = np.random.default_rng(13)
        grid = HeatmapGrid(H=16, W=16, resolution=1.0, origin=(0.0, 0.0), orientation=0.0)
        rasters = [
            make_raster(i, rng.uniform(0, 16, size=(20, 2)), proba=rng.uniform(size=20))
            for i in range(4)
        ]
        full, _ = project_heatmap(rasters, grid)
        kept, _ = project_heatmap(rasters[:2], grid)
        dropped_touch = np.zeros((16, 16), dtype=bool)
        for r in rasters[2:]:
            rows, cols, ok = grid.point_to_index(r.world)
            dropped_touch[rows[ok], cols[ok]] = True
        assert_array_equal(kept.values[~dropped_touch], full.values[~dropped_touch])


class TestTargetHeatmap:
    def grid(self):
        return HeatmapGrid(H=64, W=64, resolution=0.5, origin=(0.0, 0.0), orientation=0.0)

    def test_peak_at_gt_pixel(self):
        grid = self.grid()
        gt = grid.pixel_centers(np.array([10]), np.array([20]))[0]
        y = target_heatmap(gt, grid, sigma=1.0)
        assert y[10, 20] == 1.0
        assert y.max() == 1.0
        assert y[10, 22] == pytest.approx(math.exp(-0.5), rel=1e-12)  # 1 m = sigma away

    def test_off_center_gt_forced_to_one(self):
        grid = self.grid()
        gt = grid.pixel_centers(np.array([10]), np.array([20]))[0] + np.array([0.2, 0.1])
        y = target_heatmap(gt, grid, sigma=1.0)
        assert y[10, 20] == 1.0

    def test_gaussian_mass(self):
        grid = self.grid()
        gt = grid.pixel_centers(np.array([32]), np.array([32]))[0]
        sigma = 2.0
        y = target_heatmap(gt, grid, sigma=sigma)
        expected = 2.0 * math.pi * sigma**2 / grid.resolution**2
        assert y.sum() == pytest.approx(expected, rel=1e-4)

    def test_outside_grid_raises(self):
        with pytest.raises(TargetOutsideGridError):
            target_heatmap(np.array([-5.0, 0.0]), self.grid(), sigma=1.0)

    def test_sigma_validated(self):
        with pytest.raises(DomainError):
            target_heatmap(np.array([1.0, 1.0]), self.grid(), sigma=0.0)


class TestCombinedLoss:
    def test_perfect_binary_prediction_zero_focal(self):
        y = np.array([[1.0], [0.0], [0.0]])
        yhat = T.as_tensor(y.copy())
        scores = T.as_tensor(np.array([[0.5]]))
        loss = combined_loss(yhat, y, scores, np.array([1.0]), ranking_weight=0.0)
        assert loss.data == 0.0

    def test_single_pixel_value(self):
        yhat = T.as_tensor(np.array([[0.5]]))
        loss = combined_loss(yhat, np.array([[1.0]]), T.as_tensor(np.array([[0.5]])),
                             np.array([1.0]), ranking_weight=0.0)
        assert loss.data == pytest.approx(0.25 * math.log(2.0), rel=1e-12)

    def test_flat_half_point_has_zero_gradient(self):
        # both focal factors carry a (Y - p) term, so d/dp at Y = p = 0.5 is 0
        yhat = T.Tensor(np.array([[0.5]]), requires_grad=True)
        loss = combined_loss(yhat, np.array([[0.5]]), T.as_tensor(np.array([[0.5]])),
                             np.array([1.0]), ranking_weight=0.0)
        assert loss.data == 0.0
        loss.backward()
        assert abs(yhat.grad[0, 0]) < 1e-12
        eps = 1e-6
        up = combined_loss(T.as_tensor([[0.5 + eps]]), np.array([[0.5]]),
                           T.as_tensor([[0.5]]), np.array([1.0]), ranking_weight=0.0)
        dn = combined_loss(T.as_tensor([[0.5 - eps]]), np.array([[0.5]]),
                           T.as_tensor([[0.5]]), np.array([1.0]), ranking_weight=0.0)
        assert abs((up.data - dn.data) / (2 * eps)) < 1e-5

    def test_ranking_term_weighted(self):
        y = np.array([[0.0]])
        yhat = T.as_tensor(np.array([[0.0]]))
        scores = T.as_tensor(np.array([[0.25], [0.75]]))
        labels = np.array([0.0, 1.0])
        loss = combined_loss(yhat, y, scores, labels)
        bce = -(math.log(1.0 - 0.25) + math.log(0.75)) / 2.0
        assert loss.data == pytest.approx(1e-2 * bce, rel=1e-9)

    def test_boundary_values_clamped_and_logged(self, caplog):
        y = np.array([[1.0], [0.0]])
        yhat = T.as_tensor(np.array([[0.0], [1.0]]))
        with caplog.at_level(logging.DEBUG, logger="gohome.heatmap"):
            loss = combined_loss(yhat, y, T.as_tensor([[0.5]]), np.array([1.0]),
                                 ranking_weight=0.0)
        assert any("clamp" in r.message for r in caplog.records)
        expected = -0.5 * (math.log(1e-7) + math.log(1e-7))
        assert loss.data == pytest.approx(expected, rel=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            combined_loss(T.as_tensor(np.zeros((3, 1))), np.zeros((2, 1)),
                          T.as_tensor([[0.5]]), np.array([1.0]))

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(21)
        y = np.zeros((12, 1))
        y[3, 0] = 1.0
        y[5, 0] = 0.6
        yhat = T.Tensor(rng.uniform(0.1, 0.9, size=(12, 1)), requires_grad=True)
        scores = T.Tensor(rng.uniform(0.2, 0.8, size=(4, 1)), requires_grad=True)
        labels = np.array([1.0, 0.0, 0.0, 1.0])
        fd_check(
            lambda: combined_loss(yhat, y, scores, labels),
            [yhat, scores],
        )


class TestEndToEndGradients:
    def test_decoder_pipeline_fd(self):
        rng = np.random.default_rng(31)
        dec = HeatmapDecoder(8, rng, resolution=1.0)
        lanelets = [
            straight_lanelet(0, y=0.0, x0=-10.0, length=10.0),
            straight_lanelet(1, y=0.0, x0=0.0, length=10.0),
            straight_lanelet(2, y=4.0, x0=-5.0, length=10.0),
        ]
        grid = HeatmapGrid.centered((0.3, 0.2), 0.15, 32.0, 1.0)
        target = target_heatmap(np.array([4.3, 0.4]), grid, sigma=1.0)
        labels = lane_labels(lanelets, np.array([4.3, 0.4]))
        encoding = T.Tensor(rng.normal(size=(3, 8)), requires_grad=True)

        def loss_fn():
            scores, ranked = dec.rank_lanes(encoding, lanelets)
            ids = select_top_k(ranked, 3)
            _, yhat, _ = dec.decode(encoding, lanelets, grid, ids)
            return combined_loss(yhat, target, scores, labels)

        params = [encoding] + list(dec.parameters())
        fd_check(loss_fn, params, max_coords=12, rng=np.random.default_rng(0))


class TestDecodeMatchesReferencePath:
    """decode batches across lanelets; the step-by-step path is the oracle.

    Geometry must agree bitwise.  Head outputs go through one batched matmul
    instead of a per-lanelet one, so BLAS may reassociate the dot products;
    anything beyond a couple of ulp is a real divergence.
    """

    def reference(self, dec, encoding, lanelets, grid, ids):
        by_id = {l.id: i for i, l in enumerate(lanelets)}
        rasters = []
        for lanelet_id in sorted(ids):
            i = by_id[lanelet_id]
            row = T.slice_view(encoding, slice(i, i + 1))
            rasters.append(dec.build_lane_raster(lanelets[i], row, grid))
        dec.cartesian_connection(rasters, grid)
        for r in rasters:
            dec.finalize_proba(r)
        heat, yhat = project_heatmap(rasters, grid)
        return heat, yhat, rasters

    def case(self, dec, encoding, lanelets, grid, ids):
        heat, yhat, rasters = dec.decode(encoding, lanelets, grid, ids)
        ref_heat, ref_yhat, ref_rasters = self.reference(dec, encoding, lanelets, grid, ids)
        close = lambda a, b: assert_allclose(a, b, rtol=1e-13, atol=1e-12)
        close(heat.values, ref_heat.values)
        assert_array_equal(heat.values == 0.0, ref_heat.values == 0.0)
        close(yhat.data, ref_yhat.data)
        for got, ref in zip(rasters, ref_rasters):
            assert got.lanelet_id == ref.lanelet_id
            close(got.features.data, ref.features.data)
            assert_array_equal(got.geo.data, ref.geo.data)
            assert_array_equal(got.world, ref.world)
            close(got.connected.data, ref.connected.data)
            close(got.proba.data, ref.proba.data)

    def test_bitwise_equal_on_overlapping_lanelets(self):
        rng = np.random.default_rng(7)
        dec = HeatmapDecoder(8, rng, resolution=1.0)
        lanelets = [
            straight_lanelet(5, y=0.0, x0=-10.0, length=10.0),
            straight_lanelet(1, y=0.0, x0=0.0, length=10.0),
            straight_lanelet(9, y=4.0, x0=-5.0, length=10.0),
        ]
        grid = HeatmapGrid.centered((0.3, 0.2), 0.15, 32.0, 1.0)
        encoding = T.as_tensor(rng.normal(size=(3, 8)))
        self.case(dec, encoding, lanelets, grid, [9, 5, 1])
        self.case(dec, encoding, lanelets, grid, [9, 1])

    def test_bitwise_equal_with_out_of_grid_rasters(self):
        rng = np.random.default_rng(8)
        dec = HeatmapDecoder(8, rng, resolution=1.0)
        lanelets = [
            straight_lanelet(0, y=0.0, x0=0.0, length=10.0),
            straight_lanelet(1, y=100.0, x0=100.0, length=10.0),
        ]
        grid = HeatmapGrid.centered((2.0, 0.0), 0.0, 16.0, 1.0)
        encoding = T.as_tensor(rng.normal(size=(2, 8)))
        self.case(dec, encoding, lanelets, grid, [0, 1])
        # every raster pixel outside the grid: projection must stay all-zero
        far = HeatmapGrid.centered((500.0, 500.0), 0.0, 8.0, 1.0)
        self.case(dec, encoding, lanelets, far, [0])

    def test_empty_ids_give_zero_heatmap(self):
        rng = np.random.default_rng(9)
        dec = HeatmapDecoder(8, rng, resolution=1.0)
        lanelets = [straight_lanelet(0, y=0.0, x0=0.0, length=10.0)]
        grid = HeatmapGrid.centered((0.0, 0.0), 0.0, 8.0, 1.0)
        heat, yhat, rasters = dec.decode(T.as_tensor(rng.normal(size=(1, 8))), lanelets, grid, [])
        assert rasters == []
        assert_array_equal(heat.values, np.zeros((8, 8)))
        assert_array_equal(yhat.data, np.zeros((64, 1)))


class TestExportAndMerge:
    def test_pgm_round_trip(self, tmp_path):
        rng = np.random.default_rng(17)
        vals = np.round(rng.uniform(size=(12, 9)) * 65535) / 65535
        grid = HeatmapGrid(H=12, W=9, resolution=0.5, origin=(3.0, -2.0),
                           orientation=0.4, values=vals)
        save_heatmap(grid, tmp_path / "h.pgm")
        back = load_heatmap(tmp_path / "h.pgm")
        assert back.same_geometry(grid)
        assert_allclose(back.values, vals, atol=0.5 / 65535)

    def test_merge_averages(self):
        base = HeatmapGrid(H=2, W=2, resolution=1.0, origin=(0.0, 0.0), orientation=0.0)
        a = base.with_values(np.array([[0.2, 0.4], [0.0, 1.0]]))
        b = base.with_values(np.array([[0.6, 0.0], [0.0, 0.5]]))
        merged = merge_heatmaps([a, b])
        assert_allclose(merged.values, [[0.4, 0.2], [0.0, 0.75]])

    def test_merge_rejects_mismatched_grids(self):
        a = HeatmapGrid(H=2, W=2, resolution=1.0, origin=(0.0, 0.0), orientation=0.0,
                        values=np.zeros((2, 2)))
        b = HeatmapGrid(H=2, W=2, resolution=1.0, origin=(1.0, 0.0), orientation=0.0,
                        values=np.zeros((2, 2)))
        with pytest.raises(GridAlignmentError):
            merge_heatmaps([a, b])
