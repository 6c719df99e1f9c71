"""Greedy endpoint sampler and heatmap ensembling tests."""

import numpy as np
import pytest

from gohome.exceptions import DomainError, GridAlignmentError
from gohome.heatmap import HeatmapGrid
from gohome.sampling import (
    SAMPLING_RADII,
    disk_offsets,
    ensemble_heatmaps,
    sample_endpoints,
)

from conftest import dyadic
from oracles import greedy_sample_brute_force


def grid_with(values, resolution=0.5, origin=(0.0, 0.0), orientation=0.0):
    values = np.asarray(values, dtype=np.float64)
    h, w = values.shape
    return HeatmapGrid(H=h, W=w, resolution=resolution,
                       origin=np.asarray(origin, dtype=np.float64),
                       orientation=orientation, values=values)


class TestDiskOffsets:
    def test_radius_1_8_at_half_meter(self):
        offs = disk_offsets(1.8, 0.5)
        assert offs.shape == (37, 2)
        d2 = offs[:, 0] ** 2 + offs[:, 1] ** 2
        assert np.all(d2 * 0.25 <= 1.8 * 1.8)
        # nothing just outside the rim was included, and the rim itself was
        assert [3, 1] in offs.tolist()
        assert [3, 2] not in offs.tolist()

    def test_radius_1_4_count(self):
        assert disk_offsets(1.4, 0.5).shape == (21, 2)

    def test_sorted_row_major(self):
        offs = disk_offsets(2.6, 0.5)
        as_tuples = [tuple(o) for o in offs]
        assert as_tuples == sorted(as_tuples)
        assert (0, 0) in as_tuples

    def test_singleton_when_radius_below_resolution(self):
        assert disk_offsets(0.9, 1.0).tolist() == [[0, 0]]

    @pytest.mark.parametrize("r,res", [(0.0, 0.5), (-1.0, 0.5), (1.8, 0.0)])
    def test_rejects_non_positive(self, r, res):
        with pytest.raises(DomainError):
            disk_offsets(r, res)


class TestSamplerExamples:
    def test_single_nonzero_pixel_unique_maximizer(self):
        values = np.zeros((3, 3))
        values[1, 1] = 0.7
        g = grid_with(values, resolution=1.0)
        out = sample_endpoints(g, k=1, r=0.9)  # disk is a single pixel
        assert out.pixels.tolist() == [[1, 1]]
        assert np.array_equal(out.endpoints[0], g.pixel_centers([1], [1])[0])
        assert out.masses[0] == 0.7
        assert not out.degenerate

    def test_two_equal_peaks_ten_meters_apart(self):
        values = np.zeros((32, 32))
        values[15, 5] = 1.0
        values[15, 25] = 1.0  # 20 px * 0.5 m = 10 m apart
        g = grid_with(values)
        out = sample_endpoints(g, k=2, r=1.8)
        assert out.masses.tolist() == [1.0, 1.0]
        peaks = g.pixel_centers([15, 15], [5, 25])
        d = np.linalg.norm(out.endpoints[:, None, :] - peaks[None, :, :], axis=2)
        # each selection covers exactly one peak, and they cover different ones
        assert set(np.argmin(d, axis=1).tolist()) == {0, 1}
        assert np.all(np.min(d, axis=1) <= 1.8)
        # tie-break: the first selection covers the row-major earlier peak
        assert np.argmin(d[0]) == 0

    def test_dominant_peak_selected_exactly(self):
        values = np.zeros((32, 32))
        values[10, 10] = 1.0
        # halo on the rim of the 1.8 m disk: only (10, 10) covers all of it
        for dy, dx in ((0, 3), (0, -3), (3, 0), (-3, 0)):
            values[10 + dy, 10 + dx] = 0.125
        g = grid_with(values)
        out = sample_endpoints(g, k=1, r=1.8)
        assert out.pixels.tolist() == [[10, 10]]
        assert out.masses[0] == 1.5

    def test_tie_takes_lowest_row_major_index(self):
        values = np.zeros((16, 16))
        values[12, 3] = 1.0
        g = grid_with(values, resolution=1.0)
        out = sample_endpoints(g, k=1, r=0.9)
        assert out.pixels.tolist() == [[12, 3]]
        # now two exact ties: earlier row wins, then earlier column
        values[2, 9] = 1.0
        out = sample_endpoints(grid_with(values, resolution=1.0), k=2, r=0.9)
        assert out.pixels.tolist() == [[2, 9], [12, 3]]


class TestOracleEquivalence:
    def make_cases(self):
        rng = np.random.default_rng(99)
        cases = []
        for i in range(12):
            if i % 3 == 0:
                v = rng.random((32, 32))
            elif i % 3 == 1:
                # sparse spikes: adversarial for greedy coverage
                v = np.where(rng.random((32, 32)) < 0.04, rng.random((32, 32)), 0.0)
            else:
                # few distinct dyadic levels: many exact ties
                v = rng.integers(0, 4, size=(32, 32)) / 16.0
            cases.append(v)
        return cases

    def test_matches_brute_force_exactly(self):
        for values in self.make_cases():
            g = grid_with(values)
            for k in (1, 6):
                for r in (1.4, 1.8, 2.6):
                    out = sample_endpoints(g, k=k, r=r)
                    picks, masses, _ = greedy_sample_brute_force(values, 0.5, k, r)
                    assert out.pixels.tolist() == [list(p) for p in picks]
                    assert out.masses.tolist() == masses  # exact, no tolerance

    def test_endpoints_are_selected_pixel_centers(self):
        values = np.random.default_rng(3).random((24, 24))
        g = grid_with(values, origin=(12.0, -7.0), orientation=0.6)
        out = sample_endpoints(g, k=6, r=1.8)
        expected = g.pixel_centers(out.pixels[:, 0], out.pixels[:, 1])
        assert np.array_equal(out.endpoints, expected)


class TestSamplerInvariants:
    def test_masses_non_increasing(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            g = grid_with(rng.random((32, 32)))
            out = sample_endpoints(g, k=6, r=1.8)
            assert np.all(np.diff(out.masses) <= 0.0)

    def test_no_pixel_reselected_while_mass_remains(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            g = grid_with(rng.random((32, 32)))
            out = sample_endpoints(g, k=6, r=2.6)
            live = out.masses > 0.0
            picks = [tuple(p) for p, ok in zip(out.pixels.tolist(), live) if ok]
            assert len(picks) == len(set(picks))

    def test_scale_invariance_power_of_two(self):
        values = np.random.default_rng(21).random((32, 32))
        g = grid_with(values)
        a = sample_endpoints(g, k=6, r=1.8)
        b = sample_endpoints(g.with_values(values * 0.25), k=6, r=1.8)
        assert np.array_equal(a.pixels, b.pixels)
        assert np.array_equal(a.masses * 0.25, b.masses)

    def test_scale_invariance_generic_factor_on_dyadic_grid(self):
        rng = np.random.default_rng(22)
        values = np.abs(dyadic(rng, (32, 32), span=16))  # non-negative, within [0, 1]
        g = grid_with(values)
        c = 3.0 / 16.0  # not a power of two, still exact on dyadic values
        a = sample_endpoints(g, k=6, r=1.8)
        b = sample_endpoints(g.with_values(values * c), k=6, r=1.8)
        assert np.array_equal(a.pixels, b.pixels)
        assert np.array_equal(a.masses * c, b.masses)


class TestDegenerateAndExhaustion:
    def test_all_zero_heatmap_degenerate(self):
        g = grid_with(np.zeros((20, 16)))
        out = sample_endpoints(g, k=6, r=1.8)
        assert out.degenerate
        assert np.array_equal(out.masses, np.zeros(6))
        assert out.pixels.tolist() == [[10, 8]] * 6
        assert np.allclose(out.endpoints, g.center)

    def test_early_exhaustion_repeats_last_selection(self):
        values = np.zeros((32, 32))
        values[16, 16] = 1.0
        g = grid_with(values)
        out = sample_endpoints(g, k=6, r=2.6)
        assert not out.degenerate
        assert np.all(out.pixels == out.pixels[0])
        assert out.masses[0] == 1.0
        assert np.array_equal(out.masses[1:], np.zeros(5))
        picks, masses, _ = greedy_sample_brute_force(values, 0.5, 6, 2.6)
        assert out.pixels.tolist() == [list(p) for p in picks]
        assert out.masses.tolist() == masses


class TestSamplerValidation:
    def test_requires_values(self):
        g = HeatmapGrid(H=4, W=4, resolution=0.5,
                        origin=np.zeros(2), orientation=0.0)
        with pytest.raises(DomainError):
            sample_endpoints(g, k=1, r=1.8)

    def test_requires_positive_k(self):
        with pytest.raises(DomainError):
            sample_endpoints(grid_with(np.ones((4, 4))), k=0, r=1.8)

    def test_rejects_negative_mass(self):
        values = np.ones((4, 4))
        values[2, 2] = -0.1
        with pytest.raises(DomainError):
            sample_endpoints(grid_with(values), k=1, r=1.8)

    def test_default_radii_table(self):
        assert SAMPLING_RADII["argoverse"] == 1.8
        assert SAMPLING_RADII["long_horizon"] == 2.6
        assert SAMPLING_RADII["low_noise"] == 1.4


class TestEnsemble:
    def make(self, rng, n=3):
        base = grid_with(rng.random((8, 8)))
        return [base] + [base.with_values(rng.random((8, 8))) for _ in range(n - 1)]

    def test_identical_inputs_any_weights_exact(self):
        values = np.random.default_rng(5).random((8, 8))
        grids = [grid_with(values) for _ in range(3)]
        out = ensemble_heatmaps(grids, weights=[0.3, 1.7, 0.01])
        assert np.array_equal(out.values, values)

    def test_weight_one_zero_returns_first_exactly(self):
        rng = np.random.default_rng(6)
        a, b = self.make(rng, n=2)
        out = ensemble_heatmaps([a, b], weights=[1.0, 0.0])
        assert np.array_equal(out.values, a.values)

    def test_equal_weights_average(self):
        a = grid_with(np.full((4, 4), 0.2))
        b = a.with_values(np.full((4, 4), 0.4))
        out = ensemble_heatmaps([a, b])
        assert np.allclose(out.values, 0.3)

    def test_associativity_of_weighted_means(self):
        rng = np.random.default_rng(7)
        a, b, c = self.make(rng, n=3)
        direct = ensemble_heatmaps([a, b, c], weights=[0.5, 0.25, 1.25])
        ab = ensemble_heatmaps([a, b], weights=[0.5, 0.25])
        nested = ensemble_heatmaps([ab, c], weights=[0.75, 1.25])
        assert np.allclose(direct.values, nested.values, atol=1e-12)

    def test_range_and_geometry_preserved(self):
        rng = np.random.default_rng(8)
        grids = self.make(rng, n=4)
        out = ensemble_heatmaps(grids, weights=[1, 2, 3, 4])
        assert out.values.min() >= 0.0 and out.values.max() <= 1.0
        assert out.same_geometry(grids[0])

    def test_mismatched_geometry_rejected(self):
        a = grid_with(np.ones((8, 8)))
        b = grid_with(np.ones((8, 8)), origin=(1.0, 0.0))
        with pytest.raises(GridAlignmentError):
            ensemble_heatmaps([a, b])
        c = grid_with(np.ones((4, 8)))
        with pytest.raises(GridAlignmentError):
            ensemble_heatmaps([a, c])

    def test_weight_validation(self):
        a = grid_with(np.ones((4, 4)))
        b = a.with_values(np.zeros((4, 4)))
        with pytest.raises(DomainError):
            ensemble_heatmaps([a, b], weights=[1.0, -0.5])
        with pytest.raises(DomainError):
            ensemble_heatmaps([a, b], weights=[0.0, 0.0])
        with pytest.raises(DomainError):
            ensemble_heatmaps([a, b], weights=[1.0])
        with pytest.raises(DomainError):
            ensemble_heatmaps([])

    def test_requires_values_on_every_input(self):
        a = grid_with(np.ones((4, 4)))
        bare = HeatmapGrid(H=4, W=4, resolution=0.5,
                           origin=np.zeros(2), orientation=0.0)
        with pytest.raises(DomainError):
            ensemble_heatmaps([a, bare])
