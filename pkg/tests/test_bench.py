"""Scaling benchmark: sweep structure, CSV round trip, plot from CSV alone."""

import pytest

from gohome.bench import (
    BenchPoint,
    plot_bench_csv,
    read_bench_csv,
    run_bench,
    write_bench_csv,
)
from gohome.exceptions import ConfigError, SceneParseError


@pytest.fixture(scope="module")
def points():
    return run_bench(ranges=(48.0, 96.0), pixels_per_meter=(2.0,),
                     num_scenes=1, channels=8, top_k=4, seed=1)


class TestSweep:
    def test_point_per_configuration(self, points):
        assert len(points) == 3
        assert [p.sweep for p in points] == [
            "output_range", "output_range", "pixels_per_meter",
        ]

    def test_grid_pixels_match_geometry(self, points):
        by_range = {p.output_range: p for p in points if p.sweep == "output_range"}
        assert by_range[48.0].grid_pixels == 96 * 96
        assert by_range[96.0].grid_pixels == 192 * 192

    def test_dense_model_is_pixels_times_channels_squared(self, points):
        for p in points:
            assert p.dense_flops == p.grid_pixels * 8**2

    def test_sparse_decode_grows_slower_than_dense(self, points):
        small, big = (p for p in points if p.sweep == "output_range")
        assert big.decode_macs > 0
        assert big.decode_macs / small.decode_macs < big.dense_flops / small.dense_flops

    def test_wall_clock_recorded(self, points):
        assert all(p.seconds > 0 for p in points)

    def test_rejects_empty_sweeps(self):
        with pytest.raises(ConfigError):
            run_bench(ranges=(), num_scenes=1)
        with pytest.raises(ConfigError):
            run_bench(num_scenes=0)


class TestCsv:
    def test_round_trip(self, points, tmp_path):
        path = tmp_path / "bench.csv"
        write_bench_csv(points, path)
        assert read_bench_csv(path) == list(points)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bench.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(SceneParseError, match="header"):
            read_bench_csv(path)

    def test_short_row_rejected(self, points, tmp_path):
        path = tmp_path / "bench.csv"
        write_bench_csv(points, path)
        path.write_text(path.read_text() + "output_range,96\n")
        with pytest.raises(SceneParseError, match="row"):
            read_bench_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(SceneParseError):
            read_bench_csv(tmp_path / "absent.csv")


class TestPlot:
    def test_plot_is_a_function_of_the_csv(self, points, tmp_path):
        """The plot regenerates from the CSV with no sweep objects around."""
        csv_path = tmp_path / "bench.csv"
        write_bench_csv(points, csv_path)
        img = tmp_path / "bench.png"
        plot_bench_csv(csv_path, img)
        assert img.stat().st_size > 0

    def test_plot_from_handwritten_csv(self, tmp_path):
        rows = [
            BenchPoint("output_range", 96.0, 2.0, 36864, 1e6, 1.5e8, 0.01),
            BenchPoint("output_range", 192.0, 2.0, 147456, 1.1e6, 6e8, 0.02),
            BenchPoint("pixels_per_meter", 192.0, 1.0, 36864, 4e5, 1.5e8, 0.01),
        ]
        csv_path = tmp_path / "hand.csv"
        write_bench_csv(rows, csv_path)
        img = tmp_path / "hand.png"
        plot_bench_csv(csv_path, img)
        assert img.stat().st_size > 0
