import numpy as np
import pytest

import epsmooth.bench as bench_mod
from epsmooth import BenchRow, read_csv, replicate_seed, run_bench, write_csv
from epsmooth.grid import ImageGrid, NoiseSpec, add_noise


class TestReplicateSeeds:
    def test_deterministic(self):
        assert replicate_seed(1, 64, 10.0, 3) == replicate_seed(1, 64, 10.0, 3)

    def test_distinct_across_replicates(self):
        seeds = {replicate_seed(0, 64, 20.0, rep) for rep in range(1, 64)}
        assert len(seeds) == 63

    def test_distinct_across_cells(self):
        a = replicate_seed(0, 64, 10.0, 1)
        b = replicate_seed(0, 128, 10.0, 1)
        c = replicate_seed(0, 64, 20.0, 1)
        d = replicate_seed(1, 64, 10.0, 1)
        assert len({a, b, c, d}) == 4

    def test_noise_streams_differ(self):
        img = ImageGrid.full(16, 16, 0.0)
        a = add_noise(img, NoiseSpec(10.0, replicate_seed(0, 16, 10.0, 1)))
        b = add_noise(img, NoiseSpec(10.0, replicate_seed(0, 16, 10.0, 2)))
        assert not np.array_equal(a.data, b.data)


class TestRunBench:
    def test_zero_noise_constant_scene(self):
        rows = run_bench("constant(100)", [32], [0.0], 1, ["box3"], base_seed=5)
        assert len(rows) == 1
        assert rows[0].mean_rmse <= 1e-9
        assert rows[0].sd_rmse == 0.0

    def test_row_structure(self):
        rows = run_bench("constant(120)", [32], [0.0, 5.0], 2, ["box3", "kernel-only"])
        assert len(rows) == 4
        cells = {(r.n, r.sd, r.method) for r in rows}
        assert cells == {
            (32, 0.0, "box3"),
            (32, 0.0, "kernel-only"),
            (32, 5.0, "box3"),
            (32, 5.0, "kernel-only"),
        }
        assert all(r.replicates == 2 for r in rows)

    def test_identical_seeds_give_zero_spread(self, monkeypatch):
        monkeypatch.setattr(bench_mod, "replicate_seed", lambda *a: 42)
        rows = run_bench("constant(100)", [32], [5.0], 2, ["box3"])
        assert rows[0].sd_rmse == 0.0

    def test_monotone_in_sd_for_box3(self):
        rows = run_bench("square-circle", [32], [2.0, 20.0], 2, ["box3"], base_seed=1)
        by_sd = {r.sd: r.mean_rmse for r in rows}
        assert by_sd[2.0] < by_sd[20.0]

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            run_bench("square-circle", [32], [5.0], 0, ["box3"])
        with pytest.raises(ValueError):
            run_bench("square-circle", [32], [5.0], 1, ["sharpen"])


class TestCsv:
    def rows(self):
        return [
            BenchRow("square-circle", 64, 10.0, "integrated", 3, 5.125, 0.25, 1.5),
            BenchRow("square-circle", 64, 5.0, "integrated", 3, 3.2, 0.125, 1.25),
            BenchRow("constant(100)", 32, 5.0, "box3", 3, 1.0, 0.5, 0.0625),
        ]

    def test_empty_rows_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        write_csv([], path)
        assert path.read_text() == "scene,n,sd,method,L,mean_rmse,sd_rmse,seconds\n"

    def test_single_row_two_lines(self, tmp_path):
        path = tmp_path / "one.csv"
        write_csv(self.rows()[:1], path)
        assert len(path.read_text().splitlines()) == 2

    def test_sorted_output_and_round_trip(self, tmp_path):
        path = tmp_path / "rows.csv"
        write_csv(self.rows(), path)
        back = read_csv(path)
        keys = [(r.scene, r.n, r.sd, r.method) for r in back]
        assert keys == sorted(keys)
        by_key = {(r.scene, r.n, r.sd, r.method): r for r in back}
        for orig in self.rows():
            got = by_key[(orig.scene, orig.n, orig.sd, orig.method)]
            assert got.replicates == orig.replicates
            assert got.mean_rmse == pytest.approx(orig.mean_rmse, abs=5e-5)
            assert got.sd_rmse == pytest.approx(orig.sd_rmse, abs=5e-5)
            assert got.seconds == pytest.approx(orig.seconds, abs=5e-5)

    def test_four_decimal_formatting(self, tmp_path):
        path = tmp_path / "fmt.csv"
        write_csv(self.rows()[:1], path)
        line = path.read_text().splitlines()[1]
        assert line == "square-circle,64,10.0000,integrated,3,5.1250,0.2500,1.5000"

    def test_reject_foreign_header(self, tmp_path):
        path = tmp_path / "foreign.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            read_csv(path)
