import numpy as np
import pytest

from dualstage import dataio
from dualstage.exceptions import ConfigurationError, DataError


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


class TestLoadCsv:
    def test_basic_parse(self, tmp_path):
        p = tmp_path / "d.csv"
        write_csv(p, ["a", "b", "y"], [[i, i * 2, i * 3] for i in range(10)])
        ds = dataio.load_csv(p, "y")
        assert ds.n_steps == 10
        assert ds.n_variables == 3
        assert ds.target_index == 2

    def test_unknown_target_names_columns(self, tmp_path):
        p = tmp_path / "d.csv"
        write_csv(p, ["a", "b", "y"], [[1, 2, 3]])
        with pytest.raises(DataError, match=r"'z'.*\['a', 'b', 'y'\]"):
            dataio.load_csv(p, "z")

    def test_unparseable_cell_cites_row(self, tmp_path):
        p = tmp_path / "d.csv"
        rows = [[1, 2, 3], [4, 5, 6], ["abc", 8, 9]]
        write_csv(p, ["a", "b", "y"], rows)
        with pytest.raises(DataError, match="row 4"):
            dataio.load_csv(p, "y")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            dataio.load_csv(tmp_path / "nope.csv", "y")


def make_ds(values, target=0, names=None):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    names = names or [f"v{i}" for i in range(values.shape[1])]
    return dataio.SeriesDataset(values=values, variable_names=names,
                                target_index=target)


class TestSplit:
    def test_n100_bounds(self):
        ds = dataio.split(make_ds(np.arange(100.0)), window=10, horizon=3)
        assert ds.split_bounds == (60, 80)

    def test_n101_floor(self):
        ds = dataio.split(make_ds(np.arange(101.0)), window=10, horizon=3)
        assert ds.split_bounds == (60, 80)

    def test_too_short_for_window(self):
        with pytest.raises(ConfigurationError):
            dataio.split(make_ds(np.arange(10.0)), window=96, horizon=3)


class TestNormalize:
    def _split_ds(self, col):
        ds = make_ds(col)
        return dataio.split(ds, window=1, horizon=0)

    def test_train_endpoints(self):
        train = [0.0, 5.0, 10.0]
        ds = make_ds(train + [2.0, 4.0])
        ds.split_bounds = (3, 4)
        out = dataio.normalize(ds)
        assert np.allclose(out.values[:3, 0], [0.0, 0.5, 1.0])

    def test_constant_column_flagged(self):
        ds = make_ds([[7.0, 1.0], [7.0, 2.0], [7.0, 3.0], [7.0, 4.0]])
        ds.split_bounds = (3, 4)
        out = dataio.normalize(ds)
        assert np.all(out.values[:, 0] == 0.0)
        assert out.constant_mask[0] and not out.constant_mask[1]

    def test_no_clamping_outside_train_range(self):
        ds = make_ds([0.0, 5.0, 10.0, 12.0])
        ds.split_bounds = (3, 4)
        out = dataio.normalize(ds)
        assert out.values[3, 0] == pytest.approx(1.2, abs=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        ds = make_ds(rng.uniform(-5, 5, size=(50, 1)))
        ds.split_bounds = (30, 40)
        out = dataio.normalize(ds)
        back = out.denormalize_target(out.values[:, 0])
        assert np.max(np.abs(back - ds.values[:, 0])) <= 1e-12

    def test_global_scope(self):
        ds = make_ds([0.0, 5.0, 10.0, 20.0])
        ds.split_bounds = (3, 4)
        out = dataio.normalize(ds, scope="global")
        assert out.values[3, 0] == pytest.approx(1.0)


class TestMakeWindows:
    def _ds(self, n, horizon, window=96):
        values = np.arange(float(n))
        ds = make_ds(values)
        ds.split_bounds = (n, n)  # single all-train split for counting tests
        return ds

    def test_count_100(self):
        wb = dataio.make_windows(self._ds(100, 3), "train", window=96, horizon=3)
        assert len(wb) == 2

    def test_count_99(self):
        wb = dataio.make_windows(self._ds(99, 3), "train", window=96, horizon=3)
        assert len(wb) == 1

    def test_boundary_horizon_24(self):
        wb = dataio.make_windows(self._ds(96 + 24, 24), "train", window=96, horizon=24)
        assert len(wb) == 1

    def test_label_alignment(self):
        wb = dataio.make_windows(self._ds(100, 3), "train", window=96, horizon=3)
        # example i uses rows [i, i+96) and labels row i+96+3-1
        assert wb.labels[0] == 98.0
        assert wb.labels[1] == 99.0

    @pytest.mark.parametrize("n,window,horizon", [(300, 50, 3), (500, 80, 12), (1000, 96, 24)])
    def test_no_cross_split_leakage(self, n, window, horizon):
        ds = dataio.split(make_ds(np.arange(float(n))), window=window, horizon=horizon)
        for split_name in dataio.SPLITS:
            lo, hi = ds.split_range(split_name)
            wb = dataio.make_windows(ds, split_name, window=window, horizon=horizon)
            assert len(wb) == dataio.window_count(hi - lo, window, horizon)
            label_rows = wb.starts + window + horizon - 1
            assert label_rows.min() >= lo and label_rows.max() <= hi - 1
            assert wb.starts.min() >= lo
