import numpy as np
import pytest

from dualstage import dataio, metrics
from dualstage.exceptions import ContractError

from oracles import metrics_bruteforce


class TestComputeMetrics:
    def test_zero_error_case(self):
        y = np.array([1.0, 2.0, 4.0, 3.0])
        out = metrics.compute_metrics(y, y.copy())
        assert out.mae == 0.0 and out.rmse == 0.0 and out.rse == 0.0
        # the published CORR form does not normalize to 1 on identical series
        _, _, _, corr_oracle = metrics_bruteforce(y, y)
        assert out.corr == pytest.approx(corr_oracle, abs=1e-12)

    def test_hand_arithmetic(self):
        out = metrics.compute_metrics([0.0, 1.0], [1.0, 0.0])
        assert out.mae == 1.0 and out.rmse == 1.0

    def test_oracle_agreement(self):
        for trial in range(100):
            rng = np.random.default_rng(trial)
            n = int(rng.integers(2, 40))
            y = rng.normal(size=n)
            p = rng.normal(size=n)
            out = metrics.compute_metrics(y, p)
            mae, rmse, rse, corr = metrics_bruteforce(y, p)
            assert out.mae == pytest.approx(mae, abs=1e-12)
            assert out.rmse == pytest.approx(rmse, abs=1e-12)
            assert out.rse == pytest.approx(rse, abs=1e-12)
            assert out.corr == pytest.approx(corr, abs=1e-12)
            assert out.rmse >= out.mae

    def test_corr_standard_flag(self):
        rng = np.random.default_rng(9)
        y = rng.normal(size=50)
        out = metrics.compute_metrics(y, y.copy(), corr_standard=True)
        assert out.corr == pytest.approx(1.0, abs=1e-12)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(1)
        y = rng.normal(size=30)
        p = rng.normal(size=30)
        base = metrics.compute_metrics(y, p)
        scaled = metrics.compute_metrics(3.5 * y, 3.5 * p)
        assert scaled.mae == pytest.approx(3.5 * base.mae, rel=1e-12)
        assert scaled.rmse == pytest.approx(3.5 * base.rmse, rel=1e-12)
        assert scaled.rse == pytest.approx(base.rse, abs=1e-12)

    def test_shift_invariance_rse_corr(self):
        rng = np.random.default_rng(2)
        y = rng.normal(size=30)
        p = rng.normal(size=30)
        base = metrics.compute_metrics(y, p)
        shifted = metrics.compute_metrics(y + 11.0, p + 11.0)
        assert shifted.rse == pytest.approx(base.rse, abs=1e-12)
        assert shifted.corr == pytest.approx(base.corr, abs=1e-12)

    def test_constant_truth_flags(self):
        out = metrics.compute_metrics([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
        assert out.rse is None and out.corr is None
        assert "rse_degenerate_constant_truth" in out.flags
        assert "corr_degenerate_constant_series" in out.flags

    def test_too_short(self):
        with pytest.raises(ContractError):
            metrics.compute_metrics([1.0], [1.0])


def make_target_ds(values):
    values = np.asarray(values, dtype=np.float64)[:, None]
    ds = dataio.SeriesDataset(values=values, variable_names=["y"], target_index=0)
    ds.split_bounds = (len(values), len(values))
    return ds


class TestPersistenceBaseline:
    def test_constant_series_exact(self):
        ds = make_target_ds(np.full(60, 3.0))
        out = metrics.persistence_baseline(ds, "train", horizon=3, window=10)
        assert out.mae == 0.0

    def test_linear_ramp_closed_form(self):
        slope = 0.25
        ds = make_target_ds(slope * np.arange(100.0))
        out = metrics.persistence_baseline(ds, "train", horizon=4, window=10)
        assert out.mae == pytest.approx(slope * 4, abs=1e-12)

    def test_smoke_finite(self):
        rng = np.random.default_rng(5)
        ds = make_target_ds(rng.normal(size=200))
        out = metrics.persistence_baseline(ds, "train", horizon=6, window=24)
        assert np.isfinite(out.mae) and np.isfinite(out.rmse)
