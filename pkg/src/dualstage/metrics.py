"""Evaluation metrics (MAE, RMSE, RSE, CORR) and the persistence yardstick.

CORR defaults to the published definition, which keeps a leading 1/n factor
and a single-sum denominator and therefore does not normalize to 1 on
identical series; ``corr_standard=True`` computes the conventional Pearson
form instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import SeriesDataset, make_windows
from .exceptions import ContractError


@dataclass
class MetricSet:
    mae: float
    rmse: float
    rse: float | None
    corr: float | None
    n: int
    flags: list[str] = field(default_factory=list)

    def to_dict(self):
        return {"mae": self.mae, "rmse": self.rmse, "rse": self.rse,
                "corr": self.corr, "n": self.n, "flags": self.flags}


def compute_metrics(truth, pred, corr_standard: bool = False) -> MetricSet:
    y = np.asarray(truth, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if y.shape != p.shape or y.ndim != 1:
        raise ContractError(f"metrics need equal-length series, got {y.shape} and {p.shape}")
    n = len(y)
    if n < 2:
        raise ContractError(f"metrics need at least 2 points, got {n}")
    err = y - p
    mae = float(np.abs(err).mean())
    rmse = float(np.sqrt((err ** 2).mean()))
    flags: list[str] = []

    ss_truth = float(((y - y.mean()) ** 2).sum())
    if ss_truth == 0.0:
        rse = None
        flags.append("rse_degenerate_constant_truth")
    else:
        rse = float(np.sqrt((err ** 2).sum() / ss_truth))

    a = y - y.mean()
    b = p - p.mean()
    if (a == 0).all() or (b == 0).all():
        corr = None
        flags.append("corr_degenerate_constant_series")
    elif corr_standard:
        corr = float((a @ b) / np.sqrt((a @ a) * (b @ b)))
    else:
        corr = float((1.0 / n) * (a @ b) / np.sqrt((a * a) @ (b * b)))
    return MetricSet(mae=mae, rmse=rmse, rse=rse, corr=corr, n=n, flags=flags)


def persistence_baseline(ds: SeriesDataset, split: str, horizon: int,
                         window: int = 96, corr_standard: bool = False) -> MetricSet:
    """Repeat each window's last observed target value as the forecast."""
    batch = make_windows(ds, split, window=window, horizon=horizon)
    pred = batch.inputs[:, -1, ds.target_index]
    return compute_metrics(batch.labels, pred, corr_standard=corr_standard)
