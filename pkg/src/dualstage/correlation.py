"""Spearman rank correlation between covariates and the target, with
threshold-based variable selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import SeriesDataset
from .exceptions import ContractError

DEFAULT_THRESHOLD = 0.5


@dataclass
class SpearmanResult:
    rho: float
    degenerate: bool = False


@dataclass
class CorrelationReport:
    coefficients: dict[str, SpearmanResult]
    threshold: float
    selected: list[str] = field(default_factory=list)

    def to_rows(self):
        order = sorted(self.coefficients,
                       key=lambda name: -abs(self.coefficients[name].rho))
        return [
            {
                "variable": name,
                "rho": self.coefficients[name].rho,
                "degenerate": self.coefficients[name].degenerate,
                "selected": name in self.selected,
            }
            for name in order
        ]


def ranks(x: np.ndarray) -> np.ndarray:
    """1-based positions by size; ties get the mean of the positions they cover."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise ContractError(f"ranks requires at least 2 values, got {n}")
    order = np.argsort(x, kind="stable")
    out = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and x[order[j + 1]] == x[order[i]]:
            j += 1
        out[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return out


def spearman(x: np.ndarray, y: np.ndarray) -> SpearmanResult:
    """Pearson correlation of the two rank vectors.

    A constant input carries no rank information, so the result is flagged
    degenerate with rho 0 instead of raising.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ContractError(f"length mismatch: {x.shape} vs {y.shape}")
    rx = ranks(x)
    ry = ranks(y)
    ax = rx - rx.mean()
    ay = ry - ry.mean()
    den = np.sqrt((ax @ ax) * (ay @ ay))
    if den == 0.0:
        return SpearmanResult(rho=0.0, degenerate=True)
    return SpearmanResult(rho=float((ax @ ay) / den))


def filter_variables(ds: SeriesDataset,
                     threshold: float = DEFAULT_THRESHOLD) -> CorrelationReport:
    """Correlate every extraneous variable with the target on the training
    split and keep those with |rho| >= threshold, strongest first."""
    start, end = ds.split_range("train")
    target = ds.values[start:end, ds.target_index]
    coefficients: dict[str, SpearmanResult] = {}
    for idx, name in enumerate(ds.variable_names):
        if idx == ds.target_index:
            continue
        if ds.constant_mask is not None and ds.constant_mask[idx]:
            coefficients[name] = SpearmanResult(rho=0.0, degenerate=True)
            continue
        coefficients[name] = spearman(ds.values[start:end, idx], target)
    eligible = [
        (name, res) for name, res in coefficients.items()
        if not res.degenerate and abs(res.rho) >= threshold
    ]
    # |rho| descending; dict order preserves original column order for ties
    eligible.sort(key=lambda item: -abs(item[1].rho))
    return CorrelationReport(coefficients=coefficients, threshold=threshold,
                             selected=[name for name, _ in eligible])
