"""CSV loading, min-max normalization, chronological splits, and windowing."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ConfigurationError, DataError

DEFAULT_WINDOW = 96
SPLIT_RATIOS = (0.6, 0.2, 0.2)
SPLITS = ("train", "valid", "test")


@dataclass
class SeriesDataset:
    """Multivariate table, one row per time step, one column per variable."""

    values: np.ndarray                 # N x M, raw or normalized
    variable_names: list[str]
    target_index: int
    norm_min: np.ndarray | None = None     # per-variable, train-split stats
    norm_max: np.ndarray | None = None
    constant_mask: np.ndarray | None = None
    split_bounds: tuple[int, int] | None = None   # (train_end, valid_end)
    normalized: bool = False

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_variables(self) -> int:
        return self.values.shape[1]

    @property
    def target_name(self) -> str:
        return self.variable_names[self.target_index]

    def split_range(self, split: str) -> tuple[int, int]:
        if self.split_bounds is None:
            raise ConfigurationError("dataset has not been split")
        train_end, valid_end = self.split_bounds
        if split == "train":
            return 0, train_end
        if split == "valid":
            return train_end, valid_end
        if split == "test":
            return valid_end, self.n_steps
        raise ConfigurationError(f"unknown split {split!r}; expected one of {SPLITS}")

    def denormalize_target(self, values: np.ndarray) -> np.ndarray:
        if not self.normalized:
            return np.asarray(values, dtype=np.float64)
        lo = self.norm_min[self.target_index]
        hi = self.norm_max[self.target_index]
        return np.asarray(values, dtype=np.float64) * (hi - lo) + lo


@dataclass
class WindowBatch:
    """Input windows with their single-point labels at ``window + horizon - 1``."""

    inputs: np.ndarray     # batch x window x M
    labels: np.ndarray     # batch
    starts: np.ndarray     # absolute row index of each window's first step
    horizon: int
    window: int = field(default=DEFAULT_WINDOW)

    def __len__(self) -> int:
        return len(self.labels)


def load_csv(path, target_name: str) -> SeriesDataset:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        if target_name not in header:
            raise DataError(
                f"target {target_name!r} not found; available columns: {header}"
            )
        rows = []
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {row_number} has {len(row)} cells, expected {len(header)}"
                )
            parsed = []
            for col_idx, cell in enumerate(row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: cannot parse cell {cell!r} at row {row_number}, "
                        f"column {header[col_idx]!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path} has a header but no data rows")
    return SeriesDataset(
        values=np.asarray(rows, dtype=np.float64),
        variable_names=header,
        target_index=header.index(target_name),
    )


def split(ds: SeriesDataset, ratios=SPLIT_RATIOS,
          window: int = DEFAULT_WINDOW, horizon: int = 1) -> SeriesDataset:
    """Chronological 60/20/20 split; bounds are floor(cum_ratio * N)."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"split ratios must sum to 1, got {ratios}")
    n = ds.n_steps
    train_end = int(np.floor(ratios[0] * n))
    valid_end = int(np.floor((ratios[0] + ratios[1]) * n))
    for name, lo, hi in (("train", 0, train_end), ("valid", train_end, valid_end),
                         ("test", valid_end, n)):
        if hi - lo < window + horizon:
            raise ConfigurationError(
                f"{name} split has {hi - lo} rows; needs at least "
                f"window + horizon = {window + horizon}"
            )
    return replace(ds, split_bounds=(train_end, valid_end))


def normalize(ds: SeriesDataset, scope: str = "train") -> SeriesDataset:
    """Min-max scale every variable.

    Statistics come from the training split by default; scope="global" uses
    the whole series instead. Constant variables map to all-zeros and are
    flagged so the covariate filter can skip them. Values outside the stats
    range are not clamped.
    """
    if ds.normalized:
        raise ConfigurationError("dataset is already normalized")
    if scope == "train":
        if ds.split_bounds is None:
            raise ConfigurationError("split the dataset before train-scope normalization")
        train_end = ds.split_bounds[0]
        if train_end == 0:
            raise ConfigurationError("training split is empty")
        stats_rows = ds.values[:train_end]
    elif scope == "global":
        stats_rows = ds.values
    else:
        raise ConfigurationError(f"unknown normalization scope {scope!r}")
    lo = stats_rows.min(axis=0)
    hi = stats_rows.max(axis=0)
    constant = hi == lo
    span = np.where(constant, 1.0, hi - lo)
    values = (ds.values - lo) / span
    values[:, constant] = 0.0
    return replace(ds, values=values, norm_min=lo, norm_max=hi,
                   constant_mask=constant, normalized=True)


def window_count(split_len: int, window: int, horizon: int) -> int:
    return split_len - window - horizon + 1


def make_windows(ds: SeriesDataset, split_name: str,
                 window: int = DEFAULT_WINDOW, horizon: int = 1) -> WindowBatch:
    """Stride-1 sliding windows whose inputs and labels stay inside the split."""
    start, end = ds.split_range(split_name)
    count = window_count(end - start, window, horizon)
    if count < 1:
        raise ConfigurationError(
            f"{split_name} split of length {end - start} cannot hold a "
            f"window of {window} plus horizon {horizon}"
        )
    starts = np.arange(start, start + count)
    inputs = np.stack([ds.values[s:s + window] for s in starts])
    labels = ds.values[starts + window + horizon - 1, ds.target_index]
    return WindowBatch(inputs=inputs, labels=labels, starts=starts,
                       horizon=horizon, window=window)
