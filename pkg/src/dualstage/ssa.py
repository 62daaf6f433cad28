"""Singular-spectrum decomposition of a target window, plus the
moving-average comparator used for trend/seasonal contrast runs.

Pipeline: Hankel embedding, eigendecomposition of the trajectory Gram
matrix, component grouping into trend / seasonal / noise, and anti-diagonal
averaging back to series of the original length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError

RANK_TOLERANCE_FACTOR = 1e-10


@dataclass
class EigenSystem:
    eigenvalues: np.ndarray       # sorted non-increasing, clamped at 0
    eigenvectors: np.ndarray      # m x m, columns orthonormal
    factor_vectors: np.ndarray    # l x d
    rank: int
    trajectory: np.ndarray        # the embedded m x l matrix

    def elementary_matrix(self, i: int) -> np.ndarray:
        d_i = self.eigenvectors[:, i]
        e_i = self.factor_vectors[:, i]
        return np.sqrt(self.eigenvalues[i]) * np.outer(d_i, e_i)


@dataclass
class GroupPolicy:
    """Energy + frequency heuristic for assigning components.

    Components are scanned from the largest eigenvalue down. Low-frequency
    components (fewer than ``trend_crossings`` mean crossings per step) are
    taken as trend until they hold ``trend_energy`` of the total energy.
    Remaining components become seasonal when they are both non-negligible
    (at least ``noise_floor`` of the top eigenvalue) and spectrally
    concentrated (dominant periodogram bin holds at least
    ``seasonal_purity`` of the component's power); everything else is noise.
    """

    trend_energy: float = 0.90
    trend_crossings: float = 2.0      # per window, scaled by 1/t
    noise_floor: float = 1e-4
    seasonal_purity: float = 0.80


@dataclass
class SsaDecomposition:
    trend: np.ndarray
    seasonal: np.ndarray
    noise: np.ndarray
    group_assignment: dict[int, str]
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def groups(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {"trend": [], "seasonal": [], "noise": []}
        for idx, name in sorted(self.group_assignment.items()):
            out[name].append(idx)
        return out


def embed(window: np.ndarray, m: int) -> np.ndarray:
    """Hankel trajectory matrix: row i is window[i : i + l]."""
    window = np.asarray(window, dtype=np.float64)
    t = len(window)
    if not 1 < m < t:
        raise ConfigurationError(f"embedding count m={m} must satisfy 1 < m < {t}")
    l = t - m + 1
    return np.stack([window[i:i + l] for i in range(m)])


def decompose_svd(trajectory: np.ndarray,
                  rank_tolerance_factor: float = RANK_TOLERANCE_FACTOR) -> EigenSystem:
    """Symmetric eigendecomposition of S = X X^T, eigenvalues descending."""
    x = np.asarray(trajectory, dtype=np.float64)
    s = x @ x.T
    eigenvalues, eigenvectors = np.linalg.eigh(s)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]
    tol = rank_tolerance_factor * eigenvalues[0] if eigenvalues[0] > 0 else 0.0
    rank = int(np.count_nonzero(eigenvalues > tol))
    rank = max(rank, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        factors = x.T @ eigenvectors[:, :rank]
        factors = np.where(eigenvalues[:rank] > 0,
                           factors / np.sqrt(np.maximum(eigenvalues[:rank], 1e-300)),
                           0.0)
    return EigenSystem(eigenvalues=eigenvalues, eigenvectors=eigenvectors,
                       factor_vectors=factors, rank=rank, trajectory=x)


def reconstruct(matrix: np.ndarray) -> np.ndarray:
    """Anti-diagonal averaging of an m x l matrix into a length m+l-1 series."""
    matrix = np.asarray(matrix, dtype=np.float64)
    m, l = matrix.shape
    t = m + l - 1
    sums = np.zeros(t)
    counts = np.zeros(t)
    for i in range(m):
        sums[i:i + l] += matrix[i]
        counts[i:i + l] += 1.0
    return sums / counts


def _mean_crossings(series: np.ndarray) -> int:
    centered = series - series.mean()
    signs = np.sign(centered)
    signs = signs[signs != 0]
    if len(signs) < 2:
        return 0
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def _spectral_purity(series: np.ndarray) -> float:
    centered = series - series.mean()
    power = np.abs(np.fft.rfft(centered))[1:] ** 2
    total = power.sum()
    if total <= 0:
        return 0.0
    return float(power.max() / total)


def group(es: EigenSystem, policy: GroupPolicy | None = None) -> dict[int, str]:
    """Partition component indices {0..d-1} into trend/seasonal/noise."""
    policy = policy or GroupPolicy()
    d = es.rank
    t = es.trajectory.shape[0] + es.trajectory.shape[1] - 1
    total_energy = float(es.eigenvalues[:d].sum())
    assignment: dict[int, str] = {}
    trend_cum = 0.0
    trend_open = True
    for i in range(d):
        series = reconstruct(es.elementary_matrix(i))
        crossings = _mean_crossings(series)
        low_frequency = crossings < policy.trend_crossings
        if trend_open and low_frequency and trend_cum < policy.trend_energy * total_energy:
            assignment[i] = "trend"
            trend_cum += float(es.eigenvalues[i])
            continue
        if not low_frequency:
            trend_open = False
        negligible = es.eigenvalues[i] < policy.noise_floor * es.eigenvalues[0]
        if not negligible and _spectral_purity(series) >= policy.seasonal_purity:
            assignment[i] = "seasonal"
        else:
            assignment[i] = "noise"
    if d == 1:
        assignment[0] = "trend"
    return assignment


def ssa_pipeline(window: np.ndarray, m: int | None = None,
                 policy: GroupPolicy | None = None) -> SsaDecomposition:
    """Full decomposition of one window into trend + seasonal + noise."""
    window = np.asarray(window, dtype=np.float64)
    t = len(window)
    if m is None:
        m = max(2, t // 2)
    trajectory = embed(window, m)
    es = decompose_svd(trajectory)
    assignment = group(es, policy)
    parts = {"trend": np.zeros(t), "seasonal": np.zeros(t), "noise": np.zeros(t)}
    for i, name in assignment.items():
        parts[name] += reconstruct(es.elementary_matrix(i))
    # the discarded sub-tolerance tail stays in the noise series so that the
    # three components always sum back to the window
    residual = window - (parts["trend"] + parts["seasonal"] + parts["noise"])
    parts["noise"] += residual
    return SsaDecomposition(trend=parts["trend"], seasonal=parts["seasonal"],
                            noise=parts["noise"], group_assignment=assignment,
                            eigenvalues=es.eigenvalues)


def stl_decompose(window: np.ndarray, kernel: int = 25) -> tuple[np.ndarray, np.ndarray]:
    """Moving-average trend with edge replication; seasonal is the remainder."""
    if kernel < 3 or kernel % 2 == 0:
        raise ConfigurationError(f"moving-average kernel must be odd and >= 3, got {kernel}")
    window = np.asarray(window, dtype=np.float64)
    half = kernel // 2
    padded = np.concatenate([np.full(half, window[0]), window, np.full(half, window[-1])])
    kernel_weights = np.full(kernel, 1.0 / kernel)
    trend = np.convolve(padded, kernel_weights, mode="valid")
    return trend, window - trend
