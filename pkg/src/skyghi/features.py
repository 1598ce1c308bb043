"""Per-cluster pixel counts (PCNP) and column standardization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import SENTINEL, SegmentedImage
from .errors import EmptyMatrix, LengthMismatch


def extract_pcnp(segmented: SegmentedImage) -> np.ndarray:
    """Length-k vector of visible-pixel counts per cluster label."""
    labels = segmented.labels.reshape(-1)
    labels = labels[labels != SENTINEL]
    return np.bincount(labels, minlength=segmented.k).astype(np.int64)


def pcnp_matrix(segmented_images) -> np.ndarray:
    return np.stack([extract_pcnp(s) for s in segmented_images])


@dataclass(eq=False)
class StandardScaler:
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.stds = np.asarray(self.stds, dtype=np.float64)

    @property
    def k(self) -> int:
        return len(self.means)

    def transform(self, x) -> np.ndarray:
        return transform(self, x)


def fit_scaler(matrix) -> StandardScaler:
    """Column means and population (divide-by-n) standard deviations."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.shape[0] == 0:
        raise EmptyMatrix("cannot fit a scaler on zero rows")
    means = m.mean(axis=0)
    stds = np.sqrt(((m - means) ** 2).mean(axis=0))
    return StandardScaler(means, stds)


def transform(scaler: StandardScaler, x) -> np.ndarray:
    """Standardize a row or a matrix; zero-spread columns map to 0."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != scaler.k:
        raise LengthMismatch(f"expected {scaler.k} columns, got {arr.shape[-1]}")
    live = scaler.stds > 0
    safe = np.where(live, scaler.stds, 1.0)
    return np.where(live, (arr - scaler.means) / safe, 0.0)
