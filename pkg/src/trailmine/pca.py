"""Principal component analysis for visualization coordinates and loadings.

Covariance-based PCA on mean-centered raw features (stationary vectors
share one scale, so no per-feature standardization). Component signs are
normalized so the largest-magnitude coefficient of each component is
positive, keeping reports stable across runs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DimensionMismatch",
    "RankDeficientWarning",
    "PcaModel",
    "pca_fit",
    "pca_project",
    "pca_reconstruct",
    "loading_extremes",
]


class DimensionMismatch(ValueError):
    """Input columns do not match the fitted feature dimension."""


class RankDeficientWarning(UserWarning):
    """Requested more components than the data rank supports."""


@dataclass(slots=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray              # r x n, orthonormal rows
    explained_variance_ratio: np.ndarray
    cumulative_ratio: np.ndarray

    @property
    def r(self) -> int:
        return self.components.shape[0]

    @property
    def n(self) -> int:
        return self.components.shape[1]


def pca_fit(X: np.ndarray, r: int = 3) -> PcaModel:
    """Top-r principal axes of X by explained variance.

    Implemented via SVD of the centered matrix (the covariance
    eigenvectors, computed stably). If ``r`` exceeds the numerical rank
    of the data, it is truncated with a :class:`RankDeficientWarning`.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least 2 rows to fit")
    m, n = X.shape
    if not 1 <= r <= min(m, n):
        raise ValueError(f"r={r} not in [1, {min(m, n)}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    U, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    eigvals = (s * s) / (m - 1)
    total = eigvals.sum()
    rank = int((s > s[0] * max(m, n) * np.finfo(np.float64).eps).sum()) if s.size else 0
    if r > rank:
        r_eff = max(rank, 1)
        warnings.warn(
            f"requested {r} components but data rank is {rank}; truncating to {r_eff}",
            RankDeficientWarning,
            stacklevel=2,
        )
        r = r_eff
    components = Vt[:r].copy()
    # sign convention: largest-magnitude coefficient positive
    for row in components:
        j = int(np.abs(row).argmax())
        if row[j] < 0:
            row *= -1.0
    ratios = eigvals[:r] / total if total > 0 else np.zeros(r)
    return PcaModel(
        mean=mean,
        components=components,
        explained_variance_ratio=ratios,
        cumulative_ratio=np.cumsum(ratios),
    )


def pca_project(model: PcaModel, X: np.ndarray) -> np.ndarray:
    """Coordinates of X in the component basis: (X - mean) @ components^T."""
    X = np.asarray(X, dtype=np.float64)
    cols = X.shape[-1]
    if cols != model.n:
        raise DimensionMismatch(f"expected {model.n} columns, got {cols}")
    return (X - model.mean) @ model.components.T


def pca_reconstruct(model: PcaModel, coords: np.ndarray) -> np.ndarray:
    """Map coordinates back to feature space (exact when r equals the rank)."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape[-1] != model.r:
        raise DimensionMismatch(f"expected {model.r} coordinate columns")
    return coords @ model.components + model.mean


def loading_extremes(model: PcaModel, names: list[str]) -> list[dict]:
    """Per component, the labels with the largest and smallest coefficients.

    These are the axis annotations of the cluster-landscape plots.
    """
    if len(names) != model.n:
        raise DimensionMismatch("one name per feature dimension required")
    out = []
    for i, row in enumerate(model.components):
        hi = int(row.argmax())
        lo = int(row.argmin())
        out.append(
            {
                "component": i + 1,
                "largest": names[hi],
                "largest_coefficient": float(row[hi]),
                "smallest": names[lo],
                "smallest_coefficient": float(row[lo]),
            }
        )
    return out
