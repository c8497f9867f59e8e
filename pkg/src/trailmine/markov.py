"""First-order Markov chains over action traces.

Transition counts are smoothed by adding ``alpha / n`` to every cell of
the count matrix before row normalization, which connects each state to
all others (including a self loop) with a small teleport probability.
Any positive ``alpha`` therefore makes the chain irreducible and
aperiodic, so a unique stationary distribution exists. The stationary
vector, not the order-blind page-view vector, is the per-user behavior
feature: two traces with identical page views but different ordering get
different stationary vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "LabelOutOfRange",
    "ZeroRowWithoutTeleport",
    "NoConvergence",
    "TransitionCounts",
    "TransitionModel",
    "StationaryDistribution",
    "PageViewVector",
    "FeatureMatrix",
    "count_transitions",
    "build_transition_model",
    "stationary_distribution",
    "page_view_vector",
    "build_feature_matrix",
    "DEFAULT_ALPHA",
]

DEFAULT_ALPHA = 0.15
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000


class LabelOutOfRange(ValueError):
    """Trace contains a label outside [0, n)."""


class ZeroRowWithoutTeleport(ValueError):
    """alpha = 0 cannot normalize a row with no observed transitions."""


class NoConvergence(RuntimeError):
    """Power iteration did not reach the tolerance within the budget."""

    def __init__(self, max_iter: int, residual: float):
        super().__init__(
            f"no convergence after {max_iter} iterations (residual {residual:.3e}); "
            "the chain is (near-)periodic for this alpha/tol budget"
        )
        self.max_iter = max_iter
        self.residual = residual


@dataclass(slots=True)
class TransitionCounts:
    """n x n matrix of observed i -> j transition counts."""

    n: int
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (self.n, self.n):
            raise ValueError(f"counts must be {self.n}x{self.n}")
        if (self.counts < 0).any():
            raise ValueError("counts must be non-negative")

    def __add__(self, other: "TransitionCounts") -> "TransitionCounts":
        if other.n != self.n:
            raise ValueError("cannot add counts over different state spaces")
        return TransitionCounts(self.n, self.counts + other.counts)


@dataclass(slots=True)
class TransitionModel:
    """Row-stochastic transition matrix with teleport weight alpha."""

    n: int
    alpha: float
    P: np.ndarray


@dataclass(slots=True)
class StationaryDistribution:
    """Probability vector pi with pi^T = pi^T P (within solver tolerance)."""

    pi: np.ndarray
    method: str = "power"
    iterations: int = 0
    residual: float = 0.0


@dataclass(slots=True)
class PageViewVector:
    """Order-blind occurrence counts of each label in a trace."""

    views: np.ndarray


def _as_label_array(trace: Sequence[int] | np.ndarray, n: int) -> np.ndarray:
    arr = np.asarray(trace, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("trace must be one-dimensional")
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        raise LabelOutOfRange(f"trace labels must lie in [0, {n})")
    return arr


def count_transitions(trace: Sequence[int] | np.ndarray, n: int) -> TransitionCounts:
    """Count adjacent label pairs of a trace into an n x n matrix."""
    arr = _as_label_array(trace, n)
    counts = np.zeros((n, n), dtype=np.int64)
    if arr.size >= 2:
        np.add.at(counts, (arr[:-1], arr[1:]), 1)
    return TransitionCounts(n, counts)


def build_transition_model(
    counts: TransitionCounts | np.ndarray,
    alpha: float = DEFAULT_ALPHA,
) -> TransitionModel:
    """Smooth counts with alpha/n per cell and row-normalize.

    P[i, j] = (counts[i, j] + alpha/n) / (rowsum_i + alpha). With
    alpha = 0 every row must have at least one observed transition, else
    :class:`ZeroRowWithoutTeleport` is raised.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    A = counts.counts if isinstance(counts, TransitionCounts) else np.asarray(counts)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("counts must be a square matrix")
    n = A.shape[0]
    rowsums = A.sum(axis=1, dtype=np.float64)
    if alpha == 0 and (rowsums == 0).any():
        bad = int(np.flatnonzero(rowsums == 0)[0])
        raise ZeroRowWithoutTeleport(f"row {bad} has no transitions and alpha = 0")
    W = A + alpha / n
    P = W / (rowsums + alpha)[:, None]
    return TransitionModel(n=n, alpha=float(alpha), P=P)


def _stationary_power(P: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, int, float]:
    n = P.shape[0]
    pi = np.full(n, 1.0 / n)
    residual = np.inf
    for it in range(1, max_iter + 1):
        nxt = pi @ P
        residual = float(np.abs(nxt - pi).sum())
        pi = nxt
        if residual <= tol:
            return pi / pi.sum(), it, residual
    raise NoConvergence(max_iter, residual)


def _stationary_direct(P: np.ndarray) -> np.ndarray:
    # Solve pi (P - I) = 0 with the normalization sum(pi) = 1 replacing
    # one redundant equation.
    n = P.shape[0]
    M = P.T - np.eye(n)
    M[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(M, b)
    except np.linalg.LinAlgError:
        pi = np.linalg.lstsq(M, b, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def stationary_distribution(
    model: TransitionModel,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    method: str = "power",
) -> StationaryDistribution:
    """Left principal eigenvector of P for its eigenvalue 1.

    ``method="power"`` iterates pi <- pi P from the uniform start until
    the l1 residual ||pi P - pi||_1 drops to ``tol`` and raises
    :class:`NoConvergence` when the budget runs out; ``method="direct"``
    solves the linear system and serves as cross-check and fallback.
    """
    if method == "power":
        pi, iterations, residual = _stationary_power(model.P, tol, max_iter)
        return StationaryDistribution(pi, "power", iterations, residual)
    if method == "direct":
        pi = _stationary_direct(model.P)
        residual = float(np.abs(pi @ model.P - pi).sum())
        return StationaryDistribution(pi, "direct", 0, residual)
    raise ValueError(f"unknown method {method!r}")


def page_view_vector(trace: Sequence[int] | np.ndarray, n: int) -> PageViewVector:
    """Multiplicity of each label in the trace; unaffected by ordering."""
    arr = _as_label_array(trace, n)
    return PageViewVector(np.bincount(arr, minlength=n).astype(np.int64))


@dataclass(slots=True)
class FeatureMatrix:
    """Per-user feature vectors over the shared n-dimensional label space."""

    user_ids: list[str]
    X: np.ndarray
    feature_kind: str
    label_names: list[str] = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]


def build_feature_matrix(
    traces,
    n: int,
    feature_kind: str = "stationary",
    alpha: float = DEFAULT_ALPHA,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    label_names: list[str] | None = None,
) -> FeatureMatrix:
    """Stack per-user features into an m x n matrix.

    Chains are built over the full vocabulary dimension (BREAK included)
    so all users share one coordinate system. On :class:`NoConvergence`
    the direct solver is used for that user.
    """
    if feature_kind not in ("stationary", "pageviews"):
        raise ValueError(f"unknown feature kind {feature_kind!r}")
    user_ids: list[str] = []
    rows: list[np.ndarray] = []
    for trace in traces:
        user_ids.append(trace.user)
        if feature_kind == "pageviews":
            rows.append(page_view_vector(trace.sequence, n).views.astype(np.float64))
            continue
        counts = count_transitions(trace.sequence, n)
        model = build_transition_model(counts, alpha)
        try:
            dist = stationary_distribution(model, tol=tol, max_iter=max_iter)
        except NoConvergence:
            dist = stationary_distribution(model, method="direct")
        rows.append(dist.pi)
    X = np.vstack(rows) if rows else np.zeros((0, n))
    return FeatureMatrix(user_ids, X, feature_kind, list(label_names or []))
