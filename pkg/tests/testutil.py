"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np


def purity(assignments, truth_labels) -> float:
    """Cluster purity: per cluster, count the majority truth label."""
    assignments = np.asarray(assignments)
    truth_labels = np.asarray(truth_labels)
    total = 0
    for k in np.unique(assignments):
        members = truth_labels[assignments == k]
        _, counts = np.unique(members, return_counts=True)
        total += counts.max()
    return total / len(truth_labels)


def stationary_oracle(counts: np.ndarray, alpha: float) -> np.ndarray:
    """Independent stationary solve: smooth, normalize, solve the linear system."""
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.shape[0]
    W = counts + alpha / n
    P = W / W.sum(axis=1, keepdims=True)
    M = P.T - np.eye(n)
    M[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    return np.linalg.solve(M, b)


def naive_sessionize(timestamps, gap_seconds):
    """Quadratic reference splitter: index partition by the gap rule."""
    sessions = []
    current = [0]
    for i in range(1, len(timestamps)):
        if timestamps[i] - timestamps[i - 1] >= gap_seconds:
            sessions.append(current)
            current = [i]
        else:
            current.append(i)
    if current:
        sessions.append(current)
    return sessions


def brute_force_two_partition_inertia(X: np.ndarray) -> float:
    """Exhaustive optimum over all 2-partitions (both sides non-empty)."""
    m = X.shape[0]
    best = np.inf
    for mask in range(1, 2 ** (m - 1)):
        sel = np.array([(mask >> i) & 1 for i in range(m)], dtype=bool)
        a, b = X[sel], X[~sel]
        inertia = ((a - a.mean(0)) ** 2).sum() + ((b - b.mean(0)) ** 2).sum()
        best = min(best, inertia)
    return float(best)
