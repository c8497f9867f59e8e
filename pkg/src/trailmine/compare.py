"""Per-resource behavior comparison.

Users are attributed to a resource (ontology acronym) when at least a
threshold share of their actions target it; attribution is not
exclusive, so one user can count under several resources. Per resource
the module aggregates actions by behavior cluster, fits a chain on the
whole traces of the attributed users, and diffs transition matrices
between two resources over their most frequent labels.

The attribution ratio uses non-BREAK tokens in both numerator and
denominator (BREAK is an analysis artifact, not a user action); reports
state this convention in their headers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .markov import TransitionCounts, build_transition_model, count_transitions
from .pca import PcaModel, pca_fit, pca_project
from .sessions import UserTrace

__all__ = [
    "UnassignedUser",
    "TooFewResources",
    "ResourceProfile",
    "TransitionDiff",
    "ResourceProjection",
    "extract_resource_traces",
    "aggregate_cluster_actions",
    "transition_diff",
    "project_resources",
    "ATTRIBUTION_NOTE",
]

DEFAULT_THRESHOLD_PCT = 20.0

ATTRIBUTION_NOTE = (
    "attribution ratio = (user's actions on the resource) / (user's non-BREAK "
    "actions); BREAK tokens count on neither side"
)


class UnassignedUser(KeyError):
    """An attributed user has no cluster assignment."""


class TooFewResources(ValueError):
    """Projection needs at least two resources."""


def extract_resource_traces(
    traces: Iterable[UserTrace],
    threshold_pct: float = DEFAULT_THRESHOLD_PCT,
    break_label: int | None = None,
) -> dict[str, list[UserTrace]]:
    """Attribute whole user traces to resources via the threshold rule.

    A user belongs to every resource holding at least ``threshold_pct``
    percent of the user's non-BREAK actions, so the returned lists are
    not mutually exclusive. Per-event attribution comes from the
    ``ontologies`` sequence of each trace.
    """
    out: dict[str, list[UserTrace]] = {}
    for trace in traces:
        if break_label is not None:
            denom = trace.action_count(break_label)
        else:
            denom = len(trace.sequence)
        if denom == 0:
            continue
        per_resource: dict[str, int] = {}
        for onto in trace.ontologies:
            if onto is not None:
                per_resource[onto] = per_resource.get(onto, 0) + 1
        for resource, cnt in per_resource.items():
            if cnt * 100.0 >= threshold_pct * denom:
                out.setdefault(resource, []).append(trace)
    return out


@dataclass(slots=True)
class ResourceProfile:
    """Aggregated behavior of the users attributed to one resource."""

    resource: str
    visits: int                      # total actions of attributed users
    user_count: int
    cluster_action_counts: np.ndarray  # length K
    counts: TransitionCounts           # summed whole-trace transition counts
    label_counts: np.ndarray            # per-label frequencies, length n

    def cluster_ranks(self) -> np.ndarray:
        """Rank per cluster by action count (1 = largest; ties by cluster id)."""
        order = np.argsort(-self.cluster_action_counts, kind="stable")
        ranks = np.empty_like(order)
        ranks[order] = np.arange(1, len(order) + 1)
        return ranks


def aggregate_cluster_actions(
    resource_traces: Mapping[str, Sequence[UserTrace]],
    assignments: Mapping[str, int],
    K: int,
    n: int,
    break_label: int,
) -> list[ResourceProfile]:
    """Build one :class:`ResourceProfile` per resource.

    ``cluster_action_counts[k]`` sums the total (non-BREAK) actions of
    the attributed users assigned to cluster k; an action is counted
    once per resource its user is attributed under. Raises
    :class:`UnassignedUser` when a user has no assignment.
    """
    profiles = []
    for resource in sorted(resource_traces):
        cluster_counts = np.zeros(K, dtype=np.int64)
        counts = np.zeros((n, n), dtype=np.int64)
        label_counts = np.zeros(n, dtype=np.int64)
        users = 0
        for trace in resource_traces[resource]:
            try:
                cluster = assignments[trace.user]
            except KeyError:
                raise UnassignedUser(trace.user) from None
            if not 0 <= cluster < K:
                raise UnassignedUser(f"{trace.user}: cluster {cluster} out of range")
            cluster_counts[cluster] += trace.action_count(break_label)
            counts += count_transitions(trace.sequence, n).counts
            label_counts += np.bincount(np.asarray(trace.sequence), minlength=n)
            users += 1
        profiles.append(
            ResourceProfile(
                resource=resource,
                visits=int(cluster_counts.sum()),
                user_count=users,
                cluster_action_counts=cluster_counts,
                counts=TransitionCounts(n, counts),
                label_counts=label_counts,
            )
        )
    profiles.sort(key=lambda p: (-p.visits, p.resource))
    return profiles


@dataclass(slots=True)
class TransitionDiff:
    """Difference of two resources' transition matrices over shown labels.

    ``diff[i, j] = P_a[i, j] - P_b[i, j]`` restricted to the top
    ``labels_shown`` (most frequent by combined label counts), so
    ``transition_diff(a, b)`` is the exact negation of
    ``transition_diff(b, a)``.
    """

    resource_a: str
    resource_b: str
    labels_shown: list[int]
    diff: np.ndarray
    histogram_a: np.ndarray   # full-length label frequencies for resource a
    histogram_b: np.ndarray


def transition_diff(
    profile_a: ResourceProfile,
    profile_b: ResourceProfile,
    alpha: float = 0.15,
    top_t: int = 10,
) -> TransitionDiff:
    """Fit a smoothed chain per resource and diff them over top labels."""
    if profile_a.counts.n != profile_b.counts.n:
        raise ValueError("profiles cover different vocabularies")
    n = profile_a.counts.n
    combined = profile_a.label_counts + profile_b.label_counts
    order = np.argsort(-combined, kind="stable")
    shown = [int(i) for i in order[: min(top_t, n)]]
    P_a = build_transition_model(profile_a.counts, alpha).P
    P_b = build_transition_model(profile_b.counts, alpha).P
    ix = np.ix_(shown, shown)
    return TransitionDiff(
        resource_a=profile_a.resource,
        resource_b=profile_b.resource,
        labels_shown=shown,
        diff=P_a[ix] - P_b[ix],
        histogram_a=profile_a.label_counts.copy(),
        histogram_b=profile_b.label_counts.copy(),
    )


@dataclass(slots=True)
class ResourceProjection:
    """PCA landscape of resources by their cluster activity mix."""

    resources: list[str]
    coordinates: np.ndarray
    model: PcaModel


def project_resources(
    profiles: Sequence[ResourceProfile],
    top_m: int = 50,
    r: int = 3,
) -> ResourceProjection:
    """Project the most-visited resources by their per-cluster action counts.

    Resources with similar behavior mixes land close together; the
    distance grows with the difference in actions performed per behavior
    cluster.
    """
    if len(profiles) < 2:
        raise TooFewResources("need at least two resource profiles")
    chosen = sorted(profiles, key=lambda p: (-p.visits, p.resource))[:top_m]
    if len(chosen) < 2:
        raise TooFewResources("need at least two resources after top-m selection")
    X = np.vstack([p.cluster_action_counts for p in chosen]).astype(np.float64)
    r_eff = max(1, min(r, min(X.shape)))
    model = pca_fit(X, r_eff)
    coords = pca_project(model, X)
    return ResourceProjection(
        resources=[p.resource for p in chosen],
        coordinates=coords,
        model=model,
    )
