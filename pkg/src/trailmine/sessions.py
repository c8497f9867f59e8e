"""Session segmentation, BREAK-joined user traces, and corpus statistics.

A session is a maximal run of one user's events in which every adjacent
gap is below the inactivity threshold (default 30 minutes). A user's
trace is the concatenation of the session label sequences with one BREAK
token between consecutive sessions.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

__all__ = [
    "NonMonotonicInput",
    "EmptyInput",
    "Event",
    "Session",
    "UserTrace",
    "UsageStats",
    "sessionize",
    "build_user_trace",
    "compute_usage_stats",
]

DEFAULT_GAP_MINUTES = 30.0


class NonMonotonicInput(ValueError):
    """Event timestamps decreased within one user's stream."""


class EmptyInput(ValueError):
    """No events / sessions to work on."""


class Event(NamedTuple):
    """One labeled request: who, when (UTC epoch seconds), what, where."""

    user: str
    timestamp: int
    label: int
    ontology: str | None = None


@dataclass(slots=True)
class Session:
    user: str
    events: list[Event]

    @property
    def start(self) -> int:
        return self.events[0].timestamp

    @property
    def end(self) -> int:
        return self.events[-1].timestamp

    @property
    def duration(self) -> int:
        """Seconds between first and last event; 0 for 1-event sessions."""
        return self.end - self.start

    def __len__(self) -> int:
        return len(self.events)


@dataclass(slots=True)
class UserTrace:
    """A user's full chronological action sequence, sessions joined by BREAK.

    ``ontologies`` parallels ``sequence`` (None at BREAK positions and for
    actions that carry no resource attribution).
    """

    user: str
    sequence: list[int]
    ontologies: list[str | None]
    session_count: int
    session_lengths: list[int]

    def __len__(self) -> int:
        return len(self.sequence)

    def action_count(self, break_label: int) -> int:
        """Number of non-BREAK tokens."""
        return len(self.sequence) - self.sequence.count(break_label)


def sessionize(
    events: Sequence[Event],
    gap_minutes: float = DEFAULT_GAP_MINUTES,
) -> list[Session]:
    """Partition one user's time-ordered events into sessions.

    A gap of ``gap_minutes`` or more starts a new session; ties in
    timestamps keep input order. Raises :class:`NonMonotonicInput` when
    timestamps decrease.
    """
    if not events:
        return []
    gap_seconds = gap_minutes * 60.0
    user = events[0].user
    sessions: list[Session] = []
    current = [events[0]]
    prev_ts = events[0].timestamp
    for ev in events[1:]:
        delta = ev.timestamp - prev_ts
        if delta < 0:
            raise NonMonotonicInput(
                f"timestamps decrease for user {user!r} ({prev_ts} -> {ev.timestamp})"
            )
        if delta >= gap_seconds:
            sessions.append(Session(user, current))
            current = [ev]
        else:
            current.append(ev)
        prev_ts = ev.timestamp
    sessions.append(Session(user, current))
    return sessions


def build_user_trace(sessions: Sequence[Session], break_label: int) -> UserTrace:
    """Join one user's sessions into a BREAK-separated trace."""
    if not sessions:
        raise EmptyInput("no sessions for trace")
    sequence: list[int] = []
    ontologies: list[str | None] = []
    for i, session in enumerate(sessions):
        if not session.events:
            raise EmptyInput("session without events")
        if i:
            sequence.append(break_label)
            ontologies.append(None)
        sequence.extend(ev.label for ev in session.events)
        ontologies.extend(ev.ontology for ev in session.events)
    return UserTrace(
        user=sessions[0].user,
        sequence=sequence,
        ontologies=ontologies,
        session_count=len(sessions),
        session_lengths=[len(s) for s in sessions],
    )


@dataclass(slots=True)
class UsageStats:
    """Corpus-level histograms and session scalars.

    Histograms map an integer value to its occurrence count. Session
    duration of a 1-event session is 0 seconds.
    """

    users: int = 0
    total_events: int = 0
    session_count: int = 0
    single_request_sessions: int = 0
    mean_session_duration: float = 0.0
    median_session_duration: float = 0.0
    inter_request_seconds: dict[int, int] = field(default_factory=dict)
    requests_per_user: dict[int, int] = field(default_factory=dict)
    ontologies_per_user: dict[int, int] = field(default_factory=dict)
    requests_per_session: dict[int, int] = field(default_factory=dict)


def _bump(hist: dict[int, int], value: int) -> None:
    hist[value] = hist.get(value, 0) + 1


def compute_usage_stats(
    sessions_by_user: Mapping[str, Sequence[Session]] | Iterable[tuple[str, Sequence[Session]]],
) -> UsageStats:
    """Aggregate usage statistics over all users' sessions.

    Inter-request gaps include cross-session gaps (the histogram that
    motivates the inactivity threshold in the first place). An empty
    corpus yields empty histograms and zero scalars.
    """
    items = sessions_by_user.items() if isinstance(sessions_by_user, Mapping) else sessions_by_user
    stats = UsageStats()
    durations: list[int] = []
    for user, sessions in items:
        if not sessions:
            continue
        stats.users += 1
        n_requests = 0
        ontologies: set[str] = set()
        prev_ts: int | None = None
        for session in sessions:
            stats.session_count += 1
            _bump(stats.requests_per_session, len(session))
            if len(session) == 1:
                stats.single_request_sessions += 1
            durations.append(session.duration)
            n_requests += len(session)
            for ev in session.events:
                if prev_ts is not None:
                    _bump(stats.inter_request_seconds, ev.timestamp - prev_ts)
                prev_ts = ev.timestamp
                if ev.ontology is not None:
                    ontologies.add(ev.ontology)
        stats.total_events += n_requests
        _bump(stats.requests_per_user, n_requests)
        _bump(stats.ontologies_per_user, len(ontologies))
    if durations:
        stats.mean_session_duration = sum(durations) / len(durations)
        stats.median_session_duration = float(statistics.median(durations))
    return stats
