import numpy as np
import pytest

from testutil import naive_sessionize
from trailmine.logs import parse_log_line
from trailmine.sessions import (
    EmptyInput,
    Event,
    NonMonotonicInput,
    build_user_trace,
    compute_usage_stats,
    sessionize,
)

BREAK = 33

# the nine requests of the worked session example
EXAMPLE_LINES = [
    '1.2.3.4 - - [14/Mar/2016:09:07:32 -0700] "GET / HTTP/1.1" 200 1 "-" "ua"',
    '1.2.3.4 - - [14/Mar/2016:09:07:46 -0700] "GET /login?redirect=http%3A%2F%2Fbioportal.bioontology.org%2F HTTP/1.1" 200 1 "-" "ua"',
    '1.2.3.4 - - [14/Mar/2016:09:07:48 -0700] "POST /login HTTP/1.1" 200 1 "-" "ua"',
    '1.2.3.4 - - [14/Mar/2016:09:07:50 -0700] "GET / HTTP/1.1" 200 1 "-" "ua"',
    '1.2.3.4 - - [14/Mar/2016:09:08:04 -0700] "GET /ontologies/MCCV HTTP/1.1" 200 1 "-" "ua"',
    '1.2.3.4 - - [14/Mar/2016:09:08:22 -0700] "GET /ontologies/MCCV/submissions/new HTTP/1.1" 200 1 "-" "ua"',
    '1.2.3.4 - - [14/Mar/2016:09:09:34 -0700] "POST /ontologies/MCCV/submissions HTTP/1.1" 200 1 "-" "ua"',
    '1.2.3.4 - - [14/Mar/2016:09:09:59 -0700] "GET /ontologies/success/MCCV HTTP/1.1" 200 1 "-" "ua"',
    '1.2.3.4 - - [14/Mar/2016:09:10:14 -0700] "GET /ontologies/MCCV HTTP/1.1" 200 1 "-" "ua"',
]

EXAMPLE_SEQUENCE = [
    "Browse Main Page", "Login", "Login", "Browse Main Page", "Ontology Summary",
    "Create Ontology Submission", "Create Ontology Submission",
    "Create Ontology Submission", "Ontology Summary",
]


def example_events(ruleset):
    events = []
    for line in EXAMPLE_LINES:
        r = parse_log_line(line)
        label, onto = ruleset.match(r.method, r.path)
        events.append(Event(r.ip, r.epoch, label, onto))
    return events


def _ev(ts, label=0, user="u"):
    return Event(user, ts, label)


def test_worked_example_is_one_session(ruleset):
    events = example_events(ruleset)
    sessions = sessionize(events)
    assert len(sessions) == 1
    assert len(sessions[0]) == 9
    assert sessions[0].duration == 162
    trace = build_user_trace(sessions, ruleset.vocabulary.break_id)
    names = [ruleset.vocabulary[i].name for i in trace.sequence]
    assert names == EXAMPLE_SEQUENCE


def test_gap_threshold_boundary():
    # 31 minutes apart: two singleton sessions
    two = sessionize([_ev(0), _ev(31 * 60)])
    assert [len(s) for s in two] == [1, 1]
    # exactly the threshold splits, one second less does not
    assert len(sessionize([_ev(0), _ev(1800)])) == 2
    assert len(sessionize([_ev(0), _ev(1799)])) == 1


def test_sessionize_matches_naive_splitter():
    rng = np.random.default_rng(1234)
    for _ in range(10_000):
        n = int(rng.integers(1, 25))
        gaps = rng.choice([0, 1, 5, 600, 1799, 1800, 1801, 4000], size=n - 1) if n > 1 else []
        ts = np.concatenate([[0], np.cumsum(gaps)]).astype(int) if n > 1 else np.array([0])
        events = [_ev(int(t)) for t in ts]
        got = [[events.index(e) for e in s.events] for s in sessionize(events)]
        want = naive_sessionize(list(ts), 1800)
        lengths_got = [len(s) for s in got]
        lengths_want = [len(s) for s in want]
        assert lengths_got == lengths_want


def test_sessionize_partition_and_gap_invariants():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 40))
        ts = np.cumsum(rng.integers(0, 2600, size=n)).astype(int)
        events = [_ev(int(t)) for t in ts]
        sessions = sessionize(events)
        flat = [e for s in sessions for e in s.events]
        assert flat == events  # partition, order preserved
        for s in sessions:
            for a, b in zip(s.events, s.events[1:]):
                assert b.timestamp - a.timestamp < 1800
        for s1, s2 in zip(sessions, sessions[1:]):
            assert s2.events[0].timestamp - s1.events[-1].timestamp >= 1800


def test_non_monotonic_raises():
    with pytest.raises(NonMonotonicInput):
        sessionize([_ev(100), _ev(50)])


def test_ties_keep_order():
    events = [_ev(10, label=1), _ev(10, label=2), _ev(10, label=3)]
    sessions = sessionize(events)
    assert [e.label for e in sessions[0].events] == [1, 2, 3]


def test_trace_break_counting():
    # one session: no BREAK
    t = build_user_trace(sessionize([_ev(0), _ev(1)]), BREAK)
    assert t.session_count == 1 and BREAK not in t.sequence
    # k singleton sessions: length 2k-1 with k-1 BREAKs
    k = 6
    events = [_ev(i * 4000) for i in range(k)]
    t = build_user_trace(sessionize(events), BREAK)
    assert len(t.sequence) == 2 * k - 1
    assert t.sequence.count(BREAK) == k - 1 == t.session_count - 1


def test_trace_break_placement_property():
    rng = np.random.default_rng(99)
    for _ in range(200):
        n = int(rng.integers(1, 30))
        ts = np.cumsum(rng.integers(0, 3000, size=n)).astype(int)
        events = [_ev(int(t), label=int(rng.integers(0, 5))) for t in ts]
        sessions = sessionize(events)
        t = build_user_trace(sessions, BREAK)
        assert len(t.sequence) == sum(len(s) for s in sessions) + t.session_count - 1
        assert t.sequence[0] != BREAK and t.sequence[-1] != BREAK
        for a, b in zip(t.sequence, t.sequence[1:]):
            assert not (a == BREAK and b == BREAK)
        assert len(t.ontologies) == len(t.sequence)


def test_empty_input():
    with pytest.raises(EmptyInput):
        build_user_trace([], BREAK)


def test_stats_single_event_corpus():
    stats = compute_usage_stats({"u": sessionize([_ev(5)])})
    assert stats.session_count == 1
    assert stats.single_request_sessions == 1
    assert stats.median_session_duration == 0.0
    assert stats.requests_per_session == {1: 1}
    assert stats.total_events == 1


def test_stats_worked_example(ruleset):
    sessions = sessionize(example_events(ruleset))
    stats = compute_usage_stats({"1.2.3.4": sessions})
    assert stats.requests_per_session == {9: 1}
    assert stats.mean_session_duration == 162.0
    assert stats.ontologies_per_user == {1: 1}  # only MCCV


def test_stats_consistency_invariant():
    rng = np.random.default_rng(11)
    corpus = {}
    for u in range(40):
        n = int(rng.integers(1, 30))
        ts = np.cumsum(rng.integers(0, 2600, size=n)).astype(int)
        corpus[f"u{u}"] = sessionize([_ev(int(t), user=f"u{u}") for t in ts])
    stats = compute_usage_stats(corpus)
    mass = sum(k * c for k, c in stats.requests_per_session.items())
    assert mass == stats.total_events
    assert sum(stats.requests_per_user.values()) == stats.users == 40
    assert sum(stats.requests_per_session.values()) == stats.session_count
