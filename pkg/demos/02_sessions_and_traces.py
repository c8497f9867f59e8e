# Sessionize one user's day and build the BREAK-joined action trace.
#
# Requests map to action labels via the shipped rules; a 30 minute
# pause starts a new session, and sessions are joined with a BREAK
# token so the chain can see where browsing stopped and resumed.

from trailmine import build_user_trace, compute_usage_stats, sessionize
from trailmine.actions import default_ruleset
from trailmine.sessions import Event

ruleset = default_ruleset()
vocab = ruleset.vocabulary

# a morning visit, a 45 minute coffee break, then a short return visit
requests = [
    (0, "GET", "/"),
    (40, "GET", "/search"),
    (95, "GET", "/ontologies/CPT/classes/C1003"),
    (150, "GET", "/ontologies/CPT/classes/C2210"),
    (45 * 60 + 150, "GET", "/ontologies/CPT"),          # new session
    (45 * 60 + 170, "GET", "/ontologies/CPT/tree"),
]
events = []
for ts, method, path in requests:
    label, onto = ruleset.match(method, path)
    events.append(Event("203.0.113.9", ts, label, onto))

sessions = sessionize(events, gap_minutes=30)
print(f"{len(events)} requests -> {len(sessions)} sessions "
      f"(lengths {[len(s) for s in sessions]})")
for i, s in enumerate(sessions):
    print(f"  session {i}: {len(s)} events, duration {s.duration}s")

trace = build_user_trace(sessions, vocab.break_id)
print("\ntrace:", " -> ".join(vocab[i].name for i in trace.sequence))
print("ontology attribution:", trace.ontologies)

stats = compute_usage_stats({"203.0.113.9": sessions})
print(f"\nusage: {stats.session_count} sessions, "
      f"mean duration {stats.mean_session_duration:.0f}s, "
      f"requests per session {stats.requests_per_session}")
