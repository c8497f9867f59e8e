"""Pipeline orchestration: ingest, traces, features, clusters, comparison.

Each stage consumes and produces documented file formats so long runs
can be resumed per stage. Parsing and mapping are pure per line, so
ingestion can fan out over worker processes; per-user ordering is
restored afterwards by a stable (user, timestamp) sort.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, asdict
from configparser import ConfigParser
from multiprocessing import Pool
from pathlib import Path
from typing import Callable, Iterable, Sequence
from urllib.parse import unquote

import numpy as np

from . import __version__
from .actions import RuleSet, compile_ruleset, default_ruleset
from .cluster import (
    ClusterModel,
    ClusterProfile,
    explained_variance_curve,
    kmeans_fit,
    profile_clusters,
)
from .compare import (
    ATTRIBUTION_NOTE,
    TooFewResources,
    aggregate_cluster_actions,
    extract_resource_traces,
    project_resources,
    transition_diff,
)
from .logs import (
    CompiledFilter,
    FilterConfig,
    default_filter_config,
    load_list_file,
    open_log,
    parse_clf_timestamp,
    parse_log_line,
    MalformedLine,
    _COMBINED_RE,
    _COMMON_RE,
)
from .markov import FeatureMatrix, build_feature_matrix
from .pca import loading_extremes, pca_fit, pca_project
from .sessions import Event, Session, UserTrace, build_user_trace, compute_usage_stats, sessionize

__all__ = [
    "PipelineConfig",
    "PipelineStageError",
    "IngestStats",
    "EventBatch",
    "ingest_paths",
    "build_traces",
    "run_pipeline",
    "write_traces_jsonl",
    "read_traces_jsonl",
    "write_feature_csv",
    "read_feature_csv",
]


class PipelineStageError(RuntimeError):
    """A stage failed; partial outputs from earlier stages are retained."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class IngestStats:
    """Reduction funnel counters: parsed >= filtered >= mapped."""

    lines: int = 0
    parsed: int = 0
    malformed: int = 0
    dropped_useragent: int = 0
    dropped_ip: int = 0
    dropped_asset: int = 0
    unmapped: int = 0
    events: int = 0

    @property
    def filtered(self) -> int:
        """Records surviving the blacklists."""
        return self.parsed - self.dropped_useragent - self.dropped_ip - self.dropped_asset

    def merge(self, other: "IngestStats") -> None:
        self.lines += other.lines
        self.parsed += other.parsed
        self.malformed += other.malformed
        self.dropped_useragent += other.dropped_useragent
        self.dropped_ip += other.dropped_ip
        self.dropped_asset += other.dropped_asset
        self.unmapped += other.unmapped
        self.events += other.events


@dataclass
class EventBatch:
    """Columnar mapped events in input order.

    Users and ontology acronyms are factorized into string pools plus
    code arrays (ontology code -1 means no attribution), which keeps
    million-event batches cheap to move between worker processes.
    """

    user_pool: list[str]
    user_codes: np.ndarray
    timestamps: np.ndarray
    labels: np.ndarray
    onto_pool: list[str]
    onto_codes: np.ndarray

    def __len__(self) -> int:
        return len(self.user_codes)

    @property
    def users(self) -> list[str]:
        return [self.user_pool[c] for c in self.user_codes]

    @property
    def ontologies(self) -> list[str | None]:
        return [None if c < 0 else self.onto_pool[c] for c in self.onto_codes]

    @classmethod
    def merge(cls, parts: Sequence["EventBatch"]) -> "EventBatch":
        """Concatenate parts in order, remapping codes into shared pools."""
        if len(parts) == 1:
            return parts[0]
        user_pool: dict[str, int] = {}
        onto_pool: dict[str, int] = {}
        ucodes, ocodes, ts, labels = [], [], [], []
        for part in parts:
            umap = np.array(
                [user_pool.setdefault(u, len(user_pool)) for u in part.user_pool],
                dtype=np.int64,
            )
            omap = np.array(
                [onto_pool.setdefault(o, len(onto_pool)) for o in part.onto_pool],
                dtype=np.int64,
            )
            ucodes.append(umap[part.user_codes] if len(part) else part.user_codes)
            if len(part):
                oc = part.onto_codes
                remapped = np.where(oc >= 0, omap[np.maximum(oc, 0)] if len(omap) else oc, -1)
                ocodes.append(remapped)
            else:
                ocodes.append(part.onto_codes)
            ts.append(part.timestamps)
            labels.append(part.labels)
        return cls(
            user_pool=list(user_pool),
            user_codes=np.concatenate(ucodes) if ucodes else np.empty(0, dtype=np.int64),
            timestamps=np.concatenate(ts) if ts else np.empty(0, dtype=np.int64),
            labels=np.concatenate(labels) if labels else np.empty(0, dtype=np.int64),
            onto_pool=list(onto_pool),
            onto_codes=np.concatenate(ocodes) if ocodes else np.empty(0, dtype=np.int64),
        )

    def group_by_user(self) -> dict[str, list[Event]]:
        """Per-user event lists, stably sorted by (user, timestamp)."""
        order = np.lexsort((self.timestamps, self.user_codes))  # ties keep input order
        grouped: dict[str, list[Event]] = {}
        upool, opool = self.user_pool, self.onto_pool
        ts, labels, ocodes = self.timestamps, self.labels, self.onto_codes
        ucodes = self.user_codes
        for i in order:
            oc = ocodes[i]
            ev = Event(
                upool[ucodes[i]], int(ts[i]), int(labels[i]),
                None if oc < 0 else opool[oc],
            )
            grouped.setdefault(ev.user, []).append(ev)
        return grouped


def _empty_batch() -> EventBatch:
    empty = np.empty(0, dtype=np.int64)
    return EventBatch([], empty.copy(), empty.copy(), empty.copy(), [], empty.copy())


def _ingest_lines(
    lines: Iterable[str],
    ruleset: RuleSet,
    filt: CompiledFilter,
    log_format: str,
) -> tuple[EventBatch, IngestStats]:
    """Fused parse + filter + map loop over raw lines (the hot path)."""
    stats = IngestStats()
    user_pool: dict[str, int] = {}
    onto_pool: dict[str, int] = {}
    ucodes: list[int] = []
    ts_list: list[int] = []
    label_list: list[int] = []
    ocodes: list[int] = []
    line_re = _COMBINED_RE if log_format == "combined" else _COMMON_RE
    combined = log_format == "combined"
    drop_reason = filt.drop_reason
    match_rule = ruleset.match
    for line in lines:
        stats.lines += 1
        m = line_re.match(line)
        if m is None:
            stats.malformed += 1
            continue
        g = m.groups()
        try:
            epoch = parse_clf_timestamp(g[3])
        except MalformedLine:
            stats.malformed += 1
            continue
        req = g[4].split(" ")
        if len(req) != 3 or not req[0] or not req[0].isupper() or not req[1].startswith("/"):
            stats.malformed += 1
            continue
        stats.parsed += 1
        raw_path = req[1].partition("?")[0]
        path = unquote(raw_path) if "%" in raw_path else raw_path
        ua = g[8] if combined else ""
        reason = drop_reason(ua, g[0], path)
        if reason is not None:
            if reason == "useragent":
                stats.dropped_useragent += 1
            elif reason == "ip":
                stats.dropped_ip += 1
            else:
                stats.dropped_asset += 1
            continue
        hit = match_rule(req[0], path)
        if hit is None:
            stats.unmapped += 1
            continue
        ip = g[0]
        code = user_pool.get(ip)
        if code is None:
            code = user_pool.setdefault(ip, len(user_pool))
        ucodes.append(code)
        ts_list.append(epoch)
        label_list.append(hit[0])
        onto = hit[1]
        if onto is None:
            ocodes.append(-1)
        else:
            ocode = onto_pool.get(onto)
            if ocode is None:
                ocode = onto_pool.setdefault(onto, len(onto_pool))
            ocodes.append(ocode)
    stats.events = len(ucodes)
    batch = EventBatch(
        user_pool=list(user_pool),
        user_codes=np.asarray(ucodes, dtype=np.int64),
        timestamps=np.asarray(ts_list, dtype=np.int64),
        labels=np.asarray(label_list, dtype=np.int64),
        onto_pool=list(onto_pool),
        onto_codes=np.asarray(ocodes, dtype=np.int64),
    )
    return batch, stats


# worker-process state for parallel ingestion, set up once per worker
_WORKER: dict = {}


def _worker_init(ruleset: RuleSet, filter_cfg: FilterConfig, log_format: str) -> None:
    _WORKER["ruleset"] = ruleset
    _WORKER["filter"] = filter_cfg.compile()
    _WORKER["format"] = log_format


def _worker_ingest(task: tuple[str, int, int]):
    path, start, end = task
    with open(path, "rb") as fh:
        fh.seek(start)
        blob = fh.read(end - start)
    lines = blob.decode("utf-8", errors="replace").splitlines()
    batch, stats = _ingest_lines(lines, _WORKER["ruleset"], _WORKER["filter"], _WORKER["format"])
    # already factorized: pickles as small string pools plus index arrays
    return batch, asdict(stats)


def _chunk_file(path: str, jobs: int) -> list[tuple[str, int, int]]:
    """Byte ranges aligned to line boundaries."""
    size = os.path.getsize(path)
    if size == 0:
        return []
    approx = max(1, size // jobs)
    offsets = [0]
    with open(path, "rb") as fh:
        for i in range(1, jobs):
            fh.seek(min(i * approx, size))
            fh.readline()
            pos = fh.tell()
            if pos >= size:
                break
            if pos > offsets[-1]:
                offsets.append(pos)
    bounds = offsets + [size]
    return [(path, bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]


def ingest_paths(
    paths: Sequence[str | Path],
    ruleset: RuleSet | None = None,
    filter_config: FilterConfig | None = None,
    log_format: str = "combined",
    jobs: int = 1,
    rules_file: str | Path | None = None,
    user_key: Callable | None = None,
) -> tuple[EventBatch, IngestStats]:
    """Parse, filter and map log files into an event batch.

    ``jobs > 1`` fans plain-text files out over worker processes
    (gzip files fall back to in-process parsing). ``user_key`` swaps the
    user identity source (default: the IP field) and forces the slower
    record-at-a-time path.
    """
    ruleset = ruleset or (compile_ruleset(rules_file) if rules_file else default_ruleset())
    cfg = filter_config or default_filter_config()
    filt = cfg.compile()

    if user_key is not None:
        return _ingest_records(paths, ruleset, filt, log_format, user_key)

    parts: list[EventBatch] = []
    stats = IngestStats()
    plain = [str(p) for p in paths if not str(p).endswith(".gz")]
    gz = [str(p) for p in paths if str(p).endswith(".gz")]

    if jobs > 1 and plain:
        tasks: list[tuple[str, int, int]] = []
        for p in plain:
            tasks.extend(_chunk_file(p, jobs * 4))  # fine chunks even out load
        with Pool(
            processes=jobs,
            initializer=_worker_init,
            initargs=(ruleset, cfg, log_format),
        ) as pool:
            for part, st in pool.map(_worker_ingest, tasks):
                parts.append(part)
                stats.merge(IngestStats(**st))
        plain = []

    for p in plain + gz:
        with open_log(p) as fh:
            part, part_stats = _ingest_lines(fh, ruleset, filt, log_format)
        parts.append(part)
        stats.merge(part_stats)
    batch = EventBatch.merge(parts) if parts else _empty_batch()
    return batch, stats


def _ingest_records(paths, ruleset, filt, log_format, user_key):
    """Record-at-a-time ingestion for custom user identity sources."""
    stats = IngestStats()
    user_pool: dict[str, int] = {}
    onto_pool: dict[str, int] = {}
    ucodes, ts_list, labels, ocodes = [], [], [], []
    for p in paths:
        with open_log(p) as fh:
            for line in fh:
                stats.lines += 1
                try:
                    record = parse_log_line(line, log_format)
                except MalformedLine:
                    stats.malformed += 1
                    continue
                stats.parsed += 1
                reason = filt.drop_reason(record.useragent, record.ip, record.path)
                if reason == "useragent":
                    stats.dropped_useragent += 1
                    continue
                if reason == "ip":
                    stats.dropped_ip += 1
                    continue
                if reason == "asset":
                    stats.dropped_asset += 1
                    continue
                hit = ruleset.match(record.method, record.path)
                if hit is None:
                    stats.unmapped += 1
                    continue
                user = user_key(record)
                ucodes.append(user_pool.setdefault(user, len(user_pool)))
                ts_list.append(record.epoch)
                labels.append(hit[0])
                onto = hit[1]
                ocodes.append(-1 if onto is None else onto_pool.setdefault(onto, len(onto_pool)))
    stats.events = len(ucodes)
    batch = EventBatch(
        user_pool=list(user_pool),
        user_codes=np.asarray(ucodes, dtype=np.int64),
        timestamps=np.asarray(ts_list, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.int64),
        onto_pool=list(onto_pool),
        onto_codes=np.asarray(ocodes, dtype=np.int64),
    )
    return batch, stats


def build_traces(
    batch: EventBatch,
    break_label: int,
    gap_minutes: float = 30.0,
) -> tuple[list[UserTrace], dict[str, list[Session]]]:
    """Sessionize per user and build BREAK-joined traces.

    Returns traces sorted by user id plus the per-user session lists
    (the input to usage statistics).
    """
    grouped = batch.group_by_user()
    traces: list[UserTrace] = []
    sessions_by_user: dict[str, list[Session]] = {}
    for user in sorted(grouped):
        sessions = sessionize(grouped[user], gap_minutes=gap_minutes)
        sessions_by_user[user] = sessions
        traces.append(build_user_trace(sessions, break_label))
    return traces, sessions_by_user


# ---------------------------------------------------------------------------
# file formats


def write_traces_jsonl(traces: Iterable[UserTrace], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in traces:
            fh.write(
                json.dumps(
                    {
                        "user": t.user,
                        "sequence": t.sequence,
                        "ontologies": t.ontologies,
                        "session_lengths": t.session_lengths,
                    },
                    separators=(",", ":"),
                )
            )
            fh.write("\n")


def read_traces_jsonl(path: str | Path) -> list[UserTrace]:
    traces = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            d = json.loads(line)
            traces.append(
                UserTrace(
                    user=d["user"],
                    sequence=d["sequence"],
                    ontologies=d["ontologies"],
                    session_count=len(d["session_lengths"]),
                    session_lengths=d["session_lengths"],
                )
            )
    return traces


def write_feature_csv(features: FeatureMatrix, path: str | Path) -> None:
    names = features.label_names or [f"label_{i}" for i in range(features.n)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("user," + ",".join(names) + "\n")
        for uid, row in zip(features.user_ids, features.X):
            fh.write(uid + "," + ",".join(repr(float(v)) for v in row) + "\n")


def read_feature_csv(path: str | Path) -> FeatureMatrix:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        names = header[1:]
        user_ids, rows = [], []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            user_ids.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    X = np.asarray(rows, dtype=np.float64) if rows else np.zeros((0, len(names)))
    return FeatureMatrix(user_ids, X, "unknown", names)


def _write_histogram_csv(hist: dict[int, int], path: Path, value_name: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{value_name},count\n")
        for value in sorted(hist):
            fh.write(f"{value},{hist[value]}\n")


def write_usage_stats(stats, out_dir: Path) -> list[str]:
    """Plain-text report plus one CSV per histogram; returns file names."""
    files = []
    report = out_dir / "usage_stats.txt"
    with open(report, "w", encoding="utf-8") as fh:
        fh.write("corpus usage statistics\n")
        fh.write(f"users: {stats.users}\n")
        fh.write(f"events: {stats.total_events}\n")
        fh.write(f"sessions: {stats.session_count}\n")
        fh.write(f"single_request_sessions: {stats.single_request_sessions}\n")
        fh.write(f"mean_session_duration_s: {stats.mean_session_duration:.3f}\n")
        fh.write(f"median_session_duration_s: {stats.median_session_duration:.1f}\n")
        fh.write("note: a 1-event session has duration 0 s\n")
    files.append(report.name)
    for name, hist in (
        ("inter_request_seconds", stats.inter_request_seconds),
        ("requests_per_user", stats.requests_per_user),
        ("ontologies_per_user", stats.ontologies_per_user),
        ("requests_per_session", stats.requests_per_session),
    ):
        p = out_dir / f"hist_{name}.csv"
        _write_histogram_csv(hist, p, name)
        files.append(p.name)
    return files


def write_cluster_outputs(
    features: FeatureMatrix,
    model: ClusterModel,
    profiles: list[ClusterProfile],
    out_dir: Path,
) -> list[str]:
    files = []
    names = features.label_names or [f"label_{i}" for i in range(features.n)]
    p = out_dir / "assignments.csv"
    with open(p, "w", encoding="utf-8") as fh:
        fh.write("user,cluster\n")
        for uid, c in zip(features.user_ids, model.assignments):
            fh.write(f"{uid},{int(c)}\n")
    files.append(p.name)
    p = out_dir / "centroids.csv"
    with open(p, "w", encoding="utf-8") as fh:
        fh.write("cluster," + ",".join(names) + "\n")
        for k, row in enumerate(model.centroids):
            fh.write(f"{k}," + ",".join(repr(float(v)) for v in row) + "\n")
    files.append(p.name)
    p = out_dir / "cluster_profiles.txt"
    with open(p, "w", encoding="utf-8") as fh:
        fh.write(f"behavior clusters (K={model.K}, inertia={model.inertia!r})\n")
        for prof in profiles:
            fh.write(
                f"cluster {prof.cluster}: {prof.size} users, "
                f"avg {prof.mean_actions:.1f} actions (median {prof.median_actions:g})\n"
            )
            top_actions = np.argsort(-prof.action_histogram, kind="stable")[:5]
            acts = ", ".join(
                f"{names[i]} ({int(prof.action_histogram[i])})"
                for i in top_actions
                if prof.action_histogram[i] > 0
            )
            fh.write(f"  top actions: {acts}\n")
            trans = ", ".join(
                f"{names[a]} -> {names[b]} ({c})" for a, b, c in prof.top_transitions[:5]
            )
            fh.write(f"  top transitions: {trans}\n")
    files.append(p.name)
    for prof in profiles:
        p = out_dir / f"cluster_{prof.cluster}_actions.csv"
        with open(p, "w", encoding="utf-8") as fh:
            fh.write("label,count\n")
            for i, cnt in enumerate(prof.action_histogram):
                fh.write(f"{names[i]},{int(cnt)}\n")
        files.append(p.name)
    return files


def write_elbow_csv(curve, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("K,explained_variance\n")
        for k, ev in curve.points:
            fh.write(f"{k},{repr(float(ev))}\n")


def write_pca_outputs(features: FeatureMatrix, model, coords, assignments, out_dir: Path) -> list[str]:
    files = []
    names = features.label_names or [f"label_{i}" for i in range(features.n)]
    p = out_dir / "pca_loadings.csv"
    with open(p, "w", encoding="utf-8") as fh:
        fh.write("label," + ",".join(f"PC{i + 1}" for i in range(model.r)) + "\n")
        for j, name in enumerate(names):
            fh.write(name + "," + ",".join(repr(float(model.components[i, j])) for i in range(model.r)) + "\n")
    files.append(p.name)
    p = out_dir / "pca_coordinates.csv"
    with open(p, "w", encoding="utf-8") as fh:
        header = "id," + ",".join(f"PC{i + 1}" for i in range(model.r))
        if assignments is not None:
            header += ",cluster"
        fh.write(header + "\n")
        for i, uid in enumerate(features.user_ids):
            row = uid + "," + ",".join(repr(float(v)) for v in coords[i])
            if assignments is not None:
                row += f",{int(assignments[i])}"
            fh.write(row + "\n")
    files.append(p.name)
    p = out_dir / "pca_report.txt"
    with open(p, "w", encoding="utf-8") as fh:
        fh.write("principal components over behavior features\n")
        for i, (ratio, cum) in enumerate(zip(model.explained_variance_ratio, model.cumulative_ratio)):
            fh.write(f"PC{i + 1}: variance ratio {ratio:.4f}, cumulative {cum:.4f}\n")
        for ext in loading_extremes(model, names):
            fh.write(
                f"PC{ext['component']}: largest {ext['largest']} "
                f"({ext['largest_coefficient']:+.4f}), smallest {ext['smallest']} "
                f"({ext['smallest_coefficient']:+.4f})\n"
            )
    files.append(p.name)
    return files


def write_compare_outputs(profiles, diff, projection, names, out_dir: Path) -> list[str]:
    files = []
    if profiles:
        K = len(profiles[0].cluster_action_counts)
        p = out_dir / "resource_profiles.csv"
        with open(p, "w", encoding="utf-8") as fh:
            fh.write("resource,visits,users," + ",".join(f"cluster_{k}" for k in range(K)) + "\n")
            for prof in profiles:
                fh.write(
                    f"{prof.resource},{prof.visits},{prof.user_count},"
                    + ",".join(str(int(v)) for v in prof.cluster_action_counts)
                    + "\n"
                )
        files.append(p.name)
    if diff is not None:
        p = out_dir / f"transition_diff_{diff.resource_a}_vs_{diff.resource_b}.json"
        shown = diff.labels_shown
        payload = {
            "resource_a": diff.resource_a,
            "resource_b": diff.resource_b,
            "note": ATTRIBUTION_NOTE,
            "labels": [names[i] for i in shown],
            "histogram_a": [int(diff.histogram_a[i]) for i in shown],
            "histogram_b": [int(diff.histogram_b[i]) for i in shown],
            "diff": [[float(v) for v in row] for row in diff.diff],
        }
        with open(p, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
        files.append(p.name)
    if projection is not None:
        p = out_dir / "resource_coordinates.csv"
        with open(p, "w", encoding="utf-8") as fh:
            fh.write("resource," + ",".join(f"PC{i + 1}" for i in range(projection.model.r)) + "\n")
            for rname, row in zip(projection.resources, projection.coordinates):
                fh.write(rname + "," + ",".join(repr(float(v)) for v in row) + "\n")
        files.append(p.name)
        p = out_dir / "resource_pca_report.txt"
        cluster_names = [f"cluster_{k}" for k in range(projection.model.n)]
        with open(p, "w", encoding="utf-8") as fh:
            fh.write("principal components over per-cluster resource activity\n")
            for i, (ratio, cum) in enumerate(
                zip(projection.model.explained_variance_ratio, projection.model.cumulative_ratio)
            ):
                fh.write(f"PC{i + 1}: variance ratio {ratio:.4f}, cumulative {cum:.4f}\n")
            for ext in loading_extremes(projection.model, cluster_names):
                fh.write(
                    f"PC{ext['component']}: largest {ext['largest']} "
                    f"({ext['largest_coefficient']:+.4f}), smallest {ext['smallest']} "
                    f"({ext['smallest_coefficient']:+.4f})\n"
                )
        files.append(p.name)
    return files


# ---------------------------------------------------------------------------
# configuration and full run


@dataclass
class PipelineConfig:
    """Every knob of the pipeline; defaults follow the standard set-up."""

    logs: list[str] = field(default_factory=list)
    out_dir: str = "trailmine_out"
    log_format: str = "combined"
    rules: str | None = None
    ua_blacklist: str | None = None
    ip_blacklist: str | None = None
    asset_patterns: str | None = None
    gap_minutes: float = 30.0
    alpha: float = 0.15
    feature_kind: str = "stationary"
    tol: float = 1e-10
    max_iter: int = 100_000
    k: int | None = None          # None: use the elbow knee
    k_range: tuple[int, int] = (1, 25)
    seed: int = 0
    restarts: int = 10
    pca_components: int = 3
    threshold_pct: float = 20.0
    top_actions: int = 10
    top_resources: int = 50
    jobs: int = 1

    @classmethod
    def from_ini(cls, path: str | Path) -> "PipelineConfig":
        parser = ConfigParser()
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
        section = parser["pipeline"] if parser.has_section("pipeline") else parser["DEFAULT"]
        cfg = cls()
        if "logs" in section:
            cfg.logs = section["logs"].split()
        for key in ("out_dir", "log_format", "rules", "ua_blacklist", "ip_blacklist",
                    "asset_patterns", "feature_kind"):
            if key in section:
                setattr(cfg, key, section[key])
        for key in ("gap_minutes", "alpha", "tol", "threshold_pct"):
            if key in section:
                setattr(cfg, key, float(section[key]))
        for key in ("max_iter", "seed", "restarts", "pca_components",
                    "top_actions", "top_resources", "jobs", "k"):
            if key in section:
                setattr(cfg, key, int(section[key]))
        if "k_range" in section:
            lo, hi = section["k_range"].replace(":", " ").replace("..", " ").split()
            cfg.k_range = (int(lo), int(hi))
        return cfg

    def as_dict(self) -> dict:
        d = asdict(self)
        d["k_range"] = list(self.k_range)
        return d

    def filter_config(self) -> FilterConfig:
        base = default_filter_config()
        if self.ua_blacklist is not None:
            base.useragent_blacklist = load_list_file(self.ua_blacklist)
        if self.ip_blacklist is not None:
            base.ip_blacklist = load_list_file(self.ip_blacklist)
        if self.asset_patterns is not None:
            base.drop_asset_patterns = load_list_file(self.asset_patterns)
        return base

    def ruleset(self) -> RuleSet:
        return compile_ruleset(self.rules) if self.rules else default_ruleset()


def run_pipeline(config: PipelineConfig) -> dict:
    """Run every stage and write all artifacts plus a run manifest.

    Returns the manifest dict. Stage failures raise
    :class:`PipelineStageError`; outputs of completed stages stay on
    disk, and the manifest written so far is preserved as
    ``manifest.partial.json``.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "config": config.as_dict(),
        "versions": {
            "trailmine": __version__,
            "numpy": np.__version__,
        },
        "stages": {},
        "outputs": [],
    }

    def fail(stage: str, exc: BaseException):
        with open(out_dir / "manifest.partial.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1)
        raise PipelineStageError(stage, exc) from exc

    def record(stage: str, t0: float, **counts):
        entry = {"seconds": round(time.perf_counter() - t0, 3)}
        entry.update(counts)
        manifest["stages"][stage] = entry

    # ingest
    t0 = time.perf_counter()
    try:
        ruleset = config.ruleset()
        vocab = ruleset.vocabulary
        batch, stats = ingest_paths(
            config.logs,
            ruleset=ruleset,
            filter_config=config.filter_config(),
            log_format=config.log_format,
            jobs=config.jobs,
            rules_file=config.rules,
        )
        if stats.parsed == 0:
            raise MalformedLine("no parseable lines in input")
    except Exception as exc:
        fail("ingest", exc)
    record(
        "ingest", t0,
        lines=stats.lines, parsed=stats.parsed, malformed=stats.malformed,
        dropped_useragent=stats.dropped_useragent, dropped_ip=stats.dropped_ip,
        dropped_asset=stats.dropped_asset, filtered=stats.filtered,
        unmapped=stats.unmapped, events=stats.events,
    )

    # sessionize
    t0 = time.perf_counter()
    try:
        traces, sessions_by_user = build_traces(batch, vocab.break_id, config.gap_minutes)
        usage = compute_usage_stats(sessions_by_user)
        write_traces_jsonl(traces, out_dir / "traces.jsonl")
        manifest["outputs"].append("traces.jsonl")
        manifest["outputs"] += write_usage_stats(usage, out_dir)
    except Exception as exc:
        fail("sessionize", exc)
    record("sessionize", t0, users=len(traces), sessions=usage.session_count)

    # features
    t0 = time.perf_counter()
    try:
        features = build_feature_matrix(
            traces, vocab.n,
            feature_kind=config.feature_kind, alpha=config.alpha,
            tol=config.tol, max_iter=config.max_iter,
            label_names=vocab.names(),
        )
        write_feature_csv(features, out_dir / "features.csv")
        manifest["outputs"].append("features.csv")
    except Exception as exc:
        fail("features", exc)
    record("features", t0, users=features.m, kind=config.feature_kind)

    # elbow
    t0 = time.perf_counter()
    knee = None
    try:
        lo, hi = config.k_range
        hi = min(hi, features.m)
        curve = explained_variance_curve(
            features, range(lo, hi + 1), seed=config.seed, restarts=config.restarts,
        )
        knee = curve.knee
        write_elbow_csv(curve, out_dir / "elbow.csv")
        manifest["outputs"].append("elbow.csv")
    except Exception as exc:
        fail("elbow", exc)
    record("elbow", t0, knee=knee)

    # cluster
    t0 = time.perf_counter()
    try:
        K = config.k if config.k is not None else (knee or 1)
        model = kmeans_fit(features, K, seed=config.seed, restarts=config.restarts)
        profiles = profile_clusters(features, model, traces, vocab.break_id)
        manifest["outputs"] += write_cluster_outputs(features, model, profiles, out_dir)
    except Exception as exc:
        fail("cluster", exc)
    record("cluster", t0, K=K, inertia=model.inertia)

    # pca
    t0 = time.perf_counter()
    try:
        r = min(config.pca_components, features.m, features.n)
        pca_model = pca_fit(features.X, r)
        coords = pca_project(pca_model, features.X)
        manifest["outputs"] += write_pca_outputs(
            features, pca_model, coords, model.assignments, out_dir
        )
    except Exception as exc:
        fail("pca", exc)
    record("pca", t0, components=pca_model.r)

    # compare
    t0 = time.perf_counter()
    try:
        assignments = dict(zip(features.user_ids, (int(c) for c in model.assignments)))
        resource_traces = extract_resource_traces(
            traces, threshold_pct=config.threshold_pct, break_label=vocab.break_id,
        )
        rprofiles = aggregate_cluster_actions(
            resource_traces, assignments, model.K, vocab.n, vocab.break_id,
        )
        diff = None
        projection = None
        if len(rprofiles) >= 2:
            diff = transition_diff(
                rprofiles[0], rprofiles[1], alpha=config.alpha, top_t=config.top_actions,
            )
            try:
                projection = project_resources(
                    rprofiles, top_m=config.top_resources, r=config.pca_components,
                )
            except TooFewResources:
                projection = None
        manifest["outputs"] += write_compare_outputs(
            rprofiles, diff, projection, vocab.names(), out_dir
        )
    except Exception as exc:
        fail("compare", exc)
    record("compare", t0, resources=len(rprofiles))

    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    manifest["outputs"].append("manifest.json")
    return manifest
