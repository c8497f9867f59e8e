"""Seeded synthetic access-log generator with ground-truth bookkeeping.

Emits Apache combined-format lines that parse and map back exactly to
the label sequences it generated, so the whole pipeline can be verified
end to end without real traffic. Users are drawn from behavior
archetypes: either a first-order chain over the action vocabulary or a
fixed per-session label template. Two default archetypes replay the
same labels in cyclic versus block order, which gives them identical
page-view vectors but clearly different fitted stationary vectors; that
contrast is what the stationary-versus-pageview validation leans on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .actions import ActionVocabulary, RuleSet, default_ruleset
from .logs import RequestRecord, format_log_line

__all__ = [
    "VocabularyMismatch",
    "ArchetypeSpec",
    "GroundTruth",
    "UserTruth",
    "generate_synthetic_log",
    "default_archetypes",
    "load_archetypes_json",
    "HUMAN_USERAGENTS",
    "BOT_USERAGENTS",
]


class VocabularyMismatch(ValueError):
    """Archetype state space does not line up with the ruleset vocabulary."""


@dataclass
class ArchetypeSpec:
    """One behavior archetype.

    ``transition_profile`` is the archetype's true chain (row-stochastic
    over the full vocabulary; rows of states the archetype never leaves
    from may be zero). When ``session_template`` is set, sessions replay
    that label pattern verbatim instead of sampling the chain; the
    profile then documents the pattern's transition frequencies.

    ``session_length`` and ``sessions_per_user`` are distributions given
    as ("constant", k), ("uniform", lo, hi) or ("geometric", mean).
    ``resource_affinity`` weights the ontology acronym drawn per session.
    """

    name: str
    transition_profile: np.ndarray
    session_length: tuple = ("geometric", 10.0)
    sessions_per_user: tuple = ("constant", 2)
    resource_affinity: dict[str, float] = field(default_factory=dict)
    start_distribution: np.ndarray | None = None
    session_template: list[int] | None = None


@dataclass
class UserTruth:
    """What the generator actually emitted for one user."""

    archetype: int
    sequence: list[int]          # BREAK-joined label sequence
    session_lengths: list[int]
    action_count: int            # non-BREAK tokens
    resources: dict[str, int]    # acronym -> attributed action count


@dataclass
class GroundTruth:
    archetype_names: list[str]
    users: dict[str, UserTruth]
    per_resource: dict[str, int]
    human_lines: int
    bot_lines: int
    seed: int

    def save(self, path: str | Path) -> None:
        payload = {
            "archetype_names": self.archetype_names,
            "seed": self.seed,
            "human_lines": self.human_lines,
            "bot_lines": self.bot_lines,
            "per_resource": self.per_resource,
            "users": {
                ip: {
                    "archetype": t.archetype,
                    "sequence": t.sequence,
                    "session_lengths": t.session_lengths,
                    "action_count": t.action_count,
                    "resources": t.resources,
                }
                for ip, t in self.users.items()
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path: str | Path) -> "GroundTruth":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        users = {
            ip: UserTruth(
                archetype=u["archetype"],
                sequence=u["sequence"],
                session_lengths=u["session_lengths"],
                action_count=u["action_count"],
                resources=u["resources"],
            )
            for ip, u in payload["users"].items()
        }
        return cls(
            archetype_names=payload["archetype_names"],
            users=users,
            per_resource=payload["per_resource"],
            human_lines=payload["human_lines"],
            bot_lines=payload["bot_lines"],
            seed=payload["seed"],
        )


HUMAN_USERAGENTS = (
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/52.0 Safari/537.36",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_11) AppleWebKit/601.7 (KHTML, like Gecko) Version/9.1 Safari/601.7",
    "Mozilla/5.0 (X11; Linux x86_64; rv:45.0) Gecko/20100101 Firefox/45.0",
    "Mozilla/5.0 (Windows NT 6.1; WOW64; Trident/7.0; rv:11.0) like Gecko",
)

BOT_USERAGENTS = (
    "Mozilla/5.0 (compatible; Googlebot/2.1; +http://www.google.com/bot.html)",
    "Mozilla/5.0 (compatible; bingbot/2.0; +http://www.bing.com/bingbot.htm)",
    "Mozilla/5.0 (compatible; YandexBot/3.0; +http://yandex.com/bots)",
    "python-requests/2.9.1",
    "curl/7.47.0",
)

_BOT_PATHS = (
    "/robots.txt",
    "/",
    "/ontologies",
    "/ontologies/SNOMEDCT",
    "/favicon.ico",
    "/assets/site.css",
    "/search",
)

# per-label path emitters; {acr} is the ontology acronym, {k} a numeric id
_PATH_TEMPLATES = {
    "Browse Main Page": ("GET", "/"),
    "Browse Ontologies": ("GET", "/ontologies"),
    "Browse Search": ("GET", "/search"),
    "Browse Help": ("GET", "/help"),
    "Browse Mappings": ("GET", "/mappings"),
    "Browse Recommender": ("GET", "/recommender"),
    "Browse Annotator": ("GET", "/annotator"),
    "Browse Resource Index": ("GET", "/resource_index"),
    "Browse Projects": ("GET", "/projects"),
    "Browse Notes": ("GET", "/notes"),
    "Ontology Summary": ("GET", "/ontologies/{acr}"),
    "Browse Ontology Classes": ("GET", "/ontologies/{acr}/classes"),
    "Browse Ontology Class": ("GET", "/ontologies/{acr}/classes/C{k}"),
    "Browse Ontology Class Tree": ("GET", "/ontologies/{acr}/tree"),
    "Browse Ontology Mappings": ("GET", "/ontologies/{acr}/mappings"),
    "Ontology Analytics": ("GET", "/ontologies/{acr}/analytics"),
    "Browse Ontology Widgets": ("GET", "/ontologies/{acr}/widgets"),
    "Browse Ontology Visualization": ("GET", "/ontologies/{acr}/visualize"),
    "Browse Ontology Notes": ("GET", "/ontologies/{acr}/notes"),
    "Browse Ontology Properties": ("GET", "/ontologies/{acr}/properties"),
    "Browse Widgets": ("GET", "/widgets"),
    "Browse Ontology Property Tree": ("GET", "/ontologies/{acr}/properties/tree"),
    "Browse Class Notes": ("GET", "/ontologies/{acr}/notes/N{k}"),
    "Create Ontology Submission": ("GET", "/ontologies/{acr}/submissions/new"),
    "Validate Ontology File": ("GET", "/validator"),
    "Virtual Appliance Download": ("GET", "/virtual_appliance"),
    "Browse Ontology Submission": ("GET", "/ontologies/{acr}/submissions"),
    "Login": ("GET", "/login"),
    "Log-Out": ("GET", "/logout"),
    "Sign-Up": ("GET", "/accounts/new"),
    "Lost Password": ("GET", "/lost_pass"),
    "Browse Account": ("GET", "/accounts"),
    "Feedback": ("GET", "/feedback"),
}

_WINDOW_START = int(datetime(2016, 1, 1, tzinfo=timezone.utc).timestamp())
_WINDOW_DAYS = 30
INTRA_GAP = (5, 120)       # seconds between requests inside a session
INTER_GAP = (1900, 7200)   # seconds between sessions, always above 30 min


def _draw(dist: tuple, rng: np.random.Generator) -> int:
    kind = dist[0]
    if kind == "constant":
        return int(dist[1])
    if kind == "uniform":
        return int(rng.integers(int(dist[1]), int(dist[2]) + 1))
    if kind == "geometric":
        mean = float(dist[1])
        if mean < 1.0:
            raise ValueError("geometric mean must be >= 1")
        return int(rng.geometric(1.0 / mean))
    raise ValueError(f"unknown distribution {dist!r}")


def _check_archetype(spec: ArchetypeSpec, vocab: ActionVocabulary) -> None:
    profile = np.asarray(spec.transition_profile, dtype=np.float64)
    if profile.shape != (vocab.n, vocab.n):
        raise VocabularyMismatch(
            f"archetype {spec.name!r}: profile is {profile.shape}, vocabulary has {vocab.n} states"
        )
    rowsums = profile.sum(axis=1)
    live = rowsums > 0
    if not np.allclose(rowsums[live], 1.0, atol=1e-9):
        raise VocabularyMismatch(f"archetype {spec.name!r}: live rows must sum to 1")
    if spec.session_template is not None:
        for lab in spec.session_template:
            if not 0 <= lab < vocab.n:
                raise VocabularyMismatch(
                    f"archetype {spec.name!r}: template label {lab} outside vocabulary"
                )
    elif not live.any():
        raise VocabularyMismatch(
            f"archetype {spec.name!r}: chain has no live rows and no template"
        )


def _verify_paths(ruleset: RuleSet) -> dict[int, tuple[str, str]]:
    """Check every emitted path maps back to its intended label."""
    vocab = ruleset.vocabulary
    emitters: dict[int, tuple[str, str]] = {}
    for label in vocab:
        if label.name == "BREAK":
            continue
        if label.name not in _PATH_TEMPLATES:
            raise VocabularyMismatch(f"no path template for label {label.name!r}")
        method, template = _PATH_TEMPLATES[label.name]
        probe = template.format(acr="PROBE", k=7)
        hit = ruleset.match(method, probe)
        if hit is None or hit[0] != label.id:
            got = vocab[hit[0]].name if hit else None
            raise VocabularyMismatch(
                f"path {probe!r} maps to {got!r}, expected {label.name!r}"
            )
        emitters[label.id] = (method, template)
    return emitters


def _session_labels(
    spec: ArchetypeSpec,
    rng: np.random.Generator,
    vocab: ActionVocabulary,
) -> list[int]:
    if spec.session_template is not None:
        return list(spec.session_template)
    length = max(1, _draw(spec.session_length, rng))
    profile = np.asarray(spec.transition_profile, dtype=np.float64)
    if spec.start_distribution is not None:
        start_p = np.asarray(spec.start_distribution, dtype=np.float64)
        state = int(rng.choice(vocab.n, p=start_p / start_p.sum()))
    else:
        # start from the profile's stationary-ish row mass
        mass = profile.sum(axis=0)
        state = int(rng.choice(vocab.n, p=mass / mass.sum()))
    labels = [state]
    for _ in range(length - 1):
        row = profile[state]
        total = row.sum()
        if total <= 0:
            break
        state = int(rng.choice(vocab.n, p=row / total))
        labels.append(state)
    return labels


def generate_synthetic_log(
    archetypes: list[ArchetypeSpec],
    users_per_archetype: int,
    seed: int = 0,
    bot_fraction: float = 0.0,
    path: str | Path | None = None,
    ruleset: RuleSet | None = None,
) -> tuple[list[str], GroundTruth]:
    """Generate a combined-format log plus its ground truth.

    Deterministic for a fixed seed (byte-identical output). Lines are
    interleaved across users in timestamp order; intra-session gaps stay
    below 30 minutes and inter-session gaps above it. Bot lines carry
    blacklisted user agents and make up ``bot_fraction`` of all lines.
    When ``path`` is given the lines are also written there (gzip when
    the name ends in .gz).
    """
    if not 0.0 <= bot_fraction < 1.0:
        raise ValueError("bot_fraction must lie in [0, 1)")
    rs = ruleset or default_ruleset()
    vocab = rs.vocabulary
    for spec in archetypes:
        _check_archetype(spec, vocab)
    emitters = _verify_paths(rs)
    break_id = vocab.break_id

    rng = np.random.default_rng(seed)
    entries: list[tuple[int, int, int, str]] = []  # (ts, stream, seq, line)
    users: dict[str, UserTruth] = {}
    per_resource: dict[str, int] = {}
    stream = 0

    for ai, spec in enumerate(archetypes):
        resources = sorted(spec.resource_affinity) or ["MISC"]
        weights = np.array(
            [spec.resource_affinity.get(rname, 1.0) for rname in resources], dtype=np.float64
        )
        weights = weights / weights.sum()
        for u in range(users_per_archetype):
            ip = f"10.{ai + 1}.{u // 250}.{u % 250 + 1}"
            ua = HUMAN_USERAGENTS[int(rng.integers(len(HUMAN_USERAGENTS)))]
            n_sessions = max(1, _draw(spec.sessions_per_user, rng))
            ts = _WINDOW_START + int(rng.integers(0, _WINDOW_DAYS * 86400))
            sequence: list[int] = []
            session_lengths: list[int] = []
            truth_resources: dict[str, int] = {}
            seq_no = 0
            stream += 1
            for s in range(n_sessions):
                if s:
                    ts += int(rng.integers(*INTER_GAP))
                    sequence.append(break_id)
                acr = resources[int(rng.choice(len(resources), p=weights))]
                labels = _session_labels(spec, rng, vocab)
                session_lengths.append(len(labels))
                for i, lab in enumerate(labels):
                    if i:
                        ts += int(rng.integers(*INTRA_GAP))
                    method, template = emitters[lab]
                    p = template.format(acr=acr, k=int(rng.integers(1, 100000)))
                    record = RequestRecord(
                        ip=ip,
                        timestamp=datetime.fromtimestamp(ts, tz=timezone.utc),
                        method=method,
                        path=p,
                        query="",
                        status=200,
                        useragent=ua,
                    )
                    line = format_log_line(record, size=int(rng.integers(200, 6000)))
                    entries.append((ts, stream, seq_no, line))
                    seq_no += 1
                    sequence.append(lab)
                    if "{acr}" in template:
                        truth_resources[acr] = truth_resources.get(acr, 0) + 1
            users[ip] = UserTruth(
                archetype=ai,
                sequence=sequence,
                session_lengths=session_lengths,
                action_count=len(sequence) - sequence.count(break_id),
                resources=truth_resources,
            )
            for acr, cnt in truth_resources.items():
                per_resource[acr] = per_resource.get(acr, 0) + cnt

    human_lines = len(entries)
    n_bots = int(round(human_lines * bot_fraction / (1.0 - bot_fraction))) if bot_fraction else 0
    for b in range(n_bots):
        ts = _WINDOW_START + int(rng.integers(0, _WINDOW_DAYS * 86400))
        ip = f"192.0.2.{b % 250 + 1}"
        ua = BOT_USERAGENTS[int(rng.integers(len(BOT_USERAGENTS)))]
        p = _BOT_PATHS[int(rng.integers(len(_BOT_PATHS)))]
        record = RequestRecord(
            ip=ip,
            timestamp=datetime.fromtimestamp(ts, tz=timezone.utc),
            method="GET",
            path=p,
            query="",
            status=200,
            useragent=ua,
        )
        entries.append((ts, stream + 1 + b, 0, format_log_line(record, size=256)))

    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    lines = [e[3] for e in entries]
    truth = GroundTruth(
        archetype_names=[spec.name for spec in archetypes],
        users=users,
        per_resource=per_resource,
        human_lines=human_lines,
        bot_lines=n_bots,
        seed=seed,
    )
    if path is not None:
        path = Path(path)
        if str(path).endswith(".gz"):
            import gzip

            with gzip.open(path, "wt", encoding="utf-8") as fh:
                fh.write("\n".join(lines) + "\n")
        else:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("\n".join(lines) + "\n")
    return lines, truth


def _chain(vocab: ActionVocabulary, rows: dict[str, dict[str, float]]) -> np.ndarray:
    profile = np.zeros((vocab.n, vocab.n))
    for src, targets in rows.items():
        i = vocab.id_of(src)
        for dst, w in targets.items():
            profile[i, vocab.id_of(dst)] = w
        profile[i] /= profile[i].sum()
    return profile


def _template_profile(vocab: ActionVocabulary, template: list[int]) -> np.ndarray:
    profile = np.zeros((vocab.n, vocab.n))
    for a, b in zip(template[:-1], template[1:]):
        profile[a, b] += 1.0
    rowsums = profile.sum(axis=1, keepdims=True)
    np.divide(profile, rowsums, out=profile, where=rowsums > 0)
    return profile


def _start(vocab: ActionVocabulary, name: str) -> np.ndarray:
    p = np.zeros(vocab.n)
    p[vocab.id_of(name)] = 1.0
    return p


def default_archetypes(vocabulary: ActionVocabulary | None = None) -> list[ArchetypeSpec]:
    """Seven archetypes shaped after the behavior types a repository sees.

    "Class Explorers" and "Specific Class Browsers" replay the same
    three labels with identical per-session counts, one cyclically and
    one in blocks, making them the order-only-distinct pair.
    """
    vocab = vocabulary or default_ruleset().vocabulary
    cyc = [
        vocab.id_of("Ontology Summary"),
        vocab.id_of("Browse Ontology Classes"),
        vocab.id_of("Browse Ontology Class"),
    ] * 12
    blk = (
        [vocab.id_of("Ontology Summary")] * 12
        + [vocab.id_of("Browse Ontology Classes")] * 12
        + [vocab.id_of("Browse Ontology Class")] * 12
    )
    return [
        ArchetypeSpec(
            name="Main Page Visitors",
            transition_profile=_chain(vocab, {
                "Browse Main Page": {"Browse Main Page": 0.6, "Browse Ontologies": 0.25, "Browse Help": 0.15},
                "Browse Ontologies": {"Browse Main Page": 0.7, "Browse Ontologies": 0.3},
                "Browse Help": {"Browse Main Page": 0.8, "Browse Help": 0.2},
            }),
            session_length=("geometric", 6.0),
            sessions_per_user=("constant", 2),
            resource_affinity={},
            start_distribution=_start(vocab, "Browse Main Page"),
        ),
        ArchetypeSpec(
            name="Ontology Overview Visitors",
            transition_profile=_chain(vocab, {
                "Browse Ontologies": {"Ontology Summary": 0.8, "Browse Ontologies": 0.2},
                "Ontology Summary": {"Ontology Summary": 0.5, "Browse Ontologies": 0.3, "Ontology Analytics": 0.2},
                "Ontology Analytics": {"Ontology Summary": 0.6, "Browse Ontologies": 0.4},
            }),
            session_length=("geometric", 9.0),
            sessions_per_user=("constant", 2),
            resource_affinity={"NCIT": 0.4, "GO": 0.3, "MESH": 0.3},
            start_distribution=_start(vocab, "Browse Ontologies"),
        ),
        ArchetypeSpec(
            name="Class Explorers",
            transition_profile=_template_profile(vocab, cyc),
            session_length=("constant", len(cyc)),
            sessions_per_user=("constant", 1),
            resource_affinity={"CPT": 0.5, "SNOMEDCT": 0.3, "RXNORM": 0.2},
            session_template=cyc,
        ),
        ArchetypeSpec(
            name="Specific Class Browsers",
            transition_profile=_template_profile(vocab, blk),
            session_length=("constant", len(blk)),
            sessions_per_user=("constant", 1),
            resource_affinity={"CPT": 0.5, "SNOMEDCT": 0.3, "RXNORM": 0.2},
            session_template=blk,
        ),
        ArchetypeSpec(
            name="Ontology Tree Explorers",
            transition_profile=_chain(vocab, {
                "Ontology Summary": {"Browse Ontology Class Tree": 0.7, "Browse Ontology Classes": 0.3},
                "Browse Ontology Class Tree": {"Browse Ontology Class Tree": 0.6, "Browse Ontology Class": 0.3, "Ontology Summary": 0.1},
                "Browse Ontology Class": {"Browse Ontology Class Tree": 0.7, "Browse Ontology Class": 0.3},
                "Browse Ontology Classes": {"Browse Ontology Class Tree": 0.8, "Browse Ontology Classes": 0.2},
            }),
            session_length=("geometric", 20.0),
            sessions_per_user=("constant", 2),
            resource_affinity={"CPT": 0.6, "GO": 0.4},
            start_distribution=_start(vocab, "Ontology Summary"),
        ),
        ArchetypeSpec(
            name="Search Explorers",
            transition_profile=_chain(vocab, {
                "Browse Search": {"Browse Search": 0.45, "Browse Ontology Class": 0.55},
                "Browse Ontology Class": {"Browse Search": 0.75, "Browse Ontology Class": 0.25},
            }),
            session_length=("geometric", 15.0),
            sessions_per_user=("constant", 3),
            resource_affinity={"RXNORM": 0.6, "MEDDRA": 0.4},
            start_distribution=_start(vocab, "Browse Search"),
        ),
        ArchetypeSpec(
            name="BioPortal Experts",
            transition_profile=_chain(vocab, {
                "Browse Annotator": {"Browse Annotator": 0.5, "Browse Recommender": 0.3, "Browse Mappings": 0.2},
                "Browse Recommender": {"Browse Annotator": 0.4, "Browse Recommender": 0.3, "Browse Ontology Mappings": 0.3},
                "Browse Mappings": {"Browse Mappings": 0.4, "Browse Annotator": 0.4, "Browse Search": 0.2},
                "Browse Ontology Mappings": {"Browse Ontology Mappings": 0.5, "Browse Mappings": 0.5},
                "Browse Search": {"Browse Annotator": 0.6, "Browse Search": 0.4},
            }),
            session_length=("geometric", 12.0),
            sessions_per_user=("constant", 2),
            resource_affinity={"LOINC": 0.5, "NDFRT": 0.5},
            start_distribution=_start(vocab, "Browse Annotator"),
        ),
    ]


def load_archetypes_json(path: str | Path, vocabulary: ActionVocabulary | None = None) -> list[ArchetypeSpec]:
    """Load archetypes from a JSON config.

    Schema per archetype: name, rows (label -> {label: weight}) or
    template (list of label names), session_length, sessions_per_user
    (distribution arrays like ["geometric", 10]), resource_affinity,
    optional start label name.
    """
    vocab = vocabulary or default_ruleset().vocabulary
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    specs = []
    for item in payload:
        template = None
        if "template" in item:
            template = [vocab.id_of(name) for name in item["template"]]
            profile = _template_profile(vocab, template)
        else:
            profile = _chain(vocab, item["rows"])
        start = _start(vocab, item["start"]) if "start" in item else None
        specs.append(
            ArchetypeSpec(
                name=item["name"],
                transition_profile=profile,
                session_length=tuple(item.get("session_length", ("geometric", 10.0))),
                sessions_per_user=tuple(item.get("sessions_per_user", ("constant", 2))),
                resource_affinity=dict(item.get("resource_affinity", {})),
                start_distribution=start,
                session_template=template,
            )
        )
    return specs
