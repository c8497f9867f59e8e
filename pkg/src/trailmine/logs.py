"""Access-log parsing and traffic filtering.

Parses Apache "combined" (default) or "common" format lines into
:class:`RequestRecord` values, and drops non-human traffic with
user-agent / IP blacklists plus static-asset path patterns.
"""

from __future__ import annotations

import gzip
import ipaddress
import re
from calendar import timegm
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator
from urllib.parse import quote, unquote

__all__ = [
    "MalformedLine",
    "InvalidTimestamp",
    "RequestRecord",
    "FilterConfig",
    "CompiledFilter",
    "parse_log_line",
    "format_log_line",
    "filter_requests",
    "iter_log_records",
    "open_log",
    "load_list_file",
    "default_filter_config",
    "DEFAULT_UA_BLACKLIST",
    "DEFAULT_IP_BLACKLIST",
    "DEFAULT_ASSET_PATTERNS",
]

_DATA_DIR = Path(__file__).parent / "data"
DEFAULT_UA_BLACKLIST = _DATA_DIR / "ua_blacklist.txt"
DEFAULT_IP_BLACKLIST = _DATA_DIR / "ip_blacklist.txt"
DEFAULT_ASSET_PATTERNS = _DATA_DIR / "asset_patterns.txt"


class MalformedLine(ValueError):
    """Line does not match the configured log grammar."""


class InvalidTimestamp(MalformedLine):
    """Timestamp field does not denote a valid instant."""


# host ident authuser [timestamp] "request" status bytes ["referer" "useragent"]
_COMBINED_RE = re.compile(
    r'^(\S+) (\S+) (\S+) \[([^\]]+)\] "([^"]*)" (\d{3}) (\S+) "([^"]*)" "([^"]*)"\s*$'
)
_COMMON_RE = re.compile(
    r'^(\S+) (\S+) (\S+) \[([^\]]+)\] "([^"]*)" (\d{3}) (\S+)\s*$'
)

_MONTHS = {
    "Jan": 1, "Feb": 2, "Mar": 3, "Apr": 4, "May": 5, "Jun": 6,
    "Jul": 7, "Aug": 8, "Sep": 9, "Oct": 10, "Nov": 11, "Dec": 12,
}
_MONTH_NAMES = ("Jan", "Feb", "Mar", "Apr", "May", "Jun",
                "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")

# (year, month) -> epoch seconds of the first of that month; log files span
# few distinct months so this cache makes timestamp parsing a dict lookup.
_MONTH_EPOCH: dict[tuple[int, int], int] = {}


def parse_clf_timestamp(ts: str) -> int:
    """Parse ``14/Mar/2016:09:07:32 -0700`` into UTC epoch seconds."""
    try:
        day = int(ts[0:2])
        mon = _MONTHS[ts[3:6]]
        year = int(ts[7:11])
        hh = int(ts[12:14])
        mm = int(ts[15:17])
        ss = int(ts[18:20])
        sign = ts[21]
        off = int(ts[22:24]) * 3600 + int(ts[24:26]) * 60
    except (ValueError, KeyError, IndexError) as exc:
        raise InvalidTimestamp(f"bad timestamp field: {ts!r}") from exc
    if not (1 <= day <= 31 and hh < 24 and mm < 60 and ss < 61):
        raise InvalidTimestamp(f"bad timestamp field: {ts!r}")
    if sign == "-":
        off = -off
    elif sign != "+":
        raise InvalidTimestamp(f"bad timezone offset in: {ts!r}")
    key = (year, mon)
    base = _MONTH_EPOCH.get(key)
    if base is None:
        base = timegm((year, mon, 1, 0, 0, 0))
        _MONTH_EPOCH[key] = base
    return base + (day - 1) * 86400 + hh * 3600 + mm * 60 + ss - off


@dataclass(frozen=True, slots=True)
class RequestRecord:
    """One parsed access-log line.

    ``path`` is percent-decoded and always starts with ``/``; ``query`` is
    kept raw (may be empty). ``timestamp`` is normalized to UTC.
    """

    ip: str
    timestamp: datetime
    method: str
    path: str
    query: str
    status: int
    useragent: str

    @property
    def epoch(self) -> int:
        return int(self.timestamp.timestamp())


def _split_request(request: str) -> tuple[str, str, str]:
    """Split the quoted request field into (method, raw_path, query)."""
    parts = request.split(" ")
    if len(parts) != 3:
        raise MalformedLine(f"bad request field: {request!r}")
    method, target = parts[0], parts[1]
    if not method or not method.isascii() or not method.isupper():
        raise MalformedLine(f"bad method token: {method!r}")
    raw_path, _, query = target.partition("?")
    if not raw_path.startswith("/"):
        raise MalformedLine(f"request target is not a path: {target!r}")
    return method, raw_path, query


def parse_log_line(line: str, log_format: str = "combined") -> RequestRecord:
    """Parse one log line into a :class:`RequestRecord`.

    Raises :class:`MalformedLine` (or its subclass
    :class:`InvalidTimestamp`) on anything that does not match the
    grammar; callers doing bulk ingestion count and skip those.
    """
    if log_format == "combined":
        m = _COMBINED_RE.match(line)
    elif log_format == "common":
        m = _COMMON_RE.match(line)
    else:
        raise ValueError(f"unknown log format: {log_format!r}")
    if m is None:
        raise MalformedLine(f"unparsable line: {line[:120]!r}")
    g = m.groups()
    epoch = parse_clf_timestamp(g[3])
    method, raw_path, query = _split_request(g[4])
    path = unquote(raw_path) if "%" in raw_path else raw_path
    return RequestRecord(
        ip=g[0],
        timestamp=datetime.fromtimestamp(epoch, tz=timezone.utc),
        method=method,
        path=path,
        query=query,
        status=int(g[5]),
        useragent=g[8] if log_format == "combined" else "",
    )


def format_log_line(
    record: RequestRecord,
    size: int = 512,
    referer: str = "-",
    protocol: str = "HTTP/1.1",
) -> str:
    """Render a record back into one combined-format log line.

    Inverse of :func:`parse_log_line` for records whose user agent
    contains no double quotes (true for everything this package emits).
    """
    ts = record.timestamp.astimezone(timezone.utc)
    stamp = (
        f"{ts.day:02d}/{_MONTH_NAMES[ts.month - 1]}/{ts.year:04d}:"
        f"{ts.hour:02d}:{ts.minute:02d}:{ts.second:02d} +0000"
    )
    target = quote(record.path, safe="/")
    if record.query:
        target += "?" + record.query
    return (
        f'{record.ip} - - [{stamp}] "{record.method} {target} {protocol}" '
        f'{record.status} {size} "{referer}" "{record.useragent}"'
    )


@dataclass
class FilterConfig:
    """Blacklists and asset patterns that define non-interaction traffic.

    ``useragent_blacklist`` holds case-insensitive substrings,
    ``ip_blacklist`` exact addresses or CIDR blocks, and
    ``drop_asset_patterns`` regexes matched against the decoded path.
    """

    useragent_blacklist: list[str] = field(default_factory=list)
    ip_blacklist: list[str] = field(default_factory=list)
    drop_asset_patterns: list[str] = field(default_factory=list)

    def compile(self) -> "CompiledFilter":
        return CompiledFilter(self)


class CompiledFilter:
    """Compiled form of :class:`FilterConfig`, shareable across workers.

    User agents and paths repeat heavily in real logs, so verdicts are
    memoized (the path cache is capped; it resets when full).
    """

    _PATH_CACHE_MAX = 1 << 18

    def __init__(self, cfg: FilterConfig):
        self.config = cfg
        self._ua_needles = tuple(s.lower() for s in cfg.useragent_blacklist)
        exact = set()
        nets = []
        for entry in cfg.ip_blacklist:
            if "/" in entry:
                try:
                    nets.append(ipaddress.ip_network(entry, strict=False))
                except ValueError as exc:
                    raise ValueError(f"bad IP blacklist entry {entry!r}") from exc
            else:
                exact.add(entry)
        self._ip_exact = frozenset(exact)
        self._ip_nets = tuple(nets)
        self._asset_re = None
        if cfg.drop_asset_patterns:
            for pat in cfg.drop_asset_patterns:
                try:
                    re.compile(pat)
                except re.error as exc:
                    raise ValueError(f"asset pattern {pat!r} does not compile") from exc
            joined = "|".join(f"(?:{p})" for p in cfg.drop_asset_patterns)
            self._asset_re = re.compile(joined)
        self._ua_cache: dict[str, bool] = {}
        self._path_cache: dict[str, bool] = {}

    def _ua_dropped(self, useragent: str) -> bool:
        verdict = self._ua_cache.get(useragent)
        if verdict is None:
            low = useragent.lower()
            verdict = any(needle in low for needle in self._ua_needles)
            self._ua_cache[useragent] = verdict
        return verdict

    def _asset_dropped(self, path: str) -> bool:
        verdict = self._path_cache.get(path)
        if verdict is None:
            if len(self._path_cache) >= self._PATH_CACHE_MAX:
                self._path_cache.clear()
            verdict = self._asset_re.search(path) is not None
            self._path_cache[path] = verdict
        return verdict

    def drop_reason(self, useragent: str, ip: str, path: str) -> str | None:
        """Return "useragent" / "ip" / "asset" for dropped traffic, else None."""
        if self._ua_needles and self._ua_dropped(useragent):
            return "useragent"
        if ip in self._ip_exact:
            return "ip"
        if self._ip_nets:
            try:
                addr = ipaddress.ip_address(ip)
            except ValueError:
                addr = None
            if addr is not None and any(addr in net for net in self._ip_nets):
                return "ip"
        if self._asset_re is not None and self._asset_dropped(path):
            return "asset"
        return None

    def keep(self, record: RequestRecord) -> bool:
        return self.drop_reason(record.useragent, record.ip, record.path) is None


def filter_requests(
    records: Iterable[RequestRecord],
    cfg: FilterConfig | CompiledFilter,
) -> Iterator[RequestRecord]:
    """Yield the records that survive the blacklists, preserving order."""
    filt = cfg if isinstance(cfg, CompiledFilter) else cfg.compile()
    for record in records:
        if filt.keep(record):
            yield record


def load_list_file(path: str | Path) -> list[str]:
    """Read one entry per line; blank lines and ``#`` comments are skipped."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                entries.append(line)
    return entries


def default_filter_config() -> FilterConfig:
    """The blacklists shipped with the package."""
    return FilterConfig(
        useragent_blacklist=load_list_file(DEFAULT_UA_BLACKLIST),
        ip_blacklist=load_list_file(DEFAULT_IP_BLACKLIST),
        drop_asset_patterns=load_list_file(DEFAULT_ASSET_PATTERNS),
    )


def open_log(path: str | Path):
    """Open a plain or gzip-compressed log file for text reading."""
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rt", encoding="utf-8", errors="replace")
    return open(path, encoding="utf-8", errors="replace")


def iter_log_records(
    lines: Iterable[str],
    log_format: str = "combined",
    malformed: list[int] | None = None,
) -> Iterator[RequestRecord]:
    """Parse a line stream, skipping malformed lines.

    When ``malformed`` is given, its single element is incremented per
    skipped line, so callers can report the count.
    """
    for line in lines:
        try:
            yield parse_log_line(line, log_format)
        except MalformedLine:
            if malformed is not None:
                malformed[0] += 1
