"""Raw ping parsing and active-user filtering."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable, Iterator, NamedTuple

logger = logging.getLogger(__name__)

PING_COLUMNS = ["user_id", "timestamp", "lat", "lon", "status"]
STATUSES = frozenset({"healthy", "infected", "unknown"})


class CorruptInputError(ValueError):
    """Raised when a ping file is mostly unparseable or lacks the expected header."""


class Ping(NamedTuple):
    user_id: str
    timestamp: float  # UTC seconds since epoch
    lat: float
    lon: float
    status: str


@dataclass(frozen=True)
class StudyWindow:
    start: float
    end: float
    min_records: int = 30

    def __post_init__(self) -> None:
        if not self.start < self.end:
            raise ValueError("study window start must precede end")
        if self.min_records < 1:
            raise ValueError("min_records must be >= 1")

    @classmethod
    def from_iso(cls, start: str, end: str, min_records: int = 30) -> "StudyWindow":
        return cls(parse_timestamp(start), parse_timestamp(end), min_records)


def parse_timestamp(text: str) -> float:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(ts: float) -> str:
    dt = datetime.fromtimestamp(ts, tz=timezone.utc)
    if dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_row(row: list[str]) -> Ping | None:
    if len(row) != 5:
        return None
    user_id, ts, lat, lon, status = row
    try:
        timestamp = parse_timestamp(ts)
        lat_f = float(lat)
        lon_f = float(lon)
    except ValueError:
        return None
    if not user_id or status not in STATUSES:
        return None
    if not (math.isfinite(lat_f) and math.isfinite(lon_f)) or abs(lat_f) > 90 or abs(lon_f) > 180:
        return None
    return Ping(user_id, timestamp, lat_f, lon_f, status)


class PingReader:
    """Iterates pings from a CSV stream, counting malformed rows as it goes.

    ``skipped`` and ``total`` are final once iteration is exhausted.
    """

    def __init__(self, source: IO[str] | IO[bytes]):
        if isinstance(source.read(0), bytes):
            source = io.TextIOWrapper(source, encoding="utf-8", newline="")
        self._source = source
        self.skipped = 0
        self.total = 0

    def __iter__(self) -> Iterator[Ping]:
        reader = csv.reader(self._source)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PING_COLUMNS:
            raise CorruptInputError(f"expected header {','.join(PING_COLUMNS)}, got {header}")
        for row in reader:
            if not row:
                continue
            self.total += 1
            ping = _parse_row(row)
            if ping is None:
                self.skipped += 1
                continue
            yield ping
        if self.total and self.skipped * 2 > self.total:
            raise CorruptInputError(f"{self.skipped} of {self.total} rows malformed")
        if self.skipped:
            logger.warning("skipped %d malformed rows of %d", self.skipped, self.total)


def parse_pings(source: IO[str] | IO[bytes]) -> tuple[list[Ping], int]:
    """Parse a ping CSV. Returns the pings in file order and the skip count."""
    reader = PingReader(source)
    pings = list(reader)
    return pings, reader.skipped


def read_pings(path: str | Path) -> tuple[list[Ping], int]:
    with open(path, newline="") as fh:
        return parse_pings(fh)


def filter_active(pings: Iterable[Ping], w: StudyWindow) -> dict[str, list[Ping]]:
    """Keep in-window pings of users with at least ``w.min_records`` of them.

    Each user's list is sorted by timestamp; the sort is stable so ties keep
    input order.
    """
    by_user: dict[str, list[Ping]] = defaultdict(list)
    for p in pings:
        if w.start <= p.timestamp < w.end:
            by_user[p.user_id].append(p)
    out = {}
    for user, plist in by_user.items():
        if len(plist) >= w.min_records:
            plist.sort(key=lambda p: p.timestamp)
            out[user] = plist
    return out


def ingest_stats(total_records: int, total_users: int, active: dict[str, list[Ping]], skipped: int) -> dict:
    return {
        "total_records": total_records,
        "total_users": total_users,
        "active_users": len(active),
        "skipped_rows": skipped,
    }


def write_pings(pings: Iterable[Ping], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PING_COLUMNS)
    for p in pings:
        w.writerow((p.user_id, format_timestamp(p.timestamp), f"{p.lat:.7f}", f"{p.lon:.7f}", p.status))


def write_trajectories(trajectories: dict[str, list[Ping]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        write_pings((p for user in sorted(trajectories) for p in trajectories[user]), fh)


def read_trajectories(path: str | Path) -> dict[str, list[Ping]]:
    pings, _ = read_pings(path)
    out: dict[str, list[Ping]] = defaultdict(list)
    for p in pings:
        out[p.user_id].append(p)
    for plist in out.values():
        plist.sort(key=lambda p: p.timestamp)
    return dict(out)


def write_stats(stats: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
