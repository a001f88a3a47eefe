"""Trajectory and context-event ingestion, plus completeness-window selection."""
from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from ._io import as_text_stream, metadata_line, open_text, skip_metadata

log = logging.getLogger(__name__)

SAMPLE_COLUMNS = ("user_id", "timestamp", "lat", "lon", "accuracy")
EVENT_COLUMNS = ("user_id", "timestamp", "kind", "payload")
EVENT_KINDS = ("sms_in", "sms_out", "call_in", "call_out", "bt_scan")

BIN_S = 900
COMPLETENESS = 0.9
MIN_LENGTH_S = 90 * 86400


class FormatError(ValueError):
    """The input file cannot be interpreted at all (bad or missing header)."""


@dataclass(frozen=True)
class LocationSample:
    user_id: str
    timestamp: int
    lat: float
    lon: float
    accuracy_m: float


@dataclass(frozen=True)
class ContextEvent:
    user_id: str
    timestamp: int
    kind: str
    payload: str = ""


@dataclass(frozen=True)
class TimeWindow:
    start: int
    end: int
    completeness: float

    @property
    def length_s(self) -> int:
        return self.end - self.start


@dataclass
class Samples:
    """Time-sorted location fixes of one user, stored column-wise."""

    user_id: str
    t: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    accuracy: np.ndarray

    def __len__(self):
        return int(self.t.shape[0])

    def __iter__(self):
        for ts, la, lo, ac in zip(self.t.tolist(), self.lat.tolist(), self.lon.tolist(),
                                  self.accuracy.tolist()):
            yield LocationSample(self.user_id, ts, la, lo, ac)

    def take(self, mask) -> "Samples":
        return Samples(self.user_id, self.t[mask], self.lat[mask], self.lon[mask],
                       self.accuracy[mask])

    @classmethod
    def from_arrays(cls, user_id, t, lat, lon, accuracy=None) -> "Samples":
        t = np.asarray(t, dtype=np.int64)
        if accuracy is None:
            accuracy = np.zeros(t.shape[0])
        return cls(user_id, t, np.asarray(lat, float), np.asarray(lon, float),
                   np.asarray(accuracy, float))

    @classmethod
    def from_records(cls, user_id, records) -> "Samples":
        records = list(records)
        return cls.from_arrays(user_id, [r.timestamp for r in records], [r.lat for r in records],
                               [r.lon for r in records], [r.accuracy_m for r in records])


@dataclass
class Events:
    """Context events of one user, sorted by timestamp."""

    user_id: str
    t: np.ndarray
    kind: np.ndarray
    payload: np.ndarray

    def __len__(self):
        return int(self.t.shape[0])

    def __iter__(self):
        for ts, k, p in zip(self.t.tolist(), self.kind.tolist(), self.payload.tolist()):
            yield ContextEvent(self.user_id, ts, k, p)

    def take(self, mask) -> "Events":
        return Events(self.user_id, self.t[mask], self.kind[mask], self.payload[mask])

    @classmethod
    def empty(cls, user_id="") -> "Events":
        return cls(user_id, np.zeros(0, np.int64), np.zeros(0, dtype=object),
                   np.zeros(0, dtype=object))

    @classmethod
    def from_records(cls, user_id, records) -> "Events":
        records = sorted(records, key=lambda e: e.timestamp)
        return cls(user_id, np.asarray([e.timestamp for e in records], dtype=np.int64),
                   np.asarray([e.kind for e in records], dtype=object),
                   np.asarray([e.payload for e in records], dtype=object))


@dataclass
class ParseResult:
    by_user: dict
    n_rejected: int = 0
    reasons: Counter = field(default_factory=Counter)


def _check_header(fieldnames, required):
    if fieldnames is None:
        raise FormatError("missing CSV header")
    missing = [c for c in required if c not in fieldnames]
    if missing:
        raise FormatError(f"CSV header lacks columns: {', '.join(missing)}")


def parse_samples(stream) -> ParseResult:
    """Parse a trajectory CSV into per-user, time-sorted :class:`Samples`.

    Rows that cannot be parsed or fall outside the coordinate ranges are
    dropped and tallied by reason. Duplicate timestamps keep the fix with the
    smallest accuracy value.
    """
    fh = as_text_stream(stream)
    reader = csv.DictReader(skip_metadata(fh))
    _check_header(reader.fieldnames, SAMPLE_COLUMNS)
    cols = {}
    reasons = Counter()
    for row in reader:
        try:
            uid = row["user_id"]
            ts = int(row["timestamp"])
            la = float(row["lat"])
            lo = float(row["lon"])
            ac = float(row["accuracy"])
        except (TypeError, ValueError):
            reasons["unparseable"] += 1
            continue
        if not uid:
            reasons["no_user"] += 1
        elif not (-90.0 <= la <= 90.0) or not (-180.0 < lo <= 180.0):
            reasons["out_of_range"] += 1
        elif not (ac >= 0.0) or math.isinf(ac):
            reasons["bad_accuracy"] += 1
        else:
            c = cols.setdefault(uid, ([], [], [], []))
            c[0].append(ts)
            c[1].append(la)
            c[2].append(lo)
            c[3].append(ac)
    by_user = {}
    for uid, (ts, la, lo, ac) in cols.items():
        t = np.asarray(ts, dtype=np.int64)
        acc = np.asarray(ac, dtype=float)
        order = np.lexsort((acc, t))
        t = t[order]
        keep = np.ones(t.shape[0], dtype=bool)
        keep[1:] = t[1:] != t[:-1]
        idx = order[keep]
        by_user[uid] = Samples(uid, t[keep], np.asarray(la, float)[idx],
                               np.asarray(lo, float)[idx], acc[idx])
    n_rej = sum(reasons.values())
    if n_rej:
        log.info("rejected %d trajectory rows: %s", n_rej, dict(reasons))
    return ParseResult(by_user, n_rej, reasons)


def parse_events(stream) -> ParseResult:
    """Parse a context-event CSV into per-user :class:`Events`."""
    fh = as_text_stream(stream)
    reader = csv.DictReader(skip_metadata(fh))
    _check_header(reader.fieldnames, EVENT_COLUMNS)
    recs = {}
    reasons = Counter()
    for row in reader:
        try:
            ts = int(row["timestamp"])
        except (TypeError, ValueError):
            reasons["unparseable"] += 1
            continue
        kind = row["kind"]
        payload = row["payload"] or ""
        if kind not in EVENT_KINDS:
            reasons["unknown_kind"] += 1
        elif kind == "bt_scan" and not payload:
            reasons["empty_payload"] += 1
        else:
            uid = row["user_id"]
            recs.setdefault(uid, []).append(
                ContextEvent(uid, ts, kind, payload if kind == "bt_scan" else ""))
    by_user = {uid: Events.from_records(uid, r) for uid, r in recs.items()}
    return ParseResult(by_user, sum(reasons.values()), reasons)


def write_samples(by_user, path, meta=None) -> None:
    """Write samples in the trajectory CSV format (floats round-trip exactly)."""
    with open_text(path, "w") as fh:
        if meta:
            fh.write(metadata_line(meta))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_COLUMNS)
        for uid in sorted(by_user):
            s = by_user[uid]
            for ts, la, lo, ac in zip(s.t.tolist(), s.lat.tolist(), s.lon.tolist(),
                                      s.accuracy.tolist()):
                w.writerow((uid, ts, repr(la), repr(lo), repr(ac)))


def write_events(by_user, path, meta=None) -> None:
    with open_text(path, "w") as fh:
        if meta:
            fh.write(metadata_line(meta))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for uid in sorted(by_user):
            for e in by_user[uid]:
                w.writerow((uid, e.timestamp, e.kind, e.payload))


def _timestamps(samples):
    if hasattr(samples, "t"):
        return np.asarray(samples.t, dtype=np.int64)
    return np.asarray([s.timestamp for s in samples], dtype=np.int64)


def select_complete_window(samples, bin_s: int = BIN_S, threshold: float = COMPLETENESS,
                           min_length_s: int = MIN_LENGTH_S) -> TimeWindow | None:
    """Longest bin-aligned window whose fraction of occupied bins is >= threshold.

    The bin lattice is anchored at the Unix epoch and spans the first to the
    last occupied bin. Ties go to the earliest start. Returns None when no
    window reaches ``min_length_s``.
    """
    if bin_s <= 0:
        raise ValueError("bin_s must be positive")
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    t = _timestamps(samples)
    if t.shape[0] == 0:
        return None
    bins = np.unique(t // bin_s)
    first = int(bins[0])
    occupied = np.zeros(int(bins[-1]) - first + 1, dtype=np.int64)
    occupied[bins - first] = 1
    frac = Fraction(threshold).limit_denominator(10**6)
    weights = frac.denominator * occupied - frac.numerator
    start, length = kernels.longest_nonneg_window(weights)
    start, length = int(start), int(length)
    if length <= 0 or length * bin_s < min_length_s:
        return None
    completeness = float(occupied[start:start + length].mean())
    return TimeWindow((first + start) * bin_s, (first + start + length) * bin_s, completeness)


def filter_to_window(records, window: TimeWindow | None):
    """Keep records with ``window.start <= timestamp < window.end``, order preserved."""
    if hasattr(records, "take") and hasattr(records, "t"):
        if window is None:
            return records.take(np.zeros(len(records), dtype=bool))
        t = records.t
        return records.take((t >= window.start) & (t < window.end))
    if window is None:
        return []
    return [r for r in records if window.start <= r.timestamp < window.end]


def read_samples(path) -> ParseResult:
    with open_text(path) as fh:
        return parse_samples(fh)


def read_events(path) -> ParseResult:
    with open_text(path) as fh:
        return parse_events(fh)
