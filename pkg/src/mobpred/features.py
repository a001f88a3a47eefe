"""Contextual features per stop transition and their sparse encoding."""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import astuple, dataclass, fields

import numpy as np

from ._io import metadata_line, open_text
from .discretize import GeoPoint, haversine_m
from .predictors import OnlineSoftmaxModel, PredictionReport, _report

DEFAULT_TZ_OFFSET_S = 3600
CONTEXT_SPAN_S = 1800

FEATURE_NAMES = (
    "location", "hour", "weekhour", "weekday", "weekend", "explore_before", "explore_now",
    "home", "d_from_home", "sms_received_30min", "sms_sent_30min", "calls_received_30min",
    "calls_sent_30min", "bt_entropy_30min", "bt_unique_30min",
)
CATEGORICAL = frozenset({"location", "hour", "weekhour", "weekday"})
BINARY = frozenset({"weekend", "explore_before", "explore_now", "home"})
NUMERIC = frozenset(FEATURE_NAMES) - CATEGORICAL - BINARY
NEXT_PLACE_FEATURES = tuple(n for n in FEATURE_NAMES if not n.startswith("explore_"))
EXPLORATION_FEATURES = FEATURE_NAMES

_COUNT_KINDS = (("sms_received_30min", "sms_in"), ("sms_sent_30min", "sms_out"),
                ("calls_received_30min", "call_in"), ("calls_sent_30min", "call_out"))


@dataclass(frozen=True)
class FeatureVector:
    location: int
    hour: int
    weekhour: int
    weekday: int
    weekend: int
    explore_before: int
    explore_now: int
    home: int
    d_from_home: float
    sms_received_30min: int
    sms_sent_30min: int
    calls_received_30min: int
    calls_sent_30min: int
    bt_entropy_30min: float
    bt_unique_30min: int


@dataclass(frozen=True)
class FeatureRow:
    features: FeatureVector
    next_place: int
    explored_next: int


def parse_feature_set(spec, available=FEATURE_NAMES):
    """``"all"`` or ``"location+weekhour"`` style names to a tuple of features."""
    if isinstance(spec, (tuple, list)):
        names = tuple(spec)
    elif spec == "all":
        names = tuple(available)
    else:
        names = tuple(p for p in spec.split("+") if p)
    unknown = [n for n in names if n not in FEATURE_NAMES]
    if unknown or not names:
        raise ValueError(f"unknown feature(s): {', '.join(unknown) or '(empty)'}")
    return names


def home_place(seq) -> int:
    """Most visited place; ties by longer total stay, then the smaller label."""
    stops = list(seq)
    if not stops:
        raise ValueError("empty stop sequence has no home")
    count = Counter(s.place for s in stops)
    dur = Counter()
    for s in stops:
        dur[s.place] += s.t_end - s.t_start
    return min(count, key=lambda p: (-count[p], -dur[p], p))


def bt_entropy(device_ids) -> float:
    """Shannon entropy in bits of the scanned-device distribution."""
    counts = np.asarray(list(Counter(device_ids).values()), dtype=float)
    if counts.size == 0:
        return 0.0
    p = counts / counts.sum()
    return float(max(0.0, -(p * np.log2(p)).sum()))


def time_features(t: int, tz_offset_s: int = DEFAULT_TZ_OFFSET_S):
    """(hour, weekday, weekhour, weekend) of a timestamp in a fixed-offset zone."""
    local = int(t) + tz_offset_s
    weekday = (local // 86400 + 3) % 7  # 1970-01-01 was a Thursday
    hour = (local % 86400) // 3600
    return hour, weekday, weekday * 24 + hour, int(weekday >= 5)


def _window_slice(times, t, span):
    lo = np.searchsorted(times, t - span, side="right")
    hi = np.searchsorted(times, t, side="right")
    return lo, hi


def context_counts(events, t: int, span: int = CONTEXT_SPAN_S) -> dict:
    """Event-derived features over the half-open window ``(t - span, t]``."""
    out = {name: 0 for name, _ in _COUNT_KINDS}
    out["bt_entropy_30min"] = 0.0
    out["bt_unique_30min"] = 0
    if events is None or len(events) == 0:
        return out
    lo, hi = _window_slice(events.t, t, span)
    kinds = events.kind[lo:hi]
    for name, kind in _COUNT_KINDS:
        out[name] = int(np.count_nonzero(kinds == kind))
    devices = events.payload[lo:hi][kinds == "bt_scan"].tolist()
    out["bt_entropy_30min"] = bt_entropy(devices)
    out["bt_unique_30min"] = len(set(devices))
    return out


def build_feature_rows(seq, events=None, tz_offset_s: int = DEFAULT_TZ_OFFSET_S):
    """One row per stop except the last; targets come from the following stop."""
    stops = list(seq)
    if len(stops) < 2:
        return []
    home = home_place(stops)
    home_stops = [s for s in stops if s.place == home]
    home_pt = GeoPoint(float(np.median([s.centroid.lat for s in home_stops])),
                       float(np.median([s.centroid.lon for s in home_stops])))
    seen = set()
    explore = []
    for s in stops:
        explore.append(int(s.place not in seen))
        seen.add(s.place)
    rows = []
    for i in range(len(stops) - 1):
        s = stops[i]
        hour, weekday, weekhour, weekend = time_features(s.t_start, tz_offset_s)
        at_home = int(s.place == home)
        ctx = context_counts(events, s.t_start)
        fv = FeatureVector(
            location=s.place, hour=hour, weekhour=weekhour, weekday=weekday, weekend=weekend,
            explore_before=explore[i - 1] if i > 0 else 0, explore_now=explore[i], home=at_home,
            d_from_home=0.0 if at_home else haversine_m(s.centroid, home_pt), **ctx)
        rows.append(FeatureRow(fv, stops[i + 1].place, explore[i + 1]))
    return rows


class FeatureEncoder:
    """Sparse encoding of :class:`FeatureVector` for the online linear models.

    Categorical features are one-hot, binary ones pass through, numeric ones
    are standardised with running mean and variance (updated before use).
    A constant bias feature is always present.
    """

    def __init__(self, feature_names=FEATURE_NAMES):
        self.names = parse_feature_set(feature_names)
        self.index = {"bias": 0}
        self._stats = {n: [0, 0.0, 0.0] for n in self.names if n in NUMERIC}

    def _key(self, key):
        idx = self.index.get(key)
        if idx is None:
            idx = self.index[key] = len(self.index)
        return idx

    def _standardize(self, name, x):
        st = self._stats[name]
        st[0] += 1
        delta = x - st[1]
        st[1] += delta / st[0]
        st[2] += delta * (x - st[1])
        var = st[2] / st[0]
        return (x - st[1]) / math.sqrt(var) if var > 0 else 0.0

    def transform(self, fv: FeatureVector):
        idx, val = [0], [1.0]
        for name in self.names:
            v = getattr(fv, name)
            if name in CATEGORICAL:
                idx.append(self._key((name, v)))
                val.append(1.0)
            elif name in BINARY:
                if v:
                    idx.append(self._key(name))
                    val.append(float(v))
            else:
                z = self._standardize(name, float(v))
                if z:
                    idx.append(self._key(name))
                    val.append(z)
        return np.asarray(idx, dtype=np.int64), np.asarray(val, dtype=float)


def evaluate_next_place(rows, feature_set="location", model=None) -> PredictionReport:
    """Online next-place accuracy of a softmax model on the given features."""
    enc = FeatureEncoder(parse_feature_set(feature_set, NEXT_PLACE_FEATURES))
    model = model if model is not None else OnlineSoftmaxModel()
    index, predicted, actual = [], [], []
    for i, row in enumerate(rows):
        guess = model.step(enc.transform(row.features), row.next_place)
        if guess is not None:
            # row i predicts stop i + 1
            index.append(i + 1)
            predicted.append(guess)
            actual.append(row.next_place)
    return _report(index, predicted, actual)


def write_feature_rows(rows, path, meta=None) -> None:
    names = [f.name for f in fields(FeatureVector)]
    with open_text(path, "w") as fh:
        if meta:
            fh.write(metadata_line(meta))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["next_place", "explored_next"])
        for r in rows:
            w.writerow(list(astuple(r.features)) + [r.next_place, r.explored_next])
