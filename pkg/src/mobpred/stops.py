"""Stops, places and the next-place stop sequence."""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from ._io import metadata_line, open_text, skip_metadata
from .discretize import GeoPoint, haversine_array
from .kernels import EARTH_RADIUS_M

STOP_COLUMNS = ("t_start", "t_end", "lat", "lon", "place_label")


@dataclass(frozen=True)
class Stop:
    user_id: str
    t_start: int
    t_end: int
    centroid: GeoPoint
    n_samples: int
    place: int | None = None

    @property
    def duration_s(self) -> int:
        return self.t_end - self.t_start


@dataclass
class StopSequence:
    user_id: str
    stops: list = field(default_factory=list)

    def __len__(self):
        return len(self.stops)

    def __iter__(self):
        return iter(self.stops)

    def __getitem__(self, i):
        return self.stops[i]

    @property
    def n_places(self) -> int:
        return len({s.place for s in self.stops})

    def places(self):
        return [s.place for s in self.stops]

    @property
    def t_start(self):
        return np.asarray([s.t_start for s in self.stops], dtype=np.int64)


def extract_stops(samples, delta_m: float = 50.0, min_duration_s: int = 900,
                  gap_s: int = 1800, join: str = "centroid") -> list[Stop]:
    """Group consecutive fixes into dwell stops.

    A fix joins the forming stop when it lies within ``delta_m`` of the stop's
    running median centroid (``join="previous"``: of the previous fix) and
    follows the previous fix by at most ``gap_s``. Stops lasting
    ``min_duration_s`` or less are dropped.
    """
    if join not in ("centroid", "previous"):
        raise ValueError(f"unknown join rule {join!r}")
    t = np.ascontiguousarray(samples.t, dtype=np.int64)
    if t.shape[0] == 0:
        return []
    lat = np.ascontiguousarray(samples.lat, dtype=np.float64)
    lon = np.ascontiguousarray(samples.lon, dtype=np.float64)
    starts, ends = kernels.greedy_stops(t, lat, lon, float(delta_m), int(gap_s),
                                        join == "centroid")
    uid = getattr(samples, "user_id", "")
    out = []
    for a, b in zip(starts.tolist(), ends.tolist()):
        t0, t1 = int(t[a]), int(t[b - 1])
        if t1 - t0 <= min_duration_s:
            continue
        centroid = GeoPoint(float(np.median(lat[a:b])), float(np.median(lon[a:b])))
        out.append(Stop(uid, t0, t1, centroid, b - a))
    return out


def _unit_vectors(lat, lon):
    phi = np.radians(lat)
    lmb = np.radians(lon)
    return np.column_stack([np.cos(phi) * np.cos(lmb), np.cos(phi) * np.sin(lmb), np.sin(phi)])


def neighbor_lists(lat, lon, eps_m: float):
    """Indices within ``eps_m`` (haversine, inclusive) of each point, self excluded."""
    n = len(lat)
    nbrs = [[] for _ in range(n)]
    if n < 2:
        return nbrs
    lat = np.asarray(lat, float)
    lon = np.asarray(lon, float)
    # chord length is monotone in arc length; pad the radius and re-check exactly
    chord = 2.0 * math.sin(min(math.pi, eps_m / EARTH_RADIUS_M) / 2.0)
    tree = cKDTree(_unit_vectors(lat, lon))
    pairs = tree.query_pairs(chord * (1 + 1e-9) + 1e-12, output_type="ndarray")
    if pairs.shape[0]:
        d = haversine_array(lat[pairs[:, 0]], lon[pairs[:, 0]], lat[pairs[:, 1]], lon[pairs[:, 1]])
        pairs = pairs[d <= eps_m]
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    for i, j in pairs.tolist():
        nbrs[i].append(j)
        nbrs[j].append(i)
    for lst in nbrs:
        lst.sort()
    return nbrs


def dbscan(lat, lon, eps_m: float = 50.0, min_pts: int = 2) -> np.ndarray:
    """DBSCAN on geographic points with the haversine metric.

    ``min_pts`` counts the point itself. Returns cluster ids in discovery
    order, -1 for noise.
    """
    nbrs = neighbor_lists(lat, lon, eps_m)
    n = len(nbrs)
    core = [len(nb) + 1 >= min_pts for nb in nbrs]
    labels = np.full(n, -1, dtype=np.int64)
    cid = 0
    for p in range(n):
        if labels[p] != -1 or not core[p]:
            continue
        labels[p] = cid
        queue = deque([p])
        while queue:
            q = queue.popleft()
            for nb in nbrs[q]:
                if labels[nb] == -1:
                    labels[nb] = cid
                    if core[nb]:
                        queue.append(nb)
        cid += 1
    return labels


def cluster_places(stops, eps_m: float = 50.0, min_pts: int = 2) -> list[Stop]:
    """Assign a place label to every stop.

    Stops are clustered by centroid; every noise stop becomes a singleton
    place. Labels are dense and numbered in order of first visit.
    """
    stops = list(stops)
    if not stops:
        return []
    lat = np.asarray([s.centroid.lat for s in stops])
    lon = np.asarray([s.centroid.lon for s in stops])
    raw = dbscan(lat, lon, eps_m, min_pts)
    mapping = {}
    out = []
    for s, c in zip(stops, raw.tolist()):
        key = ("c", c) if c >= 0 else ("n", len(out))
        if key not in mapping:
            mapping[key] = len(mapping)
        out.append(replace(s, place=mapping[key]))
    return out


def merge_consecutive(stops, user_id: str | None = None) -> StopSequence:
    """Collapse runs of stops at the same place into one stop."""
    stops = list(stops)
    uid = user_id if user_id is not None else (stops[0].user_id if stops else "")
    merged = []
    i = 0
    while i < len(stops):
        j = i + 1
        while j < len(stops) and stops[j].place == stops[i].place:
            j += 1
        run = stops[i:j]
        if len(run) == 1:
            merged.append(run[0])
        else:
            centroid = GeoPoint(float(np.median([s.centroid.lat for s in run])),
                                float(np.median([s.centroid.lon for s in run])))
            merged.append(Stop(run[0].user_id, run[0].t_start, run[-1].t_end, centroid,
                               sum(s.n_samples for s in run), run[0].place))
        i = j
    return StopSequence(uid, merged)


def detect_stop_sequence(samples, delta_m: float = 50.0, min_duration_s: int = 900,
                         gap_s: int = 1800, eps_m: float = 50.0, min_pts: int = 2,
                         join: str = "centroid") -> StopSequence:
    """Samples to merged stop-at-place sequence."""
    raw = extract_stops(samples, delta_m, min_duration_s, gap_s, join)
    seq = merge_consecutive(cluster_places(raw, eps_m, min_pts),
                            user_id=getattr(samples, "user_id", ""))
    return relabel_by_first_visit(seq)


def relabel_by_first_visit(seq: StopSequence) -> StopSequence:
    mapping = {}
    for s in seq.stops:
        mapping.setdefault(s.place, len(mapping))
    return StopSequence(seq.user_id, [replace(s, place=mapping[s.place]) for s in seq.stops])


def stops_per_day(seq, window=None, tz_offset_s: int = 0):
    """Mean and population standard deviation of daily stop counts.

    Days run from the window's first to last calendar day (or the first and
    last stop when no window is given); a stop counts on the day it starts.
    """
    starts = np.asarray([s.t_start for s in seq], dtype=np.int64)
    if window is not None:
        d0 = (window.start + tz_offset_s) // 86400
        d1 = (window.end - 1 + tz_offset_s) // 86400
    elif starts.size:
        d0 = (starts.min() + tz_offset_s) // 86400
        d1 = (starts.max() + tz_offset_s) // 86400
    else:
        return float("nan"), float("nan")
    days = (starts + tz_offset_s) // 86400 - d0
    days = days[(days >= 0) & (days <= d1 - d0)]
    counts = np.bincount(days, minlength=int(d1 - d0 + 1)).astype(float)
    return float(counts.mean()), float(counts.std())


def write_stop_sequence(seq, path, meta=None) -> None:
    with open_text(path, "w") as fh:
        if meta:
            fh.write(metadata_line(meta))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STOP_COLUMNS)
        for s in seq:
            w.writerow((s.t_start, s.t_end, repr(s.centroid.lat), repr(s.centroid.lon),
                        "" if s.place is None else s.place))


def read_stop_sequence(path, user_id: str = "") -> StopSequence:
    stops = []
    with open_text(path) as fh:
        for rec in csv.DictReader(skip_metadata(fh)):
            place = int(rec["place_label"]) if rec["place_label"] != "" else None
            stops.append(Stop(user_id, int(rec["t_start"]), int(rec["t_end"]),
                              GeoPoint(float(rec["lat"]), float(rec["lon"])), 0, place))
    return StopSequence(user_id, stops)
