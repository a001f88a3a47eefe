"""Geodesic helpers and the next-cell symbol sequence."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .kernels import EARTH_RADIUS_M

METERS_PER_DEGREE = 111320.0
DEFAULT_FILL_LIMIT = 4


class GeoPoint(NamedTuple):
    lat: float
    lon: float


class CellId(NamedTuple):
    row: int
    col: int
    size_m: float


def haversine_m(a, b) -> float:
    """Great-circle distance in meters between two (lat, lon) points."""
    p1, p2 = math.radians(a[0]), math.radians(b[0])
    h = (math.sin((p2 - p1) / 2.0) ** 2
         + math.cos(p1) * math.cos(p2) * math.sin(math.radians(b[1] - a[1]) / 2.0) ** 2)
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(min(1.0, h)))


def haversine_array(lat1, lon1, lat2, lon2):
    """Vectorised haversine; arguments broadcast like numpy arrays."""
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    h = (np.sin((p2 - p1) / 2.0) ** 2
         + np.cos(p1) * np.cos(p2) * np.sin(np.radians(np.subtract(lon2, lon1)) / 2.0) ** 2)
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.minimum(1.0, h)))


def grid_cell(p, size_m: float, ref_lat: float) -> CellId:
    """Cell of an equirectangular grid anchored at (0, 0).

    Columns are scaled by ``cos(ref_lat)`` so cells are roughly square near
    the reference latitude.
    """
    if size_m <= 0:
        raise ValueError("size_m must be positive")
    if abs(ref_lat) >= 89:
        raise ValueError("ref_lat too close to a pole")
    row = math.floor(p[0] * METERS_PER_DEGREE / size_m)
    col = math.floor(p[1] * METERS_PER_DEGREE * math.cos(math.radians(ref_lat)) / size_m)
    return CellId(int(row), int(col), size_m)


def grid_cells(lat, lon, size_m: float, ref_lat: float):
    """Array form of :func:`grid_cell`; returns ``(rows, cols)``."""
    if size_m <= 0:
        raise ValueError("size_m must be positive")
    rows = np.floor(np.asarray(lat) * METERS_PER_DEGREE / size_m).astype(np.int64)
    cols = np.floor(np.asarray(lon) * METERS_PER_DEGREE * math.cos(math.radians(ref_lat))
                    / size_m).astype(np.int64)
    return rows, cols


@dataclass(frozen=True)
class CellSequence:
    """Grid cell visited in each time bin; ``valid`` is False where MISSING."""

    user_id: str
    bin_s: int
    size_m: float
    bins: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    valid: np.ndarray
    ref_lat: float = float("nan")
    fill_limit: int = DEFAULT_FILL_LIMIT

    def __len__(self):
        return int(self.bins.shape[0])

    @property
    def symbols(self):
        out = []
        for b, r, c, v in zip(self.bins.tolist(), self.rows.tolist(),
                              self.cols.tolist(), self.valid.tolist()):
            out.append((b, CellId(r, c, self.size_m) if v else None))
        return out

    def stream(self):
        """Symbols only, MISSING as None."""
        return [s for _, s in self.symbols]

    def codes(self):
        """Dense integer codes in order of first appearance, -1 for MISSING."""
        return encode_cells(self.rows, self.cols, self.valid)

    def self_transition_fraction(self) -> float:
        codes = self.codes()
        ok = (codes[1:] >= 0) & (codes[:-1] >= 0)
        if not ok.any():
            return float("nan")
        return float(np.mean(codes[1:][ok] == codes[:-1][ok]))


def encode_cells(rows, cols, valid):
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    valid = np.asarray(valid, dtype=bool)
    codes = np.full(rows.shape[0], -1, dtype=np.int64)
    if not valid.any():
        return codes
    pairs = np.stack([rows[valid], cols[valid]], axis=1)
    _, first, inverse = np.unique(pairs, axis=0, return_index=True, return_inverse=True)
    # relabel so that code order follows first appearance
    order = np.argsort(first, kind="stable")
    relabel = np.empty_like(order)
    relabel[order] = np.arange(order.shape[0])
    codes[valid] = relabel[inverse.ravel()]
    return codes


def build_cell_sequence(samples, window, bin_s: int = 900, size_m: float = 50.0,
                        fill_limit: int = DEFAULT_FILL_LIMIT, ref_lat: float | None = None,
                        user_id: str | None = None) -> CellSequence:
    """Turn windowed samples into one grid-cell symbol per time bin.

    Each bin takes the cell of its chronologically last sample. Empty bins
    repeat the previous symbol for at most ``fill_limit`` consecutive bins and
    are MISSING after that (or when nothing precedes them).
    """
    uid = user_id if user_id is not None else getattr(samples, "user_id", "")
    t = np.asarray(samples.t, dtype=np.int64)
    if t.shape[0] == 0 or window is None:
        empty = np.zeros(0, np.int64)
        return CellSequence(uid, bin_s, size_m, empty, empty, empty, np.zeros(0, bool),
                            fill_limit=fill_limit)
    lat = np.asarray(samples.lat, dtype=float)
    lon = np.asarray(samples.lon, dtype=float)
    if ref_lat is None:
        ref_lat = float(np.median(lat))
    first_bin = window.start // bin_s
    last_bin = -(-window.end // bin_s)
    n = int(last_bin - first_bin)
    rows_all, cols_all = grid_cells(lat, lon, size_m, ref_lat)
    slot = t // bin_s - first_bin
    inside = (slot >= 0) & (slot < n)
    slot = slot[inside]
    sample_idx = np.flatnonzero(inside)
    # samples are time-sorted, so the last write per slot is the latest sample
    source = np.full(n, -1, dtype=np.int64)
    source[slot] = sample_idx
    filled = kernels.fill_source(source, int(fill_limit))
    valid = filled >= 0
    safe = np.where(valid, filled, 0)
    rows = np.where(valid, rows_all[safe] if rows_all.size else 0, 0)
    cols = np.where(valid, cols_all[safe] if cols_all.size else 0, 0)
    bins = np.arange(first_bin, last_bin, dtype=np.int64)
    return CellSequence(uid, bin_s, size_m, bins, rows.astype(np.int64), cols.astype(np.int64),
                        valid, ref_lat=ref_lat, fill_limit=fill_limit)


def write_cell_sequence(seq: CellSequence, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_index", "row", "col"])
        for b, r, c, v in zip(seq.bins.tolist(), seq.rows.tolist(), seq.cols.tolist(),
                              seq.valid.tolist()):
            w.writerow([b, r, c] if v else [b, "", ""])


def read_cell_sequence(path, bin_s: int, size_m: float, user_id: str = "") -> CellSequence:
    bins, rows, cols, valid = [], [], [], []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            bins.append(int(rec["bin_index"]))
            ok = rec["row"] != ""
            valid.append(ok)
            rows.append(int(rec["row"]) if ok else 0)
            cols.append(int(rec["col"]) if ok else 0)
    return CellSequence(user_id, bin_s, size_m, np.asarray(bins, np.int64),
                        np.asarray(rows, np.int64), np.asarray(cols, np.int64),
                        np.asarray(valid, bool))
