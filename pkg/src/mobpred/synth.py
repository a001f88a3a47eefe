"""Synthetic stop sequences from an exploration / preferential-return process.

The generator is test scaffolding: its constants are chosen so that the
downstream pipeline can be checked end to end, not fitted to any dataset.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._io import metadata_line, open_text
from .discretize import GeoPoint, haversine_array, METERS_PER_DEGREE
from .ingest import ContextEvent, Events, Samples
from .stops import Stop, StopSequence

TRUTH_COLUMNS = ("stop_index", "place_label", "is_exploration")
COPENHAGEN = (55.60, 12.40, 55.75, 12.65)
START_TS = 1378080000  # Monday 2013-09-02 00:00 UTC


class RegionTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class EprParams:
    """Generator settings.

    ``rho`` and ``gamma`` set the exploration probability
    ``min(1, rho * S**-gamma)`` for ``S`` known places. Optional structure:
    ``routine`` is the probability that a return follows a weekly schedule
    (home / work / a third anchor keyed on the current stop's start time), and
    gateway places raise the chance that the next stop is an exploration.
    """

    rho: float = 0.6
    gamma: float = 0.21
    n_stops: int = 2000
    stay_pareto_alpha: float = 0.18
    region: tuple = COPENHAGEN
    seed: int = 0
    stay_min_s: int = 900
    stay_max_s: int = 12 * 3600
    travel_min_s: int = 300
    travel_max_s: int = 1500
    min_spacing_m: float = 150.0
    n_seed_places: int = 1
    n_gateways: int = 0
    gateway_explore: float = 0.8
    gateway_weight: float = 1.0
    routine: float = 0.0
    start_ts: int = START_TS
    tz_offset_s: int = 3600
    max_place_attempts: int = 2000

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.n_stops < 0 or self.stay_pareto_alpha <= 0:
            raise ValueError("invalid n_stops or stay_pareto_alpha")
        if self.routine > 0 and self.n_seed_places < 3:
            raise ValueError("routine structure needs at least 3 seeded places")
        if not 0 <= self.routine <= 1 or not 0 <= self.gateway_explore <= 1:
            raise ValueError("probabilities must lie in [0, 1]")


@dataclass
class SyntheticTrace:
    params: EprParams
    user_id: str
    t_start: np.ndarray
    t_end: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    place: np.ndarray
    is_exploration: np.ndarray
    place_lat: np.ndarray = field(repr=False, default=None)
    place_lon: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return int(self.place.shape[0])

    def to_stop_sequence(self) -> StopSequence:
        return StopSequence(self.user_id, [
            Stop(self.user_id, int(a), int(b), GeoPoint(float(la), float(lo)), 0, int(p))
            for a, b, la, lo, p in zip(self.t_start, self.t_end, self.lat, self.lon, self.place)])


def _schedule_target(t: int, tz_offset_s: int) -> int:
    local = t + tz_offset_s
    weekday = (local // 86400 + 3) % 7
    hour = (local % 86400) // 3600
    if weekday < 5 and 6 <= hour < 12:
        return 1
    if weekday < 5 and 12 <= hour < 17:
        return 2
    return 0


def _new_location(rng, params, plat, plon, n):
    lat0, lon0, lat1, lon1 = params.region
    for _ in range(params.max_place_attempts):
        la = rng.uniform(lat0, lat1)
        lo = rng.uniform(lon0, lon1)
        if n == 0 or haversine_array(la, lo, plat[:n], plon[:n]).min() >= params.min_spacing_m:
            return la, lo
    raise RegionTooSmall(
        f"no free location {params.min_spacing_m} m from {n} places after "
        f"{params.max_place_attempts} attempts")


def _stay(rng, params) -> int:
    raw = params.stay_min_s * (1.0 + rng.pareto(params.stay_pareto_alpha))
    return int(max(params.stay_min_s + 1, math.ceil(min(raw, params.stay_max_s))))


def epr_generate(params: EprParams, user_id: str = "u0") -> SyntheticTrace:
    """Draw ``params.n_stops`` stops; the same params always give the same trace."""
    rng = np.random.default_rng(params.seed)
    n = params.n_stops
    cap = max(16, n + 1)
    plat = np.zeros(cap)
    plon = np.zeros(cap)
    visits = np.zeros(cap)
    n_fixed = params.n_seed_places + params.n_gateways
    is_gateway = np.zeros(cap, dtype=bool)
    is_gateway[params.n_seed_places:n_fixed] = True
    place = np.zeros(n, dtype=np.int64)
    explored = np.zeros(n, dtype=np.int8)
    t_start = np.zeros(n, dtype=np.int64)
    t_end = np.zeros(n, dtype=np.int64)
    n_places = 0
    cur = -1
    t = int(params.start_ts)
    for k in range(n):
        if n_places < n_fixed:
            explore = True
        elif n_places == 1 and cur == 0:
            explore = True
        else:
            if is_gateway[cur]:
                p_new = params.gateway_explore
            else:
                p_new = min(1.0, params.rho * n_places ** (-params.gamma))
            explore = rng.random() < p_new
        if explore:
            plat[n_places], plon[n_places] = _new_location(rng, params, plat, plon, n_places)
            nxt = n_places
            n_places += 1
        else:
            nxt = -1
            if params.routine > 0 and rng.random() < params.routine:
                nxt = _schedule_target(int(t_start[k - 1]), params.tz_offset_s)
                if nxt == cur:
                    nxt = -1
            if nxt < 0:
                w = visits[:n_places].copy()
                w[is_gateway[:n_places]] *= params.gateway_weight
                w[cur] = 0.0
                nxt = int(rng.choice(n_places, p=w / w.sum()))
        visits[nxt] += 1
        place[k] = nxt
        explored[k] = int(explore)
        stay = _stay(rng, params)
        t_start[k] = t
        t_end[k] = t + stay
        t = t + stay + int(rng.integers(params.travel_min_s, params.travel_max_s + 1))
        cur = nxt
    return SyntheticTrace(params, user_id, t_start, t_end, plat[place].copy(), plon[place].copy(),
                          place, explored, plat[:n_places].copy(), plon[:n_places].copy())


def expand_to_samples(trace: SyntheticTrace, bin_s: int = 900, jitter_m: float = 10.0,
                      seed=None) -> Samples:
    """One fix per time bin touched by each stay; nothing while travelling.

    The first fix of a stay is at arrival and the last at departure, so the
    observed stop duration equals the generated one. Positions get isotropic
    Gaussian noise with standard deviation ``jitter_m`` meters.
    """
    if len(trace) == 0:
        return Samples.from_arrays(trace.user_id, [], [], [], [])
    ts, te = trace.t_start, trace.t_end
    b0 = ts // bin_s
    count = (te - 1) // bin_s - b0 + 1
    stop_idx = np.repeat(np.arange(ts.shape[0]), count)
    offs = np.arange(stop_idx.shape[0]) - np.repeat(np.cumsum(count) - count, count)
    times = np.where(offs == 0, ts[stop_idx], (b0[stop_idx] + offs) * bin_s)
    last = (offs == count[stop_idx] - 1) & (count[stop_idx] >= 2)
    times = np.where(last, te[stop_idx], times)
    lat = trace.lat[stop_idx].astype(float)
    lon = trace.lon[stop_idx].astype(float)
    if jitter_m > 0:
        rng = np.random.default_rng([trace.params.seed if seed is None else seed, 7])
        noise = rng.normal(0.0, jitter_m, size=(2, lat.shape[0]))
        lat = lat + noise[0] / METERS_PER_DEGREE
        lon = lon + noise[1] / (METERS_PER_DEGREE * np.cos(np.radians(lat)))
    acc = np.full(lat.shape[0], float(max(jitter_m, 5.0)))
    return Samples(trace.user_id, times.astype(np.int64), lat, lon, acc)


def synth_events(trace: SyntheticTrace, seed=None, sms_per_h: float = 0.4,
                 calls_per_h: float = 0.15, bin_s: int = 900) -> Events:
    """Poisson SMS/call activity plus Bluetooth scans from per-place device pools."""
    rng = np.random.default_rng([trace.params.seed if seed is None else seed, 11])
    recs = []
    if len(trace):
        t0, t1 = int(trace.t_start[0]), int(trace.t_end[-1])
        hours = (t1 - t0) / 3600.0
        for kind, rate in (("sms_in", sms_per_h), ("sms_out", sms_per_h),
                           ("call_in", calls_per_h), ("call_out", calls_per_h)):
            for ts in np.sort(rng.integers(t0, t1 + 1, size=rng.poisson(rate * hours))).tolist():
                recs.append(ContextEvent(trace.user_id, ts, kind, ""))
        scans = expand_to_samples(trace, bin_s, jitter_m=0.0)
        stop_of = np.searchsorted(trace.t_start, scans.t, side="right") - 1
        for ts, k in zip(scans.t.tolist(), stop_of.tolist()):
            p = int(trace.place[k])
            pool = 1 + p % 4
            for d in range(int(rng.integers(0, pool + 1))):
                recs.append(ContextEvent(trace.user_id, ts, "bt_scan", f"p{p}d{d}"))
    return Events.from_records(trace.user_id, recs)


def write_truth(trace: SyntheticTrace, path, meta=None) -> None:
    with open_text(path, "w") as fh:
        if meta:
            fh.write(metadata_line(meta))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_COLUMNS)
        for i, (p, e) in enumerate(zip(trace.place.tolist(), trace.is_exploration.tolist())):
            w.writerow((i, p, e))


def params_dict(params: EprParams) -> dict:
    d = asdict(params)
    d["region"] = list(d["region"])
    return d


def stop_recovery(truth: StopSequence, found: StopSequence) -> dict:
    """Share of true stops recovered with exact timing and consistent place grouping.

    A true stop is recovered when some detected stop has the same start and
    end. It is correctly grouped when the true-place / detected-label pairing
    over all recovered stops is one-to-one for its place.
    """
    by_interval = {(s.t_start, s.t_end): s.place for s in found}
    pairs = []
    for s in truth:
        lab = by_interval.get((s.t_start, s.t_end))
        if lab is not None:
            pairs.append((s.place, lab))
    fwd, back = {}, {}
    for tp, lab in pairs:
        fwd.setdefault(tp, set()).add(lab)
        back.setdefault(lab, set()).add(tp)
    grouped = sum(1 for tp, lab in pairs if len(fwd[tp]) == 1 and len(back[lab]) == 1)
    n = len(truth)
    return {"n_true": n, "n_found": len(found), "recovered": len(pairs),
            "correctly_grouped": grouped,
            "recovery": grouped / n if n else float("nan")}
