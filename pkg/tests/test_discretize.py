import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mobpred.discretize import (CellId, GeoPoint, METERS_PER_DEGREE, build_cell_sequence,
                                grid_cell, grid_cells, haversine_array, haversine_m,
                                read_cell_sequence, write_cell_sequence)
from mobpred.ingest import Samples, TimeWindow
from oracles import cell_sequence_naive, law_of_cosines

lat_st = st.floats(-89.0, 89.0)
lon_st = st.floats(-179.9, 180.0)


def test_haversine_identity_and_antipode():
    p = GeoPoint(55.7, 12.5)
    assert haversine_m(p, p) == 0.0
    assert haversine_m(GeoPoint(0, 0), GeoPoint(0, 180)) == pytest.approx(math.pi * 6371000.0,
                                                                            rel=1e-12)


def test_haversine_against_law_of_cosines():
    d = haversine_m(GeoPoint(55.0, 12.0), GeoPoint(55.0, 12.001))
    assert d == pytest.approx(law_of_cosines(55.0, 12.0, 55.0, 12.001), rel=1e-6)


@given(lat_st, lon_st, lat_st, lon_st, lat_st, lon_st)
def test_haversine_metric_properties(a1, o1, a2, o2, a3, o3):
    a, b, c = GeoPoint(a1, o1), GeoPoint(a2, o2), GeoPoint(a3, o3)
    ab = haversine_m(a, b)
    assert ab >= 0 and ab == pytest.approx(haversine_m(b, a), abs=1e-6)
    assert ab <= haversine_m(a, c) + haversine_m(c, b) + 1e-6 * (1 + ab)


def test_haversine_array_matches_scalar(rng):
    la1, lo1, la2, lo2 = rng.uniform(-80, 80, (4, 100))
    arr = haversine_array(la1, lo1, la2, lo2)
    for k in range(100):
        assert arr[k] == pytest.approx(haversine_m(GeoPoint(la1[k], lo1[k]),
                                                   GeoPoint(la2[k], lo2[k])), rel=1e-12)


def test_grid_cell_examples():
    assert grid_cell(GeoPoint(0, 0), 123.0, 55.0) == CellId(0, 0, 123.0)
    c = grid_cell(GeoPoint(55.78, 12.52), 50, 55.78)
    assert c.row == math.floor(55.78 * 111320.0 / 50)
    assert c.col == math.floor(12.52 * 111320.0 * math.cos(math.radians(55.78)) / 50)
    with pytest.raises(ValueError):
        grid_cell(GeoPoint(0, 0), 0, 0)
    with pytest.raises(ValueError):
        grid_cell(GeoPoint(0, 0), 50, 89.5)


def test_cell_identity_includes_size():
    assert CellId(1, 2, 50.0) != CellId(1, 2, 500.0)
    assert CellId(1, 2, 50.0) == CellId(1, 2, 50.0)


def test_nearby_points_share_coarse_cell(rng):
    hits = 0
    for _ in range(200):
        p = GeoPoint(rng.uniform(55.6, 55.8), rng.uniform(12.3, 12.6))
        q = GeoPoint(p.lat + 10 / METERS_PER_DEGREE, p.lon)
        hits += grid_cell(p, 5000, 55.7) == grid_cell(q, 5000, 55.7)
    # a 10 m step crosses a 5 km row boundary with probability 1/500
    assert hits >= 195


def test_translation_increments_column(rng):
    ref = 55.7
    size = 50.0
    step = size / (METERS_PER_DEGREE * math.cos(math.radians(ref)))
    for _ in range(200):
        lon = rng.uniform(12.0, 12.8)
        frac = lon / step - math.floor(lon / step)
        if not 1e-6 < frac < 1 - 1e-6:
            continue
        a = grid_cell(GeoPoint(55.7, lon), size, ref)
        b = grid_cell(GeoPoint(55.7, lon + step), size, ref)
        assert b.col == a.col + 1 and b.row == a.row


def test_coarsening_nests(rng):
    lat = rng.uniform(-60, 60, 5000)
    lon = rng.uniform(-170, 170, 5000)
    r50, c50 = grid_cells(lat, lon, 50, 40.0)
    for big in (500, 5000):
        rb, cb = grid_cells(lat, lon, big, 40.0)
        k = big // 50
        assert np.array_equal(rb, np.floor_divide(r50, k))
        assert np.array_equal(cb, np.floor_divide(c50, k))


def samples(t, lat, lon):
    return Samples.from_arrays("u", t, lat, lon)


def test_constant_sequence():
    t = np.arange(0, 100 * 900, 900)
    seq = build_cell_sequence(samples(t, np.full(100, 55.7), np.full(100, 12.5)),
                              TimeWindow(0, 100 * 900, 1.0))
    stream = seq.stream()
    assert len(stream) == 100 and None not in stream and len(set(stream)) == 1


def test_fill_rule():
    t = np.array([0, 3 * 900])
    lat = np.array([55.7, 55.8])
    lon = np.array([12.5, 12.5])
    seq = build_cell_sequence(samples(t, lat, lon), TimeWindow(0, 4 * 900, 1.0), fill_limit=2)
    s = seq.stream()
    assert s[0] == s[1] == s[2] != s[3]
    seq = build_cell_sequence(samples(t, lat, lon), TimeWindow(0, 4 * 900, 1.0), fill_limit=1)
    assert seq.stream()[2] is None


def test_last_sample_in_bin_wins():
    t = np.array([0, 10, 20])
    lat = np.array([55.0, 56.0, 57.0])
    seq = build_cell_sequence(samples(t, lat, np.full(3, 12.0)), TimeWindow(0, 900, 1.0))
    assert seq.stream()[0] == grid_cell(GeoPoint(57.0, 12.0), 50, seq.ref_lat)
    assert seq.ref_lat == 56.0


def test_empty_input():
    seq = build_cell_sequence(samples([], [], []), TimeWindow(0, 900, 1.0))
    assert len(seq) == 0 and seq.stream() == []


@pytest.mark.parametrize("seed", range(10))
def test_matches_naive_per_bin(seed):
    rng = np.random.default_rng(seed)
    n_bins, bin_s = 100, 900
    occ = rng.random(n_bins) < 0.6
    t = []
    for b in np.flatnonzero(occ):
        t.extend(sorted(rng.choice(bin_s, rng.integers(1, 4), replace=False) + b * bin_s))
    t = np.asarray(t)
    lat = 55.7 + rng.normal(0, 0.002, t.shape)
    lon = 12.5 + rng.normal(0, 0.002, t.shape)
    window = TimeWindow(0, n_bins * bin_s, 1.0)
    seq = build_cell_sequence(samples(t, lat, lon), window, bin_s=bin_s, size_m=100,
                              fill_limit=3)
    assert len(seq) == n_bins
    ref = cell_sequence_naive(t.tolist(), lat.tolist(), lon.tolist(), 0, n_bins, bin_s, 100,
                              float(np.median(lat)), 3)
    got = [None if c is None else (c.row, c.col) for c in seq.stream()]
    assert got == ref


def test_length_matches_window():
    t = np.arange(1800, 1800 + 48 * 900, 900)
    w = TimeWindow(1800, 1800 + 48 * 900, 1.0)
    for bin_s in (900, 1800, 3600):
        seq = build_cell_sequence(samples(t, np.full(t.shape, 55.7), np.full(t.shape, 12.5)),
                                  w, bin_s=bin_s)
        assert len(seq) == math.ceil(w.end / bin_s) - w.start // bin_s


def test_codes_follow_first_appearance():
    t = np.arange(0, 6 * 900, 900)
    lat = np.array([55.9, 55.9, 55.1, 55.5, 55.1, 55.9])
    seq = build_cell_sequence(samples(t, lat, np.full(6, 12.0)), TimeWindow(0, 6 * 900, 1.0))
    assert seq.codes().tolist() == [0, 0, 1, 2, 1, 0]
    assert seq.self_transition_fraction() == pytest.approx(1 / 5)


def test_csv_round_trip(tmp_path):
    t = np.array([0, 5 * 900])
    seq = build_cell_sequence(samples(t, np.array([55.7, 55.8]), np.array([12.5, 12.5])),
                              TimeWindow(0, 6 * 900, 1.0), fill_limit=2)
    write_cell_sequence(seq, tmp_path / "c.csv")
    text = (tmp_path / "c.csv").read_text().splitlines()
    assert text[0] == "bin_index,row,col" and text[4] == "3,,"
    back = read_cell_sequence(tmp_path / "c.csv", 900, 50.0, "u")
    assert back.stream() == seq.stream()
