from dataclasses import replace

import numpy as np
import pytest

from mobpred.discretize import haversine_array
from mobpred.exploration import label_explorations
from mobpred.ingest import write_samples
from mobpred.stops import detect_stop_sequence
from mobpred.synth import (EprParams, RegionTooSmall, epr_generate, expand_to_samples,
                           stop_recovery, synth_events, write_truth)


def test_every_stop_explores_when_p_new_is_one():
    tr = epr_generate(EprParams(rho=1.0, gamma=0.0, n_stops=50))
    assert tr.is_exploration.tolist() == [1] * 50
    assert tr.place.tolist() == list(range(50))


def test_no_exploration_after_seeding():
    tr = epr_generate(EprParams(rho=1e-12, n_stops=40, n_seed_places=2))
    assert tr.is_exploration.tolist() == [1, 1] + [0] * 38
    assert tr.place.tolist() == [0, 1] * 20


def test_invalid_params():
    for kw in ({"rho": 0}, {"gamma": -1}, {"stay_pareto_alpha": 0}, {"routine": 0.5},
               {"n_stops": -1}):
        with pytest.raises(ValueError):
            EprParams(**kw)


def test_region_too_small():
    with pytest.raises(RegionTooSmall):
        epr_generate(EprParams(rho=1.0, gamma=0.0, n_stops=20,
                               region=(55.0, 12.0, 55.001, 12.001), max_place_attempts=50))


def test_trace_invariants():
    tr = epr_generate(EprParams(seed=4, n_stops=1500))
    assert np.all(tr.place[1:] != tr.place[:-1])
    d = tr.t_end - tr.t_start
    assert d.min() > 900 and d.max() <= 12 * 3600
    assert np.all(tr.t_start[1:] > tr.t_end[:-1])
    assert label_explorations(tr.place.tolist()).labels == tr.is_exploration.tolist()
    plat, plon = tr.place_lat, tr.place_lon
    for k in range(1, len(plat)):
        assert haversine_array(plat[k], plon[k], plat[:k], plon[:k]).min() >= 150.0


def test_place_growth_is_sublinear():
    betas = []
    for seed in range(5):
        tr = epr_generate(EprParams(seed=seed, n_stops=2000))
        s = np.cumsum(tr.is_exploration)
        t = np.arange(1, len(s) + 1)
        keep = t >= 50
        betas.append(np.polyfit(np.log(t[keep]), np.log(s[keep]), 1)[0])
    assert 0.6 <= np.mean(betas) <= 0.9


def test_deterministic_bytes(tmp_path):
    outs = []
    for k in range(2):
        tr = epr_generate(EprParams(seed=11, n_stops=200))
        write_truth(tr, tmp_path / f"t{k}.csv", {"seed": 11})
        write_samples({"u": expand_to_samples(tr)}, tmp_path / f"s{k}.csv")
        outs.append(((tmp_path / f"t{k}.csv").read_bytes(),
                     (tmp_path / f"s{k}.csv").read_bytes()))
    assert outs[0] == outs[1]
    assert (tmp_path / "t0.csv").read_text().splitlines()[1] == \
        "stop_index,place_label,is_exploration"


def test_zero_jitter_samples_identical():
    tr = epr_generate(EprParams(seed=1, n_stops=30))
    s = expand_to_samples(tr, jitter_m=0.0)
    k = np.searchsorted(tr.t_start, s.t, side="right") - 1
    assert np.all(s.lat == tr.lat[k]) and np.all(s.lon == tr.lon[k])


def _one_stop(ts, te):
    tr = epr_generate(EprParams(n_stops=1))
    tr.t_start[:] = ts
    tr.t_end[:] = te
    return tr


@pytest.mark.parametrize("ts", [0, 1, 450, 899, 900, 1234])
def test_sample_count_matches_direct_count(ts):
    te = ts + 3600
    s = expand_to_samples(_one_stop(ts, te), jitter_m=0.0)
    # bins touched by [ts, te)
    expected = len({b for b in range(ts // 900, (te - 1) // 900 + 1)})
    assert len(s) == expected and len(s) in (4, 5)
    assert s.t[0] == ts and s.t[-1] == te
    assert np.all(np.diff(s.t) > 0)


def test_empty_trace():
    tr = epr_generate(EprParams(n_stops=0))
    assert len(expand_to_samples(tr)) == 0
    assert len(synth_events(tr)) == 0


def test_round_trip_recovery():
    tr = epr_generate(EprParams(seed=5, n_stops=400))
    truth = tr.to_stop_sequence()
    clean = stop_recovery(truth, detect_stop_sequence(expand_to_samples(tr, jitter_m=0.0)))
    assert clean["recovery"] == 1.0
    noisy = stop_recovery(truth, detect_stop_sequence(expand_to_samples(tr, jitter_m=10.0)))
    assert noisy["recovery"] >= 0.95


def test_recovery_detects_bad_grouping():
    tr = epr_generate(EprParams(seed=5, n_stops=50))
    truth = tr.to_stop_sequence()
    assert stop_recovery(truth, truth)["recovery"] == 1.0
    merged = type(truth)("u", [replace(s, place=0) for s in truth])
    assert stop_recovery(truth, merged)["recovery"] == 0.0


def test_events_shape():
    tr = epr_generate(EprParams(seed=2, n_stops=100))
    ev = synth_events(tr)
    assert np.all(np.diff(ev.t) >= 0)
    kinds = set(ev.kind.tolist())
    assert "bt_scan" in kinds and "sms_in" in kinds
    assert all(p for k, p in zip(ev.kind, ev.payload) if k == "bt_scan")
