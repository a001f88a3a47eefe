"""Acceptance suite: twelve criteria, each printed as one PASS/FAIL line.

Synthetic corpora (50 users x 2000 stops) are built once per session:

* ``plain``: preferential-return users with per-user stay distributions,
  10 m position noise; also expanded without noise for the round trip.
* ``structured``: the same process plus a weekly routine and gateway places,
  used where time-dependent structure or exploration cues are required.
"""
import math
import time

import numpy as np
import pytest

from acceptance_log import record
from mobpred.discretize import build_cell_sequence
from mobpred.exploration import (evaluate_exploration, label_explorations, pearson_r)
from mobpred.features import bt_entropy, build_feature_rows, evaluate_next_place
from mobpred.ingest import Samples, select_complete_window
from mobpred.predictability import bound_for_user, fano_expression, fano_pi_max, match_lengths
from mobpred.predictors import evaluate_baseline
from mobpred.stops import dbscan, detect_stop_sequence
from mobpred.synth import EprParams, epr_generate, expand_to_samples, stop_recovery, synth_events
from oracles import (best_window, dbscan_quadratic, exploration_labels, markov_recount,
                     match_lengths_exhaustive, partition, score)

N_USERS = 50
N_STOPS = 2000
CELL_SIZES = (50, 500, 5000)
BIN_SIZES = (900, 1800, 3600)
BASELINES = ("toploc", "stationary", "markov")


def _plain_user(u):
    alpha = float(np.random.default_rng([u, 99]).uniform(0.12, 0.3))
    trace = epr_generate(EprParams(seed=u, n_stops=N_STOPS, stay_pareto_alpha=alpha), f"u{u:02d}")
    noisy = expand_to_samples(trace, jitter_m=10.0)
    clean = expand_to_samples(trace, jitter_m=0.0)
    window = select_complete_window(noisy)
    truth = trace.to_stop_sequence()
    seq = detect_stop_sequence(noisy)
    seq_clean = detect_stop_sequence(clean)
    out = {"alpha": alpha, "window_days": (window.end - window.start) / 86400,
           "recovery_noisy": stop_recovery(truth, seq)["recovery"],
           "recovery_clean": stop_recovery(truth, seq_clean)["recovery"],
           "labels": label_explorations(seq.places()), "n_places": seq.n_places}
    places = np.asarray(seq.places(), dtype=np.int64)
    out["place"] = {"markov": evaluate_baseline(places, "markov").accuracy,
                    "pi_max": bound_for_user(places).pi_max, "n": len(places)}
    streams = {}
    for size in CELL_SIZES:
        streams[(size, 900)] = build_cell_sequence(noisy, window, 900, size)
    for bin_s in BIN_SIZES[1:]:
        streams[(50, bin_s)] = build_cell_sequence(noisy, window, bin_s, 50)
    cells = {}
    for key, cs in streams.items():
        codes = cs.codes()
        b = bound_for_user(codes)
        cells[key] = {m: evaluate_baseline(codes, m).accuracy for m in BASELINES}
        cells[key].update(pi_max=b.pi_max, n=b.n)
    out["cells"] = cells
    cs = build_cell_sequence(clean, select_complete_window(clean), 900, 50)
    codes = cs.codes()
    out["clean_cell"] = {"self": cs.self_transition_fraction(),
                         "markov": evaluate_baseline(codes, "markov").accuracy,
                         "stationary": evaluate_baseline(codes, "stationary").accuracy}
    return out


def _structured_user(u):
    params = EprParams(seed=10_000 + u, n_stops=N_STOPS, n_seed_places=3, routine=0.8,
                       n_gateways=2, gateway_weight=6.0)
    trace = epr_generate(params, f"s{u:02d}")
    seq = detect_stop_sequence(expand_to_samples(trace, jitter_m=10.0))
    rows = build_feature_rows(seq, synth_events(trace))
    places = np.asarray(seq.places(), dtype=np.int64)
    return {"markov": evaluate_baseline(places, "markov").accuracy,
            "logreg": evaluate_next_place(rows, "location+weekhour").accuracy,
            "f1_logreg": evaluate_exploration(rows, "logreg:all").f1,
            "f1_random": evaluate_exploration(rows, "random", seed=u).f1}


@pytest.fixture(scope="session")
def plain():
    t0 = time.perf_counter()
    users = [_plain_user(u) for u in range(N_USERS)]
    print(f"plain corpus: {time.perf_counter() - t0:.1f} s")
    return users


@pytest.fixture(scope="session")
def structured():
    return [_structured_user(u) for u in range(N_USERS)]


def test_generation_time():
    t0 = time.perf_counter()
    n = 0
    for u in range(N_USERS):
        n += len(expand_to_samples(epr_generate(EprParams(seed=u, n_stops=N_STOPS))))
    elapsed = time.perf_counter() - t0
    print(f"generated {N_USERS} users, {n} samples in {elapsed:.1f} s")
    assert elapsed < 60


# --------------------------------------------------------------------------- 1

def test_c01_oracle_equivalence():
    failures = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        centers = rng.uniform([55.6, 12.4], [55.62, 12.43], (25, 2))
        pts = centers[rng.integers(0, 25, 200)] + rng.normal(0, 40 / 111320.0, (200, 2))
        got = partition(dbscan(pts[:, 0], pts[:, 1], 50, 2).tolist(), -1)
        if got != partition(dbscan_quadratic(pts[:, 0].tolist(), pts[:, 1].tolist(), 50, 2)):
            failures.append(f"dbscan seed {seed}")
        stream = [None if rng.random() < 0.05 else int(x) for x in rng.integers(0, 7, 300)]
        rep = evaluate_baseline(stream, "markov")
        if (rep.n_predictions, rep.n_correct) != score(stream, markov_recount(stream)):
            failures.append(f"markov seed {seed}")
        for n in (8, 33, 64):
            seq = rng.integers(0, int(rng.integers(1, 5)), n).tolist()
            if match_lengths(seq).tolist() != match_lengths_exhaustive(seq):
                failures.append(f"lambda seed {seed} n {n}")
        places = rng.integers(0, 30, 150).tolist()
        if label_explorations(places).labels != exploration_labels(places):
            failures.append(f"labels seed {seed}")
    ok = not failures
    record(1, "oracle equivalence", ok,
           "dbscan/markov/lambda/labels exact on 20 seeds" if ok else ", ".join(failures[:5]))
    assert ok


# --------------------------------------------------------------------------- 2

def test_c02_analytic_identities():
    checks = {}
    checks["pi(0,N)=1"] = all(fano_pi_max(0.0, n) == 1.0 for n in (1, 2, 7, 100, 10_000))
    checks["pi(log2N,N)=1/N"] = all(abs(fano_pi_max(math.log2(n), n) - 1 / n) <= 1e-9
                                    for n in (2, 3, 7, 100, 10_000))
    resid = 0.0
    rng = np.random.default_rng(0)
    for _ in range(500):
        n = int(rng.integers(2, 5000))
        s = float(rng.uniform(1e-6, math.log2(n) - 1e-6))
        resid = max(resid, abs(fano_expression(fano_pi_max(s, n), n) - s))
    checks["residual<=1e-8"] = resid <= 1e-8
    checks["bt_entropy=1"] = bt_entropy(["a", "b", "a", "b"]) == 1.0
    x = rng.normal(size=50)
    checks["r(x,x)=1"] = pearson_r(x, x) == 1.0
    checks["r(x,-x)=-1"] = pearson_r(x, -x) == -1.0
    ok = all(checks.values())
    record(2, "analytic identities", ok,
           f"max Fano residual {resid:.1e}; failed: "
           + (", ".join(k for k, v in checks.items() if not v) or "none"))
    assert ok


# --------------------------------------------------------------------------- 3

def test_c03_markov_stationary_correlation(plain):
    st = [u["clean_cell"]["self"] for u in plain]
    mk = [u["clean_cell"]["markov"] for u in plain]
    sn = [u["clean_cell"]["stationary"] for u in plain]
    r = pearson_r(mk, sn)
    ok = min(st) >= 0.8 and r >= 0.95
    record(3, "markov vs stationary correlation", ok,
           f"r={r:.4f} over {len(plain)} users, min self-transition {min(st):.3f}, "
           f"accuracy range {min(mk):.3f}-{max(mk):.3f}")
    assert ok


# --------------------------------------------------------------------------- 4

def test_c04_accuracy_grows_with_cell_size(plain):
    bad = [i for i, u in enumerate(plain)
           if not all(u["cells"][(a, 900)]["markov"] <= u["cells"][(b, 900)]["markov"]
                      for a, b in zip(CELL_SIZES, CELL_SIZES[1:]))]
    means = [np.mean([u["cells"][(s, 900)]["markov"] for u in plain]) for s in CELL_SIZES]
    ok = not bad
    record(4, "accuracy non-decreasing in cell size", ok,
           f"means {[round(float(m), 3) for m in means]}; violating users {bad}")
    assert ok


# --------------------------------------------------------------------------- 5

def test_c05_accuracy_falls_with_bin_size(plain):
    means = [np.mean([u["cells"][(50, b)]["markov"] for u in plain]) for b in BIN_SIZES]
    ok = means[0] >= means[1] >= means[2]
    record(5, "accuracy non-increasing in bin size", ok,
           f"population means {[round(float(m), 3) for m in means]}")
    assert ok


# --------------------------------------------------------------------------- 6

def test_c06_cell_above_place(plain):
    bad_pi = [i for i, u in enumerate(plain)
              if not u["cells"][(50, 900)]["pi_max"] > u["place"]["pi_max"]]
    bad_acc = [i for i, u in enumerate(plain)
               if not u["cells"][(50, 900)]["markov"] > u["place"]["markov"]]
    ok = not bad_pi and not bad_acc

    def mean(key):
        return np.mean([key(u) for u in plain])

    record(6, "next-cell above next-place", ok,
           f"pi_max {mean(lambda u: u['cells'][(50, 900)]['pi_max']):.3f} vs "
           f"{mean(lambda u: u['place']['pi_max']):.3f}; markov "
           f"{mean(lambda u: u['cells'][(50, 900)]['markov']):.3f} vs "
           f"{mean(lambda u: u['place']['markov']):.3f}; violations {bad_pi + bad_acc}")
    assert ok


# --------------------------------------------------------------------------- 7

def test_c07_logistic_vs_markov(structured):
    lr = np.mean([u["logreg"] for u in structured])
    mk = np.mean([u["markov"] for u in structured])
    ok = lr >= mk - 0.02
    record(7, "logistic(location+weekhour) vs markov", ok,
           f"mean accuracy {lr:.4f} vs {mk:.4f} over {len(structured)} users")
    assert ok


# --------------------------------------------------------------------------- 8

def test_c08_exploration_statistics(plain):
    p = [u["labels"].p_exploration for u in plain]
    sums_ok = all(u["labels"].n_explorations == sum(u["labels"].labels) == u["n_places"]
                  for u in plain)
    grid = (0.1, 0.21, 0.4)
    grid_means = []
    for g in grid:
        vals = [label_explorations(epr_generate(EprParams(seed=u, gamma=g, n_stops=N_STOPS))
                                   .place.tolist()).p_exploration for u in range(N_USERS)]
        grid_means.append(float(np.mean(vals)))
    ok = (min(p) >= 0.1 and max(p) <= 0.35 and sums_ok
          and grid_means[0] > grid_means[1] > grid_means[2])
    record(8, "exploration statistics", ok,
           f"p_exploration {min(p):.3f}-{max(p):.3f} (mean {np.mean(p):.3f}); gamma "
           f"{grid} -> {[round(float(m), 3) for m in grid_means]}; label sums exact: {sums_ok}")
    assert ok


# --------------------------------------------------------------------------- 9

def test_c09_exploration_prediction(structured):
    wins = sum(u["f1_logreg"] > u["f1_random"] for u in structured)
    ok = wins >= 45
    record(9, "exploration f1 above random", ok,
           f"{wins}/{len(structured)} users; mean f1 "
           f"{np.mean([u['f1_logreg'] for u in structured]):.3f} vs "
           f"{np.mean([u['f1_random'] for u in structured]):.3f}")
    assert ok


# --------------------------------------------------------------------------- 10

def test_c10_bound_dominance(plain):
    worst = -1.0
    where = None
    n_streams = 0
    for i, u in enumerate(plain):
        for key, c in u["cells"].items():
            if c["n"] < 5000:
                continue
            n_streams += 1
            for m in BASELINES:
                gap = c[m] - c["pi_max"]
                if gap > worst:
                    worst, where = gap, (i, key, m)
    ok = n_streams > 0 and worst <= 0.05
    record(10, "bound dominance", ok,
           f"{n_streams} streams; largest accuracy - pi_max = {worst:+.4f} at {where}")
    assert ok


# --------------------------------------------------------------------------- 11

def test_c11_round_trip(plain):
    clean = [u["recovery_clean"] for u in plain]
    noisy = [u["recovery_noisy"] for u in plain]
    ok = min(clean) == 1.0 and min(noisy) >= 0.95
    record(11, "synth -> pipeline round trip", ok,
           f"noiseless min {min(clean):.4f}; 10 m jitter min {min(noisy):.4f}")
    assert ok


# --------------------------------------------------------------------------- 12

def test_c12_window_optimality():
    mismatches = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        # blocks of varying density so the optimum is not the whole lattice
        dens = rng.uniform(0.3, 1.0, 10)
        occ = (rng.random(500) < np.repeat(dens, 50)).astype(int)
        occ[0] = occ[-1] = 1
        t = np.flatnonzero(occ) * 900 + rng.integers(0, 900, int(occ.sum()))
        s = Samples.from_arrays("u", np.sort(t), np.zeros(t.shape), np.zeros(t.shape))
        w = select_complete_window(s, 900, 0.9, min_length_s=0)
        ref = best_window(occ.tolist(), 9, 10)
        if (w.start // 900, (w.end - w.start) // 900) != ref:
            mismatches.append(seed)
    ok = not mismatches
    record(12, "window selection optimality", ok,
           "exact on 50 seeds of 500 bins" if ok else f"mismatch seeds {mismatches}")
    assert ok
