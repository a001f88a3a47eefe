"""Command-line front end: ``mobpred <command> [options]``.

Commands share one directory layout. ``synth`` writes ``samples.csv``,
``events.csv`` and per-user ground truth; ``pipeline`` turns samples into
windowed samples and stop sequences; ``predict``, ``bound`` and ``explore``
read a pipeline directory and write per-user metrics; ``report`` aggregates
those into histograms and correlation tables.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._io import dump_json, metadata_line, open_text
from .discretize import build_cell_sequence
from .exploration import exploration_report, pearson_r
from .features import (DEFAULT_TZ_OFFSET_S, NEXT_PLACE_FEATURES, build_feature_rows,
                       evaluate_next_place, parse_feature_set, write_feature_rows)
from .ingest import (BIN_S, COMPLETENESS, Events, TimeWindow, filter_to_window, read_events,
                     read_samples, select_complete_window, write_events, write_samples)
from .predictability import bound_for_user
from .predictors import BASELINES, L2, LR0, LR_DECAY, evaluate_baseline
from .stops import detect_stop_sequence, read_stop_sequence, stops_per_day, write_stop_sequence
from .synth import (EprParams, epr_generate, expand_to_samples, params_dict, stop_recovery,
                    synth_events, write_truth)

FORMULATIONS = ("next_cell", "next_place")
HIST_WIDTH = 0.05
EXIT_USAGE = 2
EXIT_IO = 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    in_dir: str | None = None
    out: str | None = None
    cell_size_m: float = 50.0
    bin_s: int = BIN_S
    model: str = "markov"
    formulation: str = "next_cell"
    seed: int = 0
    tz_offset_s: int = DEFAULT_TZ_OFFSET_S
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.formulation not in FORMULATIONS:
            raise UsageError(f"unknown formulation {self.formulation!r}")
        if self.command == "predict":
            if self.model == "stationary" and self.formulation == "next_place":
                raise UsageError("the stationary model only applies to next_cell: "
                                 "consecutive places never repeat")
            if self.model.startswith("logreg:"):
                if self.formulation != "next_place":
                    raise UsageError("logreg models are defined on next_place only")
                try:
                    parse_feature_set(self.model.split(":", 1)[1], NEXT_PLACE_FEATURES)
                except ValueError as exc:
                    raise UsageError(str(exc)) from None
            elif self.model not in BASELINES:
                raise UsageError(f"unknown model {self.model!r}")
        if self.cell_size_m <= 0 or self.bin_s <= 0:
            raise UsageError("cell size and bin width must be positive")
        return self

    def metadata(self) -> dict:
        return {"tool": "mobpred", "version": __version__, "seed": self.seed,
                "config": {k: v for k, v in asdict(self).items()}}


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes equal underscores."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value")
            key, value = (x.strip() for x in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _apply_config(sub: argparse.ArgumentParser, values: dict):
    actions = {}
    for a in sub._actions:
        actions[a.dest] = a
        for opt in a.option_strings:
            actions[opt.lstrip("-").replace("-", "_")] = a
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"unknown config key {key!r}")
        if action.nargs == 0:
            defaults[action.dest] = raw.lower() in {"1", "true", "yes", "on"}
        else:
            defaults[action.dest] = action.type(raw) if action.type else raw
    sub.set_defaults(**defaults)


# ---------------------------------------------------------------------------
# per-user batch plumbing
# ---------------------------------------------------------------------------

def run_users(func, jobs, workers: int):
    """Apply ``func`` to each ``(user_id, payload)``; failures are kept per user."""
    jobs = sorted(jobs, key=lambda j: j[0])
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_guarded, [func] * len(jobs), jobs))
    else:
        outcomes = [_guarded(func, j) for j in jobs]
    results, failures = {}, {}
    for uid, ok, value in outcomes:
        (results if ok else failures)[uid] = value
    return results, failures


def _guarded(func, job):
    uid, payload = job
    try:
        return uid, True, func(uid, payload)
    except Exception as exc:  # noqa: BLE001 - reported per user
        return uid, False, f"{type(exc).__name__}: {exc}"


def _report_failures(failures, stream=sys.stderr):
    for uid in sorted(failures):
        print(f"user {uid}: {failures[uid]}", file=stream)


def _finite(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def _write_csv(path, header, rows, meta):
    with open_text(path, "w") as fh:
        fh.write(metadata_line(meta))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _require(path: Path):
    if not path.exists():
        raise FileNotFoundError(f"missing input: {path}")
    return path


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _synth_user(uid, args):
    params, jitter = args
    trace = epr_generate(params, uid)
    return trace, expand_to_samples(trace, jitter_m=jitter), synth_events(trace)


def cmd_synth(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    jobs = []
    for u in range(args.users):
        params = EprParams(rho=args.rho, gamma=args.gamma, n_stops=args.stops,
                           stay_pareto_alpha=args.stay_alpha, seed=args.seed * 100003 + u,
                           n_seed_places=args.seed_places, n_gateways=args.gateways,
                           gateway_weight=args.gateway_weight, routine=args.routine,
                           tz_offset_s=cfg.tz_offset_s)
        jobs.append((f"u{u:03d}", (params, args.jitter)))
    results, failures = run_users(_synth_user, jobs, args.workers)
    meta = cfg.metadata()
    write_samples({u: r[1] for u, r in results.items()}, out / "samples.csv", meta)
    write_events({u: r[2] for u, r in results.items()}, out / "events.csv", meta)
    for uid, (trace, _, _) in results.items():
        umeta = dict(meta, user_id=uid, params=params_dict(trace.params))
        write_truth(trace, out / "truth" / f"{uid}.csv", umeta)
        write_stop_sequence(trace.to_stop_sequence(), out / "truth" / f"{uid}_stops.csv", umeta)
    _report_failures(failures)
    return 0


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def _pipeline_user(uid, args):
    samples, events, opts, truth_path = args
    window = select_complete_window(samples, opts["bin_s"], opts["completeness"],
                                    int(opts["min_length_days"] * 86400))
    if window is None:
        raise ValueError("no window meets the completeness requirement")
    samples = filter_to_window(samples, window)
    events = filter_to_window(events, window)
    seq = detect_stop_sequence(samples, opts["delta"], opts["min_duration"], opts["gap"],
                               opts["eps"], opts["min_pts"])
    mean, std = stops_per_day(seq, window, opts["tz_offset_s"])
    summary = {"user_id": uid, "window": [window.start, window.end],
               "completeness": window.completeness, "n_samples": len(samples),
               "n_stops": len(seq), "n_places": seq.n_places,
               "stops_per_day_mean": mean, "stops_per_day_std": std}
    if truth_path is not None and truth_path.exists():
        truth = read_stop_sequence(truth_path, uid)
        summary["recovery"] = stop_recovery(truth, seq)
    rows = build_feature_rows(seq, events, opts["tz_offset_s"])
    return samples, events, seq, summary, rows


def cmd_pipeline(args, cfg: RunConfig) -> int:
    src = Path(args.in_dir)
    parsed = read_samples(_require(src / "samples.csv"))
    ev_path = src / "events.csv"
    events = read_events(ev_path).by_user if ev_path.exists() else {}
    opts = {"bin_s": cfg.bin_s, "completeness": args.completeness,
            "min_length_days": args.min_length_days, "delta": args.delta,
            "min_duration": args.min_duration, "gap": args.gap, "eps": args.eps,
            "min_pts": args.min_pts, "tz_offset_s": cfg.tz_offset_s}
    jobs = [(uid, (s, events.get(uid, Events.empty(uid)), opts,
                   src / "truth" / f"{uid}_stops.csv"))
            for uid, s in parsed.by_user.items()]
    results, failures = run_users(_pipeline_user, jobs, args.workers)
    out = Path(args.out)
    (out / "stops").mkdir(parents=True, exist_ok=True)
    (out / "features").mkdir(parents=True, exist_ok=True)
    meta = cfg.metadata()
    write_samples({u: r[0] for u, r in results.items()}, out / "samples.csv", meta)
    write_events({u: r[1] for u, r in results.items()}, out / "events.csv", meta)
    for uid, (_, _, seq, _, rows) in results.items():
        write_stop_sequence(seq, out / "stops" / f"{uid}.csv", dict(meta, user_id=uid))
        write_feature_rows(rows, out / "features" / f"{uid}.csv", dict(meta, user_id=uid))
    dump_json({"metadata": meta, "n_rejected_rows": parsed.n_rejected,
               "rejected": dict(sorted(parsed.reasons.items())),
               "users": [results[u][3] for u in sorted(results)],
               "failures": dict(sorted(failures.items()))}, out / "pipeline.json")
    _report_failures(failures)
    return 0


# ---------------------------------------------------------------------------
# predict / bound / explore
# ---------------------------------------------------------------------------

def _load_pipeline(src: Path):
    info = json.loads(_require(src / "pipeline.json").read_text(encoding="utf-8"))
    windows = {u["user_id"]: TimeWindow(u["window"][0], u["window"][1], u["completeness"])
               for u in info["users"]}
    return windows


def _stream_for(uid, cfg_d, src: Path, samples=None, window=None):
    if cfg_d["formulation"] == "next_cell":
        cells = build_cell_sequence(samples, window, bin_s=cfg_d["bin_s"],
                                    size_m=cfg_d["cell_size_m"], user_id=uid)
        return cells.codes(), {"self_transition_fraction": cells.self_transition_fraction()}
    seq = read_stop_sequence(src / "stops" / f"{uid}.csv", uid)
    return np.asarray([s.place for s in seq], dtype=np.int64), {}


def _predict_user(uid, args):
    cfg_d, src, samples, window = args
    model = cfg_d["model"]
    if model.startswith("logreg:"):
        seq = read_stop_sequence(src / "stops" / f"{uid}.csv", uid)
        ev_all = read_events(src / "events.csv").by_user if (src / "events.csv").exists() else {}
        rows = build_feature_rows(seq, ev_all.get(uid), cfg_d["tz_offset_s"])
        rep = evaluate_next_place(rows, model.split(":", 1)[1])
        extra = {}
    else:
        stream, extra = _stream_for(uid, cfg_d, src, samples, window)
        rep = evaluate_baseline(stream, model)
    return rep, extra


def _samples_by_user(src: Path, cfg: RunConfig):
    if cfg.formulation != "next_cell":
        return {}
    return read_samples(_require(src / "samples.csv")).by_user


def cmd_predict(args, cfg: RunConfig) -> int:
    src = Path(args.in_dir)
    windows = _load_pipeline(src)
    samples = _samples_by_user(src, cfg)
    cfg_d = asdict(cfg)
    jobs = [(u, (cfg_d, src, samples.get(u), w)) for u, w in windows.items()]
    results, failures = run_users(_predict_user, jobs, args.workers)
    meta = cfg.metadata()
    meta["model_params"] = {"lr0": LR0, "lr_decay": LR_DECAY, "l2": L2}
    params = {"cell_size_m": cfg.cell_size_m, "bin_s": cfg.bin_s,
              "tz_offset_s": cfg.tz_offset_s}
    users = []
    for uid in sorted(results):
        rep, extra = results[uid]
        d = rep.to_dict(user_id=uid, formulation=cfg.formulation, model=cfg.model,
                        params=params, **extra)
        users.append(d)
        if args.per_step:
            step_dir = Path(args.out).with_suffix("")
            step_dir.mkdir(parents=True, exist_ok=True)
            _write_csv(step_dir / f"{uid}_steps.csv", ("step", "predicted", "actual", "correct"),
                       [(i, p, a, int(c)) for i, p, a, c in rep.per_step], meta)
    _dump_result(args.out, "predict", meta, users, failures)
    _report_failures(failures)
    return 0


def _dump_result(path, kind, meta, users, failures):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    dump_json({"metadata": meta, "kind": kind, "users": users,
               "failures": dict(sorted(failures.items()))}, path)


def _bound_user(uid, args):
    cfg_d, src, samples, window = args
    stream, _ = _stream_for(uid, cfg_d, src, samples, window)
    return bound_for_user(stream)


def cmd_bound(args, cfg: RunConfig) -> int:
    src = Path(args.in_dir)
    windows = _load_pipeline(src)
    samples = _samples_by_user(src, cfg)
    cfg_d = asdict(cfg)
    jobs = [(u, (cfg_d, src, samples.get(u), w)) for u, w in windows.items()]
    results, failures = run_users(_bound_user, jobs, args.workers)
    meta = cfg.metadata()
    rows = [(u, cfg.formulation, b.n, b.n_symbols, repr(b.s_bits_per_symbol), repr(b.pi_max))
            for u, b in sorted(results.items())]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    _write_csv(args.out, ("user_id", "formulation", "n", "N", "s_bits", "pi_max"), rows, meta)
    _report_failures(failures)
    return 0


def _explore_user(uid, args):
    cfg_d, src, events, window, models = args
    seq = read_stop_sequence(src / "stops" / f"{uid}.csv", uid)
    rows = build_feature_rows(seq, events, cfg_d["tz_offset_s"])
    return exploration_report(seq, rows, models, window, seed=cfg_d["seed"],
                              tz_offset_s=cfg_d["tz_offset_s"])


def cmd_explore(args, cfg: RunConfig) -> int:
    src = Path(args.in_dir)
    windows = _load_pipeline(src)
    events = read_events(src / "events.csv").by_user if (src / "events.csv").exists() else {}
    models = [m for m in cfg.model.split(",") if m]
    cfg_d = asdict(cfg)
    jobs = [(u, (cfg_d, src, events.get(u), w, models)) for u, w in windows.items()]
    results, failures = run_users(_explore_user, jobs, args.workers)
    users = []
    for uid in sorted(results):
        rep = results[uid]
        flat = {k: _finite(v) for k, v in rep.items() if k != "models"}
        for m, scores in rep["models"].items():
            flat[m] = scores
        users.append(flat)
    _dump_result(args.out, "explore", cfg.metadata(), users, failures)
    _report_failures(failures)
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def histogram(values, width: float = HIST_WIDTH):
    """Counts over ``[0, 1]`` in bins of ``width``; 1.0 falls in the last bin."""
    n_bins = int(round(1.0 / width))
    v = np.clip(np.asarray(values, dtype=float), 0.0, 1.0)
    idx = np.minimum((v / width + 1e-9).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    return [(round(i * width, 10), round((i + 1) * width, 10), int(c))
            for i, c in enumerate(counts)]


def _collect_metrics(src: Path):
    """``{metric_name: {user_id: value}}`` for every fraction-valued metric found."""
    metrics = {}

    def put(name, uid, value):
        if value is not None and not (isinstance(value, float) and math.isnan(value)):
            metrics.setdefault(name, {})[uid] = float(value)

    for path in sorted(src.glob("*.json")):
        data = json.loads(path.read_text(encoding="utf-8"))
        kind = data.get("kind")
        if kind == "predict":
            for u in data["users"]:
                put(f"{path.stem}.accuracy", u["user_id"], u["accuracy"])
        elif kind == "explore":
            for u in data["users"]:
                put(f"{path.stem}.p_exploration", u["user_id"], u["p_exploration"])
                put(f"{path.stem}.fraction_visited_once", u["user_id"],
                    u["fraction_visited_once"])
                for k, v in u.items():
                    if isinstance(v, dict) and "f1" in v:
                        put(f"{path.stem}.{k}.f1", u["user_id"], v["f1"])
    for path in sorted(src.glob("*.csv")):
        with open_text(path) as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        reader = csv.DictReader(lines)
        if reader.fieldnames and "pi_max" in reader.fieldnames:
            for rec in reader:
                put(f"{path.stem}.pi_max", rec["user_id"], float(rec["pi_max"]))
    return metrics


def cmd_report(args, cfg: RunConfig) -> int:
    src = Path(args.in_dir)
    if not src.is_dir():
        raise FileNotFoundError(f"missing input: {src}")
    metrics = _collect_metrics(src)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = cfg.metadata()
    rows = []
    for name in sorted(metrics):
        for lo, hi, c in histogram(list(metrics[name].values())):
            rows.append((name, repr(lo), repr(hi), c))
    _write_csv(out / "histograms.csv", ("metric", "bin_lo", "bin_hi", "count"), rows, meta)
    corr = []
    names = sorted(metrics)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            common = sorted(set(metrics[a]) & set(metrics[b]))
            r = float("nan")
            if len(common) >= 2:
                r = pearson_r([metrics[a][u] for u in common], [metrics[b][u] for u in common])
            corr.append((a, b, len(common), "" if math.isnan(r) else repr(r)))
    _write_csv(out / "correlations.csv", ("metric_a", "metric_b", "n_users", "pearson_r"),
               corr, meta)
    summary = {name: {"n_users": len(v), "mean": float(np.mean(list(v.values()))),
                      "median": float(np.median(list(v.values())))}
               for name, v in sorted(metrics.items())}
    dump_json({"metadata": meta, "metrics": summary}, out / "summary.json")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="mobpred", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mobpred {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file; flags override it")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tz-offset", dest="tz_offset_s", type=int, default=DEFAULT_TZ_OFFSET_S,
                        help="fixed UTC offset in seconds for civil-time features")
    common.add_argument("--workers", type=int, default=1)

    p = subs.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--users", type=int, default=50)
    p.add_argument("--stops", type=int, default=2000)
    p.add_argument("--rho", type=float, default=0.6)
    p.add_argument("--gamma", type=float, default=0.21)
    p.add_argument("--stay-alpha", type=float, default=0.18)
    p.add_argument("--jitter", type=float, default=10.0, help="position noise sigma, meters")
    p.add_argument("--seed-places", type=int, default=1)
    p.add_argument("--gateways", type=int, default=0)
    p.add_argument("--gateway-weight", type=float, default=1.0)
    p.add_argument("--routine", type=float, default=0.0)
    p.add_argument("--out", required=True)

    p = subs.add_parser("pipeline", parents=[common], help="windows, stops and places")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--delta", type=float, default=50.0)
    p.add_argument("--eps", type=float, default=50.0)
    p.add_argument("--min-pts", type=int, default=2)
    p.add_argument("--min-duration", type=int, default=900)
    p.add_argument("--gap", type=int, default=1800)
    p.add_argument("--bin", dest="bin_s", type=int, default=BIN_S)
    p.add_argument("--completeness", type=float, default=COMPLETENESS)
    p.add_argument("--min-length-days", type=float, default=90.0)

    for name, helptext in (("predict", "online next-symbol accuracy"),
                           ("bound", "entropy and predictability bound")):
        p = subs.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--in", dest="in_dir", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--formulation", choices=FORMULATIONS, default="next_cell")
        p.add_argument("--cell-size", dest="cell_size_m", type=float, default=50.0)
        p.add_argument("--bin", dest="bin_s", type=int, default=BIN_S)
        if name == "predict":
            p.add_argument("--model", default="markov",
                           help="toploc, stationary, markov or logreg:<feature+feature|all>")
            p.add_argument("--per-step", action="store_true",
                           help="also dump per-step predictions as CSV")

    p = subs.add_parser("explore", parents=[common], help="exploration statistics and models")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default="random,logreg:all",
                   help="comma-separated: random, always_return, always_explore, "
                        "oracle, logreg:<features>")

    p = subs.add_parser("report", parents=[common], help="histograms and correlations")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    return parser, subs.choices


COMMANDS = {"synth": cmd_synth, "pipeline": cmd_pipeline, "predict": cmd_predict,
            "bound": cmd_bound, "explore": cmd_explore, "report": cmd_report}


def parse(argv=None):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        _apply_config(subs[args.command], read_config_file(args.config))
        args = parser.parse_args(argv)
    known = {"in_dir", "out", "cell_size_m", "bin_s", "model", "formulation", "seed",
             "tz_offset_s"}
    cfg = RunConfig(args.command, **{k: v for k, v in vars(args).items() if k in known})
    cfg.extra = {k: v for k, v in sorted(vars(args).items())
                 if k not in known and k not in {"command", "config", "workers"}}
    return args, cfg.validate()


def main(argv=None) -> int:
    try:
        args, cfg = parse(argv)
    except UsageError as exc:
        print(f"mobpred: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ValueError) as exc:
        print(f"mobpred: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, OSError) as exc:
        print(f"mobpred: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
