"""Exploration vs. return: labels, statistics and the binary prediction task."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .features import (DEFAULT_TZ_OFFSET_S, EXPLORATION_FEATURES, FeatureEncoder,
                       parse_feature_set)
from .predictors import OnlineLogisticModel

PRIOR_EXPLORATION = 0.2
WEEK_S = 7 * 86400


@dataclass(frozen=True)
class ExplorationLabels:
    labels: list
    n_explorations: int
    p_exploration: float


@dataclass(frozen=True)
class PrecisionRecallF1:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "PrecisionRecallF1":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return cls(precision, recall, f1, tp, fp, fn)

    @classmethod
    def from_predictions(cls, predicted, actual) -> "PrecisionRecallF1":
        p = np.asarray(predicted, dtype=bool)
        a = np.asarray(actual, dtype=bool)
        return cls.from_counts(int(np.sum(p & a)), int(np.sum(p & ~a)), int(np.sum(~p & a)))

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "tp": self.tp, "fp": self.fp, "fn": self.fn}


def _places(seq):
    return [getattr(s, "place", s) for s in seq]


def label_explorations(seq) -> ExplorationLabels:
    """1 for the first visit to a place, 0 for a return."""
    seen = set()
    labels = []
    for p in _places(seq):
        labels.append(0 if p in seen else 1)
        seen.add(p)
    n = sum(labels)
    return ExplorationLabels(labels, n, n / len(labels) if labels else float("nan"))


def fraction_visited_once(seq) -> float:
    counts = Counter(_places(seq))
    if not counts:
        return float("nan")
    return sum(1 for c in counts.values() if c == 1) / len(counts)


def weekly_new_places(seq, window=None, tz_offset_s: int = DEFAULT_TZ_OFFSET_S):
    """First visits per ISO week (Monday start) and their running total.

    Weeks span the window when given, else the first to the last stop.
    """
    stops = list(seq)
    if not stops:
        return [], []
    # epoch + 3 days is a Monday 00:00
    week = lambda t: (int(t) + tz_offset_s + 3 * 86400) // WEEK_S  # noqa: E731
    if window is not None:
        w0, w1 = week(window.start), week(window.end - 1)
    else:
        w0, w1 = week(stops[0].t_start), week(stops[-1].t_start)
    counts = [0] * (w1 - w0 + 1)
    labels = label_explorations(stops).labels
    for s, lab in zip(stops, labels):
        k = week(s.t_start) - w0
        if lab and 0 <= k < len(counts):
            counts[k] += 1
    return counts, np.cumsum(counts).tolist()


def pearson_r(x, y) -> float:
    """Product-moment correlation; NaN when either input has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two equal-length samples of size >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        return float("nan")
    return float(np.clip((dx @ dy) / denom, -1.0, 1.0))


class RandomExploreBaseline:
    """Guess "exploration" with probability equal to the exploration rate seen so far."""

    def __init__(self, seed=0, prior: float = PRIOR_EXPLORATION):
        self.rng = np.random.default_rng(seed)
        self.prior = prior
        self.n = 0
        self.k = 0

    @property
    def p(self) -> float:
        return self.k / self.n if self.n else self.prior

    def predict(self, x=None) -> int:
        return int(self.rng.random() < self.p)

    def update(self, x, y):
        self.n += 1
        self.k += int(y)

    def step(self, x, y) -> int:
        guess = self.predict(x)
        self.update(x, y)
        return guess


def random_explore_baseline(history, rng=None, prior: float = PRIOR_EXPLORATION) -> int:
    rng = rng if rng is not None else np.random.default_rng()
    history = list(history)
    p = sum(history) / len(history) if history else prior
    return int(rng.random() < p)


class _ConstantModel:
    def __init__(self, value):
        self.value = value

    def step(self, x, y):
        return self.value


class _OracleModel:
    def step(self, x, y):
        return int(y)


def make_exploration_model(spec: str, seed=0, threshold: float = 0.5):
    """``random``, ``oracle``, ``always_return``, ``always_explore`` or ``logreg:<features>``."""
    if spec == "random":
        return RandomExploreBaseline(seed)
    if spec == "oracle":
        return _OracleModel()
    if spec == "always_return":
        return _ConstantModel(0)
    if spec == "always_explore":
        return _ConstantModel(1)
    if spec.startswith("logreg:"):
        return OnlineLogisticModel(threshold=threshold)
    raise ValueError(f"unknown exploration model {spec!r}")


def evaluate_exploration(rows, model="logreg:all", seed=0, threshold: float = 0.5,
                         features=None) -> PrecisionRecallF1:
    """Online predict-then-update over feature rows; exploration is the positive class."""
    if isinstance(model, str):
        if features is None and model.startswith("logreg:"):
            features = parse_feature_set(model.split(":", 1)[1], EXPLORATION_FEATURES)
        model = make_exploration_model(model, seed, threshold)
    enc = FeatureEncoder(features) if features else None
    predicted, actual = [], []
    for row in rows:
        x = enc.transform(row.features) if enc is not None else None
        predicted.append(model.step(x, row.explored_next))
        actual.append(row.explored_next)
    return PrecisionRecallF1.from_predictions(predicted, actual)


def exploration_report(seq, rows, models, window=None, seed=0, threshold: float = 0.5,
                       tz_offset_s: int = DEFAULT_TZ_OFFSET_S) -> dict:
    labels = label_explorations(seq)
    weekly, cumulative = weekly_new_places(seq, window, tz_offset_s)
    scores = {m: evaluate_exploration(rows, m, seed=seed, threshold=threshold).to_dict()
              for m in models}
    return {
        "user_id": getattr(seq, "user_id", ""),
        "n_stops": len(labels.labels),
        "n_places": labels.n_explorations,
        "p_exploration": labels.p_exploration,
        "fraction_visited_once": fraction_visited_once(seq),
        "weekly_new_places": weekly,
        "cumulative_new_places": cumulative,
        "models": scores,
    }
