"""Online next-symbol predictors and the predict-then-observe harness.

Symbols are any hashable values; ``None`` marks a MISSING bin. MISSING steps
are never scored and never update a model. "Current state" for every
baseline is the most recent non-MISSING symbol, while transitions are only
counted between two consecutive non-MISSING symbols.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .predictability import encode

BASELINES = ("toploc", "stationary", "markov")
_MODES = {"toploc": kernels.MODE_TOPLOC, "stationary": kernels.MODE_STATIONARY,
          "markov": kernels.MODE_MARKOV}


@dataclass
class PredictionReport:
    n_predictions: int
    n_correct: int
    steps_index: np.ndarray = field(repr=False, default=None)
    steps_predicted: np.ndarray = field(repr=False, default=None)
    steps_actual: np.ndarray = field(repr=False, default=None)

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n_predictions if self.n_predictions else float("nan")

    @property
    def per_step(self):
        if self.steps_index is None:
            return []
        return [(int(i), p, a, p == a) for i, p, a in
                zip(self.steps_index.tolist(), self.steps_predicted.tolist(),
                    self.steps_actual.tolist())]

    def to_dict(self, **extra) -> dict:
        acc = self.accuracy
        out = {"n_predictions": self.n_predictions, "n_correct": self.n_correct,
               "accuracy": None if math.isnan(acc) else acc}
        out.update(extra)
        return out


def _object_array(values):
    # np.asarray would unpack tuple symbols (e.g. CellId) into a 2-D array
    out = np.empty(len(values), dtype=object)
    for i, v in enumerate(values):
        out[i] = v
    return out


def _report(index, predicted, actual) -> PredictionReport:
    index = np.asarray(index, dtype=np.int64)
    predicted = _object_array(predicted)
    actual = _object_array(actual)
    n_correct = int(sum(p == a for p, a in zip(predicted.tolist(), actual.tolist())))
    return PredictionReport(int(index.shape[0]), n_correct, index, predicted, actual)


# ---------------------------------------------------------------------------
# functional baselines
# ---------------------------------------------------------------------------

def toploc_predict(history):
    """Most frequent symbol so far; ties go to the earliest first occurrence."""
    counts = {}
    for s in history:
        if s is not None:
            counts[s] = counts.get(s, 0) + 1
    if not counts:
        return None
    # dicts keep insertion order, so max() resolves ties by first occurrence
    return max(counts, key=counts.__getitem__)


def stationary_predict(history):
    """Last non-MISSING symbol."""
    for s in reversed(history):
        if s is not None:
            return s
    return None


@dataclass
class MarkovModel:
    """First-order transition and frequency counts.

    Both maps keep insertion order, which is the first-observed order used
    for tie-breaking.
    """

    transition_counts: dict = field(default_factory=dict)
    frequency_counts: dict = field(default_factory=dict)

    def observe(self, prev, cur):
        if cur is None:
            return
        self.frequency_counts[cur] = self.frequency_counts.get(cur, 0) + 1
        if prev is not None:
            row = self.transition_counts.setdefault(prev, {})
            row[cur] = row.get(cur, 0) + 1

    @classmethod
    def fit(cls, history):
        m = cls()
        prev = None
        for s in history:
            m.observe(prev, s)
            prev = s
        return m


def markov_predict(model: MarkovModel, current):
    """Most likely successor of ``current``, falling back to the modal state."""
    row = model.transition_counts.get(current) if current is not None else None
    if row:
        return max(row, key=row.__getitem__)
    if not model.frequency_counts:
        return None
    return max(model.frequency_counts, key=model.frequency_counts.__getitem__)


# ---------------------------------------------------------------------------
# incremental predictor objects for the generic harness
# ---------------------------------------------------------------------------

class ToplocPredictor:
    name = "toploc"

    def __init__(self):
        self.counts = {}
        self.first_seen = {}
        self.best = None

    def predict(self):
        return self.best

    def observe(self, symbol):
        if symbol is None:
            return
        self.first_seen.setdefault(symbol, len(self.first_seen))
        c = self.counts.get(symbol, 0) + 1
        self.counts[symbol] = c
        best = self.best
        if best is None or c > self.counts[best] or (
                c == self.counts[best] and self.first_seen[symbol] < self.first_seen[best]):
            self.best = symbol


class StationaryPredictor:
    name = "stationary"

    def __init__(self):
        self.last = None

    def predict(self):
        return self.last

    def observe(self, symbol):
        if symbol is not None:
            self.last = symbol


class MarkovPredictor:
    name = "markov"

    def __init__(self):
        self.model = MarkovModel()
        self.prev = None
        self.last = None

    def predict(self):
        return markov_predict(self.model, self.last)

    def observe(self, symbol):
        self.model.observe(self.prev, symbol)
        self.prev = symbol
        if symbol is not None:
            self.last = symbol


def make_predictor(name: str):
    try:
        return {"toploc": ToplocPredictor, "stationary": StationaryPredictor,
                "markov": MarkovPredictor}[name]()
    except KeyError:
        raise ValueError(f"unknown baseline {name!r}") from None


def evaluate_online(stream, predictor) -> PredictionReport:
    """Progressive evaluation: predict symbol i from [0, i), then reveal it.

    ``predictor`` needs ``predict()`` and ``observe(symbol)``. Steps whose
    truth is MISSING, or where the predictor has nothing to say (None), are
    not scored.
    """
    if isinstance(predictor, str):
        predictor = make_predictor(predictor)
    index, predicted, actual = [], [], []
    for i, truth in enumerate(stream):
        if i >= 1:
            guess = predictor.predict()
            if truth is not None and guess is not None:
                index.append(i)
                predicted.append(guess)
                actual.append(truth)
        predictor.observe(truth)
    return _report(index, predicted, actual)


def evaluate_baseline(stream, model: str) -> PredictionReport:
    """Same result as :func:`evaluate_online` for a baseline, via the kernels.

    ``stream`` may be a symbol list or an int array of codes (-1 = MISSING)
    whose code order follows first appearance.
    """
    if model not in _MODES:
        raise ValueError(f"unknown baseline {model!r}")
    if isinstance(stream, np.ndarray) and np.issubdtype(stream.dtype, np.integer):
        codes = stream.astype(np.int64)
        decode = None
    else:
        stream = list(stream)
        codes = encode(stream)
        decode = {}
        for c, s in zip(codes.tolist(), stream):
            if c >= 0:
                decode.setdefault(c, s)
    n_symbols = int(codes.max()) + 1 if codes.size and codes.max() >= 0 else 0
    pair_id, pair_from, pair_to, pair_stamp = kernels.pair_index(codes)
    pred = kernels.online_predictions(codes, n_symbols, _MODES[model], pair_id, pair_from,
                                      pair_to, pair_stamp)
    scored = np.flatnonzero((pred >= 0) & (codes >= 0))
    p, a = pred[scored], codes[scored]
    if decode is not None:
        return _report(scored, [decode[c] for c in p.tolist()], [decode[c] for c in a.tolist()])
    return PredictionReport(int(scored.shape[0]), int(np.sum(p == a)), scored, p, a)


# ---------------------------------------------------------------------------
# online linear models
# ---------------------------------------------------------------------------

LR0 = 0.1
LR_DECAY = 1e-3
L2 = 1e-4


class _ScaledWeights:
    """Weight matrix stored as ``scale * V`` so L2 shrinkage costs O(1)."""

    def __init__(self, n_rows, lr0, lr_decay, l2):
        self.lr0 = lr0
        self.lr_decay = lr_decay
        self.l2 = l2
        self.t = 0
        self.scale = 1.0
        self.v = np.zeros((max(1, n_rows), 16))
        self.n_features = 0

    def learning_rate(self) -> float:
        return self.lr0 / (1.0 + self.lr_decay * self.t)

    def _grow(self, rows, cols):
        r, c = self.v.shape
        if rows <= r and cols <= c:
            return
        nv = np.zeros((r if rows <= r else max(2 * r, rows), c if cols <= c else max(2 * c, cols)))
        nv[:r, :c] = self.v
        self.v = nv

    def ensure_features(self, idx):
        if idx.size:
            top = int(idx.max()) + 1
            if top > self.n_features:
                self.n_features = top
                self._grow(self.v.shape[0], top)

    def raw_scores(self, idx, val, n_rows):
        if not idx.size:
            return np.zeros(n_rows)
        return self.scale * (self.v[:n_rows, idx] @ val)

    def apply(self, idx, val, row_grad, n_rows):
        lr = self.learning_rate()
        self.scale *= 1.0 - lr * self.l2
        if idx.size:
            self.v[:n_rows, idx] -= (lr / self.scale) * np.outer(row_grad, val)
        if self.scale < 1e-8:
            self.v *= self.scale
            self.scale = 1.0
        self.t += 1

    def dense(self, n_rows):
        return self.scale * self.v[:n_rows, : self.n_features]


def _as_sparse(x):
    idx, val = x
    return np.asarray(idx, dtype=np.int64), np.asarray(val, dtype=float)


def _softmax(z):
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


class OnlineSoftmaxModel:
    """Multinomial logistic regression trained by one SGD step per observation.

    Inputs are sparse ``(indices, values)`` pairs; classes and features are
    added on first sight with zero weights. Learning rate is
    ``lr0 / (1 + lr_decay * t)`` with ``t`` the number of past updates.
    """

    def __init__(self, lr0: float = LR0, lr_decay: float = LR_DECAY, l2: float = L2):
        self.w = _ScaledWeights(4, lr0, lr_decay, l2)
        self.classes = []
        self._class_index = {}

    @property
    def params(self) -> dict:
        return {"lr0": self.w.lr0, "lr_decay": self.w.lr_decay, "l2": self.w.l2}

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def scores(self, x):
        idx, val = _as_sparse(x)
        self.w.ensure_features(idx)
        return self.w.raw_scores(idx, val, self.n_classes)

    def proba(self, x):
        if not self.classes:
            return np.zeros(0)
        return _softmax(self.scores(x))

    def predict(self, x):
        if not self.classes:
            return None
        return self.classes[int(np.argmax(self.scores(x)))]

    def _add_class(self, y):
        if y not in self._class_index:
            self._class_index[y] = len(self.classes)
            self.classes.append(y)
            self.w._grow(len(self.classes), self.w.v.shape[1])

    def gradient(self, x, y):
        """Dense gradient of ``-log p(y|x) + l2/2 ||W||^2`` at the current weights."""
        self._add_class(y)
        idx, val = _as_sparse(x)
        self.w.ensure_features(idx)
        g = self.w.l2 * self.w.dense(self.n_classes)
        resid = self.proba(x)
        resid[self._class_index[y]] -= 1.0
        np.add.at(g, (slice(None), idx), np.outer(resid, val))
        return g

    def loss(self, x, y, weights=None) -> float:
        idx, val = _as_sparse(x)
        self._add_class(y)
        self.w.ensure_features(idx)
        w = self.w.dense(self.n_classes) if weights is None else weights
        z = w[:, idx] @ val if idx.size else np.zeros(self.n_classes)
        z = z - z.max()
        logp = z[self._class_index[y]] - math.log(np.exp(z).sum())
        return -logp + 0.5 * self.w.l2 * float(np.sum(w * w))

    def update(self, x, y):
        self._add_class(y)
        idx, val = _as_sparse(x)
        self.w.ensure_features(idx)
        resid = self.proba(x)
        resid[self._class_index[y]] -= 1.0
        self.w.apply(idx, val, resid, self.n_classes)

    def step(self, x, y):
        """Predict with the current weights, then learn from ``(x, y)``."""
        guess = self.predict(x)
        self.update(x, y)
        return guess


def softmax_update_predict(model: OnlineSoftmaxModel, features, true_class):
    return model.step(features, true_class), model


class OnlineLogisticModel:
    """Binary logistic regression with the same SGD schedule as the softmax model."""

    def __init__(self, lr0: float = LR0, lr_decay: float = LR_DECAY, l2: float = L2,
                 threshold: float = 0.5):
        self.w = _ScaledWeights(1, lr0, lr_decay, l2)
        self.threshold = threshold

    @property
    def params(self) -> dict:
        return {"lr0": self.w.lr0, "lr_decay": self.w.lr_decay, "l2": self.w.l2,
                "threshold": self.threshold}

    def proba(self, x) -> float:
        idx, val = _as_sparse(x)
        self.w.ensure_features(idx)
        z = float(self.w.raw_scores(idx, val, 1)[0])
        if z >= 0:
            return 1.0 / (1.0 + math.exp(-z))
        e = math.exp(z)
        return e / (1.0 + e)

    def predict(self, x) -> int:
        return int(self.proba(x) >= self.threshold)

    def update(self, x, y):
        idx, val = _as_sparse(x)
        self.w.ensure_features(idx)
        self.w.apply(idx, val, np.array([self.proba(x) - float(y)]), 1)

    def step(self, x, y) -> int:
        guess = self.predict(x)
        self.update(x, y)
        return guess
