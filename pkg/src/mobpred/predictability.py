"""Entropy-rate estimation and the Fano upper bound on predictability."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

FANO_MAX_ITER = 200


@dataclass(frozen=True)
class EntropyEstimate:
    s_bits_per_symbol: float
    n: int
    n_symbols: int


@dataclass(frozen=True)
class PredictabilityBound:
    pi_max: float
    s_bits_per_symbol: float
    n: int
    n_symbols: int


def encode(stream):
    """Dense integer codes in order of first appearance; None maps to -1."""
    table = {}
    out = np.empty(len(stream), dtype=np.int64)
    for i, s in enumerate(stream):
        if s is None:
            out[i] = -1
        else:
            out[i] = table.setdefault(s, len(table))
    return out


def _as_codes(stream):
    if isinstance(stream, np.ndarray) and np.issubdtype(stream.dtype, np.integer):
        return stream.astype(np.int64)
    return encode(list(stream))


def match_lengths(stream) -> np.ndarray:
    """Lambda_i: length of the shortest substring starting at i that does not
    occur inside ``stream[:i]``; ``n - i + 1`` when the whole suffix occurs."""
    codes = _as_codes(stream)
    return kernels.prefix_match_lengths(codes) + 1


def lz_entropy(stream) -> EntropyEstimate:
    """Lempel-Ziv entropy-rate estimate ``n log2 n / sum(Lambda_i)`` in bits."""
    codes = _as_codes(stream)
    n = codes.shape[0]
    if n < 2:
        raise ValueError("need at least two symbols")
    if (codes < 0).any():
        raise ValueError("stream contains MISSING symbols; drop them first")
    lam = kernels.prefix_match_lengths(codes) + 1
    s = n * math.log2(n) / float(lam.sum())
    return EntropyEstimate(s, n, int(np.unique(codes).shape[0]))


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def fano_expression(pi: float, n_symbols: int) -> float:
    """Right-hand side of the Fano equality for predictability ``pi``."""
    extra = (1.0 - pi) * math.log2(n_symbols - 1) if n_symbols > 1 else 0.0
    return binary_entropy(pi) + extra


def fano_pi_max(s: float, n_symbols: int) -> float:
    """Largest predictability compatible with entropy ``s`` over ``n_symbols`` states.

    Solved by bisection on ``(1/N, 1)``, where the Fano expression is strictly
    decreasing; the loop runs until the bracket stops shrinking in floating
    point (well below 1e-9) or hits the iteration cap.
    """
    if n_symbols < 0:
        raise ValueError("n_symbols must be non-negative")
    if n_symbols <= 1 or s <= 0.0:
        return 1.0
    if s >= math.log2(n_symbols):
        return 1.0 / n_symbols
    lo, hi = 1.0 / n_symbols, 1.0
    for _ in range(FANO_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if fano_expression(mid, n_symbols) > s:
            lo = mid
        else:
            hi = mid
    # pick the bracket end with the smaller residual
    if abs(fano_expression(lo, n_symbols) - s) <= abs(fano_expression(hi, n_symbols) - s):
        return lo
    return hi


def bound_for_user(stream) -> PredictabilityBound:
    """Entropy estimate plus Fano bound; MISSING symbols are spliced out."""
    codes = _as_codes(stream)
    codes = codes[codes >= 0]
    est = lz_entropy(codes)
    return PredictabilityBound(fano_pi_max(est.s_bits_per_symbol, est.n_symbols),
                               est.s_bits_per_symbol, est.n, est.n_symbols)
