"""Hot inner loops.

Every kernel exists twice: a loop body compiled with numba, and a numpy (or
plain Python) twin with identical results. ``USE_NUMBA`` from ``_accel``
picks which one the public names bind to; both stay importable through
``IMPLEMENTATIONS`` so tests and the benchmark can compare them.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit

EARTH_RADIUS_M = 6371000.0

MODE_TOPLOC = 0
MODE_STATIONARY = 1
MODE_MARKOV = 2


# ---------------------------------------------------------------------------
# longest sub-array with non-negative sum (completeness window search)
# ---------------------------------------------------------------------------

def _longest_nonneg_loop(weights):
    n = weights.shape[0]
    prefix = np.zeros(n + 1, dtype=np.int64)
    for k in range(n):
        prefix[k + 1] = prefix[k] + weights[k]
    # strictly decreasing prefix minima are the only useful starts
    stack = np.empty(n + 1, dtype=np.int64)
    top = 0
    for k in range(n + 1):
        if top == 0 or prefix[k] < prefix[stack[top - 1]]:
            stack[top] = k
            top += 1
    best = 0
    for j in range(n, 0, -1):
        while top > 0 and prefix[stack[top - 1]] <= prefix[j]:
            length = j - stack[top - 1]
            if length > best:
                best = length
            top -= 1
        if top == 0:
            break
    if best == 0:
        return -1, 0
    for i in range(n - best + 1):
        if prefix[i + best] >= prefix[i]:
            return i, best
    return -1, 0


def _longest_nonneg_np(weights):
    weights = np.asarray(weights, dtype=np.int64)
    n = weights.shape[0]
    if n == 0:
        return -1, 0
    prefix = np.concatenate(([0], np.cumsum(weights)))
    suffix_max = np.maximum.accumulate(prefix[::-1])[::-1]
    # suffix_max is non-increasing; last j with suffix_max[j] >= prefix[i]
    last = np.searchsorted(-suffix_max, -prefix, side="right") - 1
    lengths = last - np.arange(n + 1)
    best = int(lengths.max())
    if best <= 0:
        return -1, 0
    return int(np.argmax(lengths)), best


# ---------------------------------------------------------------------------
# forward fill with a run limit (cell sequences)
# ---------------------------------------------------------------------------

def _fill_source_loop(source, fill_limit):
    n = source.shape[0]
    out = np.empty(n, dtype=np.int64)
    last = -1
    run = 0
    for k in range(n):
        if source[k] >= 0:
            last = source[k]
            run = 0
            out[k] = last
        else:
            run += 1
            if last >= 0 and run <= fill_limit:
                out[k] = last
            else:
                out[k] = -1
    return out


def _fill_source_np(source, fill_limit):
    source = np.asarray(source, dtype=np.int64)
    n = source.shape[0]
    idx = np.arange(n)
    valid = source >= 0
    last_pos = np.maximum.accumulate(np.where(valid, idx, -1))
    safe = np.maximum(last_pos, 0)
    out = np.where((last_pos >= 0) & (idx - last_pos <= fill_limit), source[safe], -1)
    return out.astype(np.int64)


# ---------------------------------------------------------------------------
# greedy stop grouping
# ---------------------------------------------------------------------------

def _greedy_stops_loop(t, lat, lon, delta_m, gap_s, use_centroid):
    n = t.shape[0]
    starts = np.empty(n, dtype=np.int64)
    ends = np.empty(n, dtype=np.int64)
    k = 0
    if n == 0:
        return starts[:0], ends[:0]
    start = 0
    for i in range(1, n):
        if use_centroid:
            clat = np.median(lat[start:i])
            clon = np.median(lon[start:i])
        else:
            clat = lat[i - 1]
            clon = lon[i - 1]
        p1 = math.radians(clat)
        p2 = math.radians(lat[i])
        dphi = p2 - p1
        dlmb = math.radians(lon[i] - clon)
        h = math.sin(dphi / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlmb / 2.0) ** 2
        d = 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(min(1.0, h)))
        if d <= delta_m and t[i] - t[i - 1] <= gap_s:
            continue
        starts[k] = start
        ends[k] = i
        k += 1
        start = i
    starts[k] = start
    ends[k] = n
    k += 1
    return starts[:k], ends[:k]


def _greedy_stops_py(t, lat, lon, delta_m, gap_s, use_centroid):
    # numpy median per step is the dominant cost here; lists keep the rest cheap
    t_l = t.tolist()
    lat_l = lat.tolist()
    lon_l = lon.tolist()
    n = len(t_l)
    if n == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    starts, ends = [], []
    start = 0
    for i in range(1, n):
        if use_centroid:
            clat = float(np.median(lat[start:i]))
            clon = float(np.median(lon[start:i]))
        else:
            clat, clon = lat_l[i - 1], lon_l[i - 1]
        p1 = math.radians(clat)
        p2 = math.radians(lat_l[i])
        h = (math.sin((p2 - p1) / 2.0) ** 2
             + math.cos(p1) * math.cos(p2) * math.sin(math.radians(lon_l[i] - clon) / 2.0) ** 2)
        d = 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(min(1.0, h)))
        if d <= delta_m and t_l[i] - t_l[i - 1] <= gap_s:
            continue
        starts.append(start)
        ends.append(i)
        start = i
    starts.append(start)
    ends.append(n)
    return np.asarray(starts, np.int64), np.asarray(ends, np.int64)


# ---------------------------------------------------------------------------
# online baselines over dense integer codes (-1 = missing)
# ---------------------------------------------------------------------------

def pair_index(codes):
    """Identify consecutive valid transitions.

    Returns ``(pair_id, pair_from, pair_to, pair_stamp)`` where ``pair_id[i]``
    names the transition ``codes[i-1] -> codes[i]`` (or -1), and
    ``pair_stamp`` is the step at which each transition was first observed.
    """
    codes = np.asarray(codes, dtype=np.int64)
    n = codes.shape[0]
    pair_id = np.full(n, -1, dtype=np.int64)
    empty = np.zeros(0, np.int64)
    if n < 2 or codes.max() < 0:
        return pair_id, empty, empty, empty
    k = int(codes.max()) + 1
    ok = (codes[1:] >= 0) & (codes[:-1] >= 0)
    pos = np.flatnonzero(ok) + 1
    keys = codes[pos - 1] * k + codes[pos]
    uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    pair_id[pos] = inverse
    return pair_id, uniq // k, uniq % k, pos[first]


def _online_loop(codes, n_symbols, mode, pair_id, pair_from, pair_to, pair_stamp):
    n = codes.shape[0]
    pred = np.full(n, -1, dtype=np.int64)
    freq = np.zeros(n_symbols, dtype=np.int64)
    best_sym = -1
    best_cnt = 0
    pair_cnt = np.zeros(pair_from.shape[0], dtype=np.int64)
    best_pair = np.full(n_symbols, -1, dtype=np.int64)
    last = -1
    for i in range(n):
        if i >= 1:
            if mode == 0:
                pred[i] = best_sym
            elif mode == 1:
                pred[i] = last
            else:
                if last >= 0 and best_pair[last] >= 0:
                    pred[i] = pair_to[best_pair[last]]
                else:
                    pred[i] = best_sym
        x = codes[i]
        if x < 0:
            continue
        freq[x] += 1
        if freq[x] > best_cnt or (freq[x] == best_cnt and x < best_sym):
            best_sym = x
            best_cnt = freq[x]
        pid = pair_id[i]
        if pid >= 0:
            pair_cnt[pid] += 1
            a = pair_from[pid]
            b = best_pair[a]
            if b < 0 or pair_cnt[pid] > pair_cnt[b] or (
                    pair_cnt[pid] == pair_cnt[b] and pair_stamp[pid] < pair_stamp[b]):
                best_pair[a] = pid
        last = x
    return pred


def _online_py(codes, n_symbols, mode, pair_id, pair_from, pair_to, pair_stamp):
    codes_l = codes.tolist()
    pid_l = pair_id.tolist()
    frm = pair_from.tolist()
    to = pair_to.tolist()
    stamp = pair_stamp.tolist()
    n = len(codes_l)
    pred = [-1] * n
    freq = [0] * n_symbols
    pair_cnt = [0] * len(frm)
    best_pair = [-1] * n_symbols
    best_sym, best_cnt, last = -1, 0, -1
    for i in range(n):
        if i >= 1:
            if mode == MODE_TOPLOC:
                pred[i] = best_sym
            elif mode == MODE_STATIONARY:
                pred[i] = last
            elif last >= 0 and best_pair[last] >= 0:
                pred[i] = to[best_pair[last]]
            else:
                pred[i] = best_sym
        x = codes_l[i]
        if x < 0:
            continue
        freq[x] += 1
        if freq[x] > best_cnt or (freq[x] == best_cnt and x < best_sym):
            best_sym, best_cnt = x, freq[x]
        pid = pid_l[i]
        if pid >= 0:
            pair_cnt[pid] += 1
            a = frm[pid]
            b = best_pair[a]
            if b < 0 or pair_cnt[pid] > pair_cnt[b] or (
                    pair_cnt[pid] == pair_cnt[b] and stamp[pid] < stamp[b]):
                best_pair[a] = pid
        last = x
    return np.asarray(pred, dtype=np.int64)


# ---------------------------------------------------------------------------
# suffix array machinery for Lempel-Ziv match lengths
# ---------------------------------------------------------------------------

def suffix_array(codes):
    """Suffix array by prefix doubling, O(n log^2 n) in numpy."""
    codes = np.asarray(codes, dtype=np.int64)
    n = codes.shape[0]
    if n == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    _, rank = np.unique(codes, return_inverse=True)
    rank = rank.astype(np.int64)
    k = 1
    while True:
        second = np.full(n, -1, dtype=np.int64)
        if k < n:
            second[: n - k] = rank[k:]
        sa = np.lexsort((second, rank))
        r, s = rank[sa], second[sa]
        step = np.empty(n, dtype=np.int64)
        step[0] = 0
        step[1:] = (r[1:] != r[:-1]) | (s[1:] != s[:-1])
        new_rank = np.empty(n, dtype=np.int64)
        new_rank[sa] = np.cumsum(step)
        rank = new_rank
        if rank.max() == n - 1 or k >= n:
            break
        k *= 2
    return sa.astype(np.int64), rank


def _kasai_loop(codes, sa, rank):
    n = codes.shape[0]
    lcp = np.zeros(n, dtype=np.int64)
    h = 0
    for i in range(n):
        r = rank[i]
        if r > 0:
            j = sa[r - 1]
            while i + h < n and j + h < n and codes[i + h] == codes[j + h]:
                h += 1
            lcp[r] = h
            if h > 0:
                h -= 1
        else:
            h = 0
    return lcp


def _kasai_py(codes, sa, rank):
    c = codes.tolist()
    sa_l = sa.tolist()
    rank_l = rank.tolist()
    n = len(c)
    lcp = [0] * n
    h = 0
    for i in range(n):
        r = rank_l[i]
        if r > 0:
            j = sa_l[r - 1]
            while i + h < n and j + h < n and c[i + h] == c[j + h]:
                h += 1
            lcp[r] = h
            if h > 0:
                h -= 1
        else:
            h = 0
    return np.asarray(lcp, dtype=np.int64)


def sparse_min_table(values):
    values = np.asarray(values, dtype=np.int64)
    n = values.shape[0]
    levels = max(1, int(n).bit_length())
    big = np.iinfo(np.int64).max
    table = np.full((levels, n), big, dtype=np.int64)
    table[0] = values
    for p in range(1, levels):
        half = 1 << (p - 1)
        width = 1 << p
        if width > n:
            break
        table[p, : n - width + 1] = np.minimum(table[p - 1, : n - width + 1],
                                               table[p - 1, half: n - half + 1])
    return table


def _match_lengths_loop(n, sa, rank, lcp_table, sa_table, log2):
    levels = lcp_table.shape[0]
    out = np.zeros(n, dtype=np.int64)
    m = 0
    for i in range(1, n):
        m = m - 1 if m > 0 else 0
        while i + m < n and m + 1 <= i:
            want = m + 1
            r = rank[i]
            lo = r
            hi = r
            for p in range(levels - 1, -1, -1):
                step = 1 << p
                if lo - step >= 0 and lcp_table[p, lo - step + 1] >= want:
                    lo -= step
            for p in range(levels - 1, -1, -1):
                step = 1 << p
                if hi + step <= n - 1 and lcp_table[p, hi + 1] >= want:
                    hi += step
            q = log2[hi - lo + 1]
            first = min(sa_table[q, lo], sa_table[q, hi - (1 << q) + 1])
            if first <= i - want:
                m = want
            else:
                break
        out[i] = m
    return out


def _match_lengths_py(n, sa, rank, lcp_table, sa_table, log2):
    levels = lcp_table.shape[0]
    lcp_rows = [row.tolist() for row in lcp_table]
    sa_rows = [row.tolist() for row in sa_table]
    rank_l = rank.tolist()
    lg = log2.tolist()
    out = [0] * n
    m = 0
    for i in range(1, n):
        m = m - 1 if m > 0 else 0
        while i + m < n and m + 1 <= i:
            want = m + 1
            lo = hi = rank_l[i]
            for p in range(levels - 1, -1, -1):
                step = 1 << p
                if lo - step >= 0 and lcp_rows[p][lo - step + 1] >= want:
                    lo -= step
            for p in range(levels - 1, -1, -1):
                step = 1 << p
                if hi + step <= n - 1 and lcp_rows[p][hi + 1] >= want:
                    hi += step
            q = lg[hi - lo + 1]
            if min(sa_rows[q][lo], sa_rows[q][hi - (1 << q) + 1]) <= i - want:
                m = want
            else:
                break
        out[i] = m
    return np.asarray(out, dtype=np.int64)


def _make_match_lengths(kasai, match):
    def prefix_match_lengths(codes):
        """Longest prefix of ``codes[i:]`` occurring entirely inside ``codes[:i]``."""
        codes = np.asarray(codes, dtype=np.int64)
        n = codes.shape[0]
        if n == 0:
            return np.zeros(0, np.int64)
        sa, rank = suffix_array(codes)
        lcp = kasai(codes, sa, rank)
        log2 = np.zeros(n + 1, dtype=np.int64)
        log2[2:] = np.floor(np.log2(np.arange(2, n + 1))).astype(np.int64)
        return match(n, sa, rank, sparse_min_table(lcp), sparse_min_table(sa), log2)
    return prefix_match_lengths


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def _build():
    impls = {
        "numpy": {
            "longest_nonneg_window": _longest_nonneg_np,
            "fill_source": _fill_source_np,
            "greedy_stops": _greedy_stops_py,
            "online_predictions": _online_py,
            "prefix_match_lengths": _make_match_lengths(_kasai_py, _match_lengths_py),
        }
    }
    longest = njit(_longest_nonneg_loop)
    if longest is not None:
        impls["numba"] = {
            "longest_nonneg_window": longest,
            "fill_source": njit(_fill_source_loop),
            "greedy_stops": njit(_greedy_stops_loop),
            "online_predictions": njit(_online_loop),
            "prefix_match_lengths": _make_match_lengths(njit(_kasai_loop), njit(_match_lengths_loop)),
        }
    return impls


IMPLEMENTATIONS = _build()
BACKEND = "numba" if USE_NUMBA and "numba" in IMPLEMENTATIONS else "numpy"
_active = IMPLEMENTATIONS[BACKEND]

longest_nonneg_window = _active["longest_nonneg_window"]
fill_source = _active["fill_source"]
greedy_stops = _active["greedy_stops"]
online_predictions = _active["online_predictions"]
prefix_match_lengths = _active["prefix_match_lengths"]
