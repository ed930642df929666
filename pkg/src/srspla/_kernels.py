"""Compiled inner loops for the nonlinear dynamics features.

All kernels are exact (no approximation): the sort-scan versions enumerate
precisely the pairs a brute-force double loop would, pruning by the first
embedding coordinate, so counts match a naive implementation bit-for-bit.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def sampen_counts(x, n_templates, m, r):
    """Template match counts (B at length m, A at length m+1), Chebyshev <= r.

    Pairs over the shared start indices 0..n_templates-1, each counted once.
    """
    idx = np.argsort(x[:n_templates])
    b = 0
    a = 0
    for p in range(n_templates):
        i = idx[p]
        xi = x[i]
        for q in range(p + 1, n_templates):
            j = idx[q]
            if x[j] - xi > r:
                break
            ok = True
            for lag in range(1, m):
                if abs(x[i + lag] - x[j + lag]) > r:
                    ok = False
                    break
            if ok:
                b += 1
                if abs(x[i + m] - x[j + m]) <= r:
                    a += 1
    return b, a


@njit(cache=True)
def recurrence_pair_count(x, n_rows, emb, eps):
    """Number of embedded-vector pairs (i<j) within Chebyshev distance eps."""
    idx = np.argsort(x[:n_rows])
    count = 0
    for p in range(n_rows):
        i = idx[p]
        xi = x[i]
        for q in range(p + 1, n_rows):
            j = idx[q]
            if x[j] - xi > eps:
                break
            ok = True
            for lag in range(1, emb):
                if abs(x[i + lag] - x[j + lag]) > eps:
                    ok = False
                    break
            if ok:
                count += 1
    return count


@njit(cache=True)
def nearest_neighbors_excluded(y, theiler):
    """Euclidean nearest neighbor per row with |i-j| > theiler, -1 if none.

    Outward scan over the first-coordinate ordering; a side closes once its
    coordinate gap alone exceeds the best distance found.
    """
    n, dims = y.shape
    order = np.argsort(y[:, 0])
    pos = np.empty(n, np.int64)
    for p in range(n):
        pos[order[p]] = p
    out = np.full(n, -1, np.int64)
    for i in range(n):
        p = pos[i]
        best = np.inf
        best_j = -1
        left = p - 1
        right = p + 1
        while left >= 0 or right < n:
            if left >= 0:
                gap_l = y[i, 0] - y[order[left], 0]
            else:
                gap_l = np.inf
            if right < n:
                gap_r = y[order[right], 0] - y[i, 0]
            else:
                gap_r = np.inf
            if gap_l <= gap_r:
                q = left
                gap = gap_l
                left -= 1
            else:
                q = right
                gap = gap_r
                right += 1
            if gap * gap >= best:
                if gap_l <= gap_r:
                    left = -1  # this side exhausted
                else:
                    right = n
                continue
            j = order[q]
            if abs(j - i) > theiler:
                d = 0.0
                for c in range(dims):
                    diff = y[j, c] - y[i, c]
                    d += diff * diff
                if d < best:
                    best = d
                    best_j = j
        out[i] = best_j
    return out


@njit(cache=True)
def divergence_curve(y, base, nbr, steps, log_floor):
    """Mean log Euclidean separation of neighbor pairs after 1..steps steps."""
    n_pairs = len(base)
    dims = y.shape[1]
    out = np.zeros(steps)
    for s in range(1, steps + 1):
        acc = 0.0
        for t in range(n_pairs):
            d = 0.0
            for c in range(dims):
                diff = y[base[t] + s, c] - y[nbr[t] + s, c]
                d += diff * diff
            d = math.sqrt(d)
            if d < log_floor:
                d = log_floor
            acc += math.log(d)
        out[s - 1] = acc / n_pairs
    return out


@njit(cache=True)
def higuchi_curve_lengths(x, kmax):
    """Mean normalized curve length per interval k = 1..kmax."""
    n = len(x)
    out = np.zeros(kmax)
    for k in range(1, kmax + 1):
        acc = 0.0
        used = 0
        for m0 in range(k):
            npts = (n - m0 - 1) // k
            if npts < 1:
                continue
            s = 0.0
            for step in range(1, npts + 1):
                s += abs(x[m0 + step * k] - x[m0 + (step - 1) * k])
            acc += s * (n - 1) / (npts * k) / k
            used += 1
        if used:
            out[k - 1] = acc / used
    return out
