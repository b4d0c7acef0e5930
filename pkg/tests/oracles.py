"""Slow, straight-line reference computations used to check the package.

Nothing here imports hsibands: every value is recomputed from scratch with
plain Python loops so a shared bug cannot hide on both sides.
"""

import math
from collections import Counter


def glcm_pairs(grid, levels, dx, dy, symmetric):
    """Brute-force co-occurrence counts as a nested list."""
    h = len(grid)
    w = len(grid[0])
    counts = [[0] * levels for _ in range(levels)]
    for y in range(h):
        for x in range(w):
            xn, yn = x + dx, y + dy
            if 0 <= xn < w and 0 <= yn < h:
                a, b = grid[y][x], grid[yn][xn]
                counts[a][b] += 1
                if symmetric:
                    counts[b][a] += 1
    return counts


def quantize(values, levels):
    """Round-half-up min-max quantization of a flat list."""
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0] * len(values)
    out = []
    for v in values:
        q = math.floor((v - lo) / (hi - lo) * (levels - 1) + 0.5)
        out.append(min(max(q, 0), levels - 1))
    return out


def mi_plugin(xs, ys):
    """sum p(a,b) log2(p(a,b) / (p(a) p(b))) over observed pairs."""
    n = len(xs)
    joint = Counter(zip(xs, ys))
    pa = Counter(xs)
    pb = Counter(ys)
    total = 0.0
    for (a, b), c in joint.items():
        p = c / n
        total += p * math.log2(p / ((pa[a] / n) * (pb[b] / n)))
    return total


def mi_plugin_counts(counts):
    """Same sum, from a 2-D count table."""
    n = sum(sum(r) for r in counts)
    rows = [sum(r) for r in counts]
    cols = [sum(counts[i][j] for i in range(len(counts))) for j in range(len(counts[0]))]
    total = 0.0
    for i, r in enumerate(counts):
        for j, c in enumerate(r):
            if c:
                p = c / n
                total += p * math.log2(p / ((rows[i] / n) * (cols[j] / n)))
    return total


def greedy_selection(bands, labels, x_max, threshold, levels, mask=None, decimals=10, margin=1e-12):
    """Band selection written as one plain loop, sharing no code with the package.

    ``bands`` is a list of flat pixel lists, ``labels`` a flat label list.
    Returns (selected, decisions) where decisions is a list of
    (band, mi, accepted) tuples in visiting order.

    Equal MI values are only equal up to round-off, so the ranking compares
    MI rounded to ``decimals`` and "MI > MI* + Th" must hold by more than
    ``margin``. This is the package's documented tie rule.
    """
    idx = range(len(labels)) if mask is None else [i for i, m in enumerate(mask) if m]
    gt = [labels[i] for i in idx]

    def score(values):
        q = quantize(values, levels)
        return mi_plugin(gt, [q[i] for i in idx])

    mi_band = [score(b) for b in bands]
    R = sorted(range(len(bands)), key=lambda s: (-round(mi_band[s], decimals), s))

    # 1) select the first band
    S = R.pop(0)
    SS = [S]
    c_est0 = list(bands[S])
    mi_star = score(c_est0)
    decisions = [(S, mi_star, True)]
    while len(SS) < x_max and R:
        S = R.pop(0)
        c_est = [(a + b) / 2 for a, b in zip(c_est0, bands[S])]
        mi = score(c_est)
        if mi - (mi_star + threshold) > margin:
            mi_star = mi
            c_est0 = c_est
            SS.append(S)
            decisions.append((S, mi, True))
        else:
            decisions.append((S, mi, False))
    return SS, decisions
