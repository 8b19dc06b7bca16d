"""Pure-Python numeric kernels.

Mirrors ``_kernels.pyx`` operation for operation (same summation order,
no compensated sums) so both backends return bit-identical floats.
"""

from __future__ import annotations

import math
from collections.abc import Sequence


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    n = len(u)
    if n != len(v):
        raise ValueError(f"dimension mismatch: {n} vs {len(v)}")
    dot = 0.0
    nu = 0.0
    nv = 0.0
    for i in range(n):
        a = float(u[i])
        b = float(v[i])
        dot += a * b
        nu += a * a
        nv += b * b
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    r = dot / (math.sqrt(nu) * math.sqrt(nv))
    if r > 1.0:
        return 1.0
    if r < -1.0:
        return -1.0
    return r


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson r; NaN when either side has zero variance."""
    n = len(x)
    if n != len(y):
        raise ValueError(f"length mismatch: {n} vs {len(y)}")
    if n < 2:
        raise ValueError("need at least two observations")
    sx = 0.0
    sy = 0.0
    for i in range(n):
        sx += float(x[i])
        sy += float(y[i])
    mx = sx / n
    my = sy / n
    sxy = 0.0
    sxx = 0.0
    syy = 0.0
    for i in range(n):
        dx = float(x[i]) - mx
        dy = float(y[i]) - my
        sxy += dx * dy
        sxx += dx * dx
        syy += dy * dy
    if sxx == 0.0 or syy == 0.0:
        return math.nan
    r = sxy / (math.sqrt(sxx) * math.sqrt(syy))
    if r > 1.0:
        return 1.0
    if r < -1.0:
        return -1.0
    return r


def average_ranks(x: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the mean of their rank span."""
    n = len(x)
    vals = [float(v) for v in x]
    order = sorted(range(n), key=vals.__getitem__)
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i + 1
        while j < n and vals[order[j]] == vals[order[i]]:
            j += 1
        r = (i + j + 1) / 2.0
        for t in range(i, j):
            ranks[order[t]] = r
        i = j
    return ranks


def pair_counts(x: Sequence[float], y: Sequence[float]) -> tuple[int, int, int, int]:
    """Concordant, discordant, tied-only-in-x, tied-only-in-y pair counts."""
    n = len(x)
    if n != len(y):
        raise ValueError(f"length mismatch: {n} vs {len(y)}")
    xs = [float(v) for v in x]
    ys = [float(v) for v in y]
    c = d = tx = ty = 0
    for i in range(n - 1):
        xi = xs[i]
        yi = ys[i]
        for j in range(i + 1, n):
            dx = xs[j] - xi
            dy = ys[j] - yi
            if dx == 0.0:
                if dy != 0.0:
                    tx += 1
            elif dy == 0.0:
                ty += 1
            elif (dx > 0.0) == (dy > 0.0):
                c += 1
            else:
                d += 1
    return c, d, tx, ty
