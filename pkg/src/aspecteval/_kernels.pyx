# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numeric kernels; see ``_kernels_py`` for the reference twin."""

from libc.math cimport sqrt, NAN
from cpython.array cimport array
from libc.stdlib cimport free, malloc, qsort


cdef inline double[::1] _as_doubles(seq):
    return array("d", [float(v) for v in seq])


def cosine(u, v):
    cdef double[::1] a = _as_doubles(u)
    cdef double[::1] b = _as_doubles(v)
    cdef Py_ssize_t n = a.shape[0], i
    cdef double dot = 0.0, nu = 0.0, nv = 0.0, r
    if n != b.shape[0]:
        raise ValueError(f"dimension mismatch: {n} vs {b.shape[0]}")
    for i in range(n):
        dot += a[i] * b[i]
        nu += a[i] * a[i]
        nv += b[i] * b[i]
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    r = dot / (sqrt(nu) * sqrt(nv))
    if r > 1.0:
        return 1.0
    if r < -1.0:
        return -1.0
    return r


def pearson(x, y):
    cdef double[::1] a = _as_doubles(x)
    cdef double[::1] b = _as_doubles(y)
    cdef Py_ssize_t n = a.shape[0], i
    cdef double sx = 0.0, sy = 0.0, mx, my, dx, dy, sxy = 0.0, sxx = 0.0, syy = 0.0, r
    if n != b.shape[0]:
        raise ValueError(f"length mismatch: {n} vs {b.shape[0]}")
    if n < 2:
        raise ValueError("need at least two observations")
    for i in range(n):
        sx += a[i]
        sy += b[i]
    mx = sx / n
    my = sy / n
    for i in range(n):
        dx = a[i] - mx
        dy = b[i] - my
        sxy += dx * dy
        sxx += dx * dx
        syy += dy * dy
    if sxx == 0.0 or syy == 0.0:
        return NAN
    r = sxy / (sqrt(sxx) * sqrt(syy))
    if r > 1.0:
        return 1.0
    if r < -1.0:
        return -1.0
    return r


cdef struct _Keyed:
    double value
    Py_ssize_t index


cdef int _cmp_keyed(const void* pa, const void* pb) noexcept nogil:
    cdef double a = (<const _Keyed*>pa).value, b = (<const _Keyed*>pb).value
    return (a > b) - (a < b)


def average_ranks(x):
    # qsort is not stable, which is harmless: tied values share one rank
    cdef double[::1] vals = _as_doubles(x)
    cdef Py_ssize_t n = vals.shape[0], i, j, t
    cdef double r
    cdef double[::1] ranks = array("d", [0.0] * n)
    cdef _Keyed* keyed = <_Keyed*>malloc(max(n, 1) * sizeof(_Keyed))
    if keyed == NULL:
        raise MemoryError()
    try:
        for i in range(n):
            keyed[i].value = vals[i]
            keyed[i].index = i
        qsort(keyed, n, sizeof(_Keyed), _cmp_keyed)
        i = 0
        while i < n:
            j = i + 1
            while j < n and keyed[j].value == keyed[i].value:
                j += 1
            r = (i + j + 1) / 2.0
            for t in range(i, j):
                ranks[keyed[t].index] = r
            i = j
    finally:
        free(keyed)
    return list(ranks)


def pair_counts(x, y):
    cdef double[::1] a = _as_doubles(x)
    cdef double[::1] b = _as_doubles(y)
    cdef Py_ssize_t n = a.shape[0], i, j
    cdef double xi, yi, dx, dy
    cdef long long c = 0, d = 0, tx = 0, ty = 0
    if n != b.shape[0]:
        raise ValueError(f"length mismatch: {n} vs {b.shape[0]}")
    for i in range(n - 1):
        xi = a[i]
        yi = b[i]
        for j in range(i + 1, n):
            dx = a[j] - xi
            dy = b[j] - yi
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
