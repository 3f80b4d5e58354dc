# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled pair kernels.

Same contract and constraint-table encoding as fallback.py (see its module
docstring). Arithmetic is kept in the exact operation order of the fallback
so both backends return bit-identical float64 results.
"""

import numpy as np

name = "compiled"


cdef inline double _box_coord(const double[:, ::1] subj, const double[:, ::1] ref,
                              int role, int coord, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    if role == 0:
        return subj[i, coord]
    return ref[j, coord]


cdef void _iou_fill(const double[:, ::1] a, const double[:, ::1] b,
                    double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double iw, ih, inter, area_a, area_b
    for i in range(a.shape[0]):
        area_a = (a[i, 2] - a[i, 0]) * (a[i, 3] - a[i, 1])
        for j in range(b.shape[0]):
            iw = min(a[i, 2], b[j, 2]) - max(a[i, 0], b[j, 0])
            ih = min(a[i, 3], b[j, 3]) - max(a[i, 1], b[j, 1])
            if iw < 0.0:
                iw = 0.0
            if ih < 0.0:
                ih = 0.0
            inter = iw * ih
            area_b = (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1])
            out[i, j] = inter / (area_a + area_b - inter)


def iou_matrix(a, b):
    """Pairwise IoU between two (n, 4) and (m, 4) corner-form box arrays."""
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    out = np.empty((av.shape[0], bv.shape[0]), dtype=np.float64)
    cdef double[:, ::1] ov = out
    with nogil:
        _iou_fill(av, bv, ov)
    return out


def overlap_stats(a, b):
    """(pair count, pairs with IoU > 0, IoU sum) over the cross product."""
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n_overlap = 0
    cdef double iw, ih, inter, area_a, area_b, iou, total = 0.0
    with nogil:
        for i in range(av.shape[0]):
            area_a = (av[i, 2] - av[i, 0]) * (av[i, 3] - av[i, 1])
            for j in range(bv.shape[0]):
                iw = min(av[i, 2], bv[j, 2]) - max(av[i, 0], bv[j, 0])
                ih = min(av[i, 3], bv[j, 3]) - max(av[i, 1], bv[j, 1])
                if iw < 0.0:
                    iw = 0.0
                if ih < 0.0:
                    ih = 0.0
                inter = iw * ih
                area_b = (bv[j, 2] - bv[j, 0]) * (bv[j, 3] - bv[j, 1])
                iou = inter / (area_a + area_b - inter)
                if iou > 0.0:
                    n_overlap += 1
                total += iou
    return av.shape[0] * bv.shape[0], n_overlap, total


cdef inline double _delta_value(const double[:, ::1] subj, const double[:, ::1] ref,
                                int feature, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef int base = feature % 4
    cdef double d
    if base == 0:
        d = subj[i, 0] - ref[j, 0]
    elif base == 1:
        d = subj[i, 1] - ref[j, 1]
    elif base == 2:
        d = ref[j, 2] - subj[i, 2]
    else:
        d = ref[j, 3] - subj[i, 3]
    if feature >= 4:
        if base == 0 or base == 2:
            d = d / (ref[j, 2] - ref[j, 0])
        else:
            d = d / (ref[j, 3] - ref[j, 1])
    return d


def filter_pairs(subj, ref, comparisons, intervals):
    """Indices (i, j) of cross pairs satisfying every constraint.

    Returned as an (k, 2) int64 array in row-major order (i ascending,
    then j ascending).
    """
    cdef double[:, ::1] sv = np.ascontiguousarray(subj, dtype=np.float64).reshape(-1, 4)
    cdef double[:, ::1] rv = np.ascontiguousarray(ref, dtype=np.float64).reshape(-1, 4)
    cdef double[:, ::1] cmps = np.ascontiguousarray(comparisons, dtype=np.float64).reshape(-1, 6)
    cdef double[:, ::1] ivals = np.ascontiguousarray(intervals, dtype=np.float64).reshape(-1, 3)
    cdef Py_ssize_t n = sv.shape[0], m = rv.shape[0]
    if n == 0 or m == 0:
        return np.empty((0, 2), dtype=np.int64)
    out = np.empty((n * m, 2), dtype=np.int64)
    cdef long long[:, ::1] ov = out
    cdef Py_ssize_t i, j, k, count = 0
    cdef double lhs, rhs, d
    cdef bint ok
    with nogil:
        for i in range(n):
            for j in range(m):
                ok = True
                for k in range(cmps.shape[0]):
                    lhs = _box_coord(sv, rv, <int> cmps[k, 0], <int> cmps[k, 1], i, j) + cmps[k, 4]
                    rhs = _box_coord(sv, rv, <int> cmps[k, 2], <int> cmps[k, 3], i, j)
                    if cmps[k, 5] != 0.0:
                        ok = lhs < rhs
                    else:
                        ok = lhs <= rhs
                    if not ok:
                        break
                if ok:
                    for k in range(ivals.shape[0]):
                        d = _delta_value(sv, rv, <int> ivals[k, 0], i, j)
                        if d < ivals[k, 1] or d > ivals[k, 2]:
                            ok = False
                            break
                if ok:
                    ov[count, 0] = i
                    ov[count, 1] = j
                    count += 1
    return out[:count].copy()
