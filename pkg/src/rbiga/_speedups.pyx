# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_kernels_py``.

Same signatures and results as the numpy fallback; see that module for the
documentation of each function.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _find_span(const double[::1] knots, int p, Py_ssize_t n,
                                  double x) noexcept nogil:
    cdef Py_ssize_t lo, hi, mid
    if x >= knots[n]:
        return n - 1
    if x <= knots[p]:
        lo = p
        while lo < n - 1 and knots[lo + 1] <= x:
            lo += 1
        return lo
    lo = p
    hi = n
    # invariant: knots[lo] <= x < knots[hi]
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if x < knots[mid]:
            hi = mid
        else:
            lo = mid
    return lo


def find_spans(knots, int degree, xs):
    cdef const double[::1] kv = np.ascontiguousarray(knots, dtype=np.float64)
    cdef const double[::1] xv = np.ascontiguousarray(np.atleast_1d(xs), dtype=np.float64)
    cdef Py_ssize_t n = kv.shape[0] - degree - 1
    cdef Py_ssize_t m = xv.shape[0], k
    out = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] ov = out
    with nogil:
        for k in range(m):
            ov[k] = _find_span(kv, degree, n, xv[k])
    return out


def basis_funs_ders(knots, int degree, xs, int nders):
    cdef const double[::1] kv = np.ascontiguousarray(knots, dtype=np.float64)
    cdef const double[::1] xv = np.ascontiguousarray(np.atleast_1d(xs), dtype=np.float64)
    cdef int p = degree
    cdef Py_ssize_t n = kv.shape[0] - p - 1
    cdef Py_ssize_t m = xv.shape[0]
    spans = np.empty(m, dtype=np.int64)
    ders = np.zeros((m, nders + 1, p + 1))
    cdef cnp.int64_t[::1] sv = spans
    cdef double[:, :, ::1] dv = ders
    cdef double[:, ::1] ndu = np.zeros((p + 1, p + 1))
    cdef double[::1] left = np.zeros(p + 1)
    cdef double[::1] right = np.zeros(p + 1)
    cdef double[:, ::1] a = np.zeros((2, p + 1))
    cdef Py_ssize_t k, span, j, r, kk, s1, s2, rk, pk, j1, j2, jj
    cdef double x, saved, temp, d, fac
    cdef int top = nders if nders < p else p

    with nogil:
        for k in range(m):
            x = xv[k]
            span = _find_span(kv, p, n, x)
            sv[k] = span
            ndu[0, 0] = 1.0
            for j in range(1, p + 1):
                left[j] = x - kv[span + 1 - j]
                right[j] = kv[span + j] - x
                saved = 0.0
                for r in range(j):
                    ndu[j, r] = right[r + 1] + left[j - r]
                    if ndu[j, r] != 0.0:
                        temp = ndu[r, j - 1] / ndu[j, r]
                    else:
                        temp = 0.0
                    ndu[r, j] = saved + right[r + 1] * temp
                    saved = left[j - r] * temp
                ndu[j, j] = saved
            for j in range(p + 1):
                dv[k, 0, j] = ndu[j, p]
            for r in range(p + 1):
                s1 = 0
                s2 = 1
                for jj in range(p + 1):
                    a[0, jj] = 0.0
                    a[1, jj] = 0.0
                a[0, 0] = 1.0
                for kk in range(1, top + 1):
                    d = 0.0
                    rk = r - kk
                    pk = p - kk
                    if r >= kk:
                        if ndu[pk + 1, rk] != 0.0:
                            a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                        else:
                            a[s2, 0] = 0.0
                        d = a[s2, 0] * ndu[rk, pk]
                    if rk >= -1:
                        j1 = 1
                    else:
                        j1 = -rk
                    if r - 1 <= pk:
                        j2 = kk - 1
                    else:
                        j2 = p - r
                    for j in range(j1, j2 + 1):
                        if ndu[pk + 1, rk + j] != 0.0:
                            a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                        else:
                            a[s2, j] = 0.0
                        d += a[s2, j] * ndu[rk + j, pk]
                    if r <= pk:
                        if ndu[pk + 1, r] != 0.0:
                            a[s2, kk] = -a[s1, kk - 1] / ndu[pk + 1, r]
                        else:
                            a[s2, kk] = 0.0
                        d += a[s2, kk] * ndu[r, pk]
                    dv[k, kk, r] = d
                    j = s1
                    s1 = s2
                    s2 = j
            fac = p
            for kk in range(1, top + 1):
                for j in range(p + 1):
                    dv[k, kk, j] *= fac
                fac *= p - kk
    return spans, ders


def element_matrices(phi_a, phi_b, wq):
    cdef const double[:, :, ::1] fa = np.ascontiguousarray(phi_a, dtype=np.float64)
    cdef const double[:, :, ::1] fb = np.ascontiguousarray(phi_b, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(wq, dtype=np.float64)
    cdef Py_ssize_t ne = fa.shape[0], nq = fa.shape[1]
    cdef Py_ssize_t na = fa.shape[2], nb = fb.shape[2]
    cdef Py_ssize_t e, q, i, j
    cdef double wi
    out = np.zeros((ne, na, nb))
    cdef double[:, :, ::1] ov = out
    with nogil:
        for e in range(ne):
            for q in range(nq):
                for i in range(na):
                    wi = w[e, q] * fa[e, q, i]
                    if wi == 0.0:
                        continue
                    for j in range(nb):
                        ov[e, i, j] += wi * fb[e, q, j]
    return out


def tensor_basis(vals):
    cdef Py_ssize_t e1, q1, n1, e2, q2, n2
    cdef Py_ssize_t a2, b2, c2, a1, b1, c1, row, col, loc
    cdef double v2
    cdef const double[:, :, ::1] x
    cdef const double[:, :, ::1] y
    cdef double[:, :, ::1] ov
    out = np.ascontiguousarray(vals[0], dtype=np.float64)
    for v in vals[1:]:
        x = out
        y = np.ascontiguousarray(v, dtype=np.float64)
        e1, q1, n1 = x.shape[0], x.shape[1], x.shape[2]
        e2, q2, n2 = y.shape[0], y.shape[1], y.shape[2]
        res = np.empty((e1 * e2, q1 * q2, n1 * n2))
        ov = res
        with nogil:
            for a2 in range(e2):
                for a1 in range(e1):
                    row = a1 + e1 * a2
                    for b2 in range(q2):
                        for b1 in range(q1):
                            col = b1 + q1 * b2
                            for c2 in range(n2):
                                v2 = y[a2, b2, c2]
                                for c1 in range(n1):
                                    ov[row, col, c1 + n1 * c2] = v2 * x[a1, b1, c1]
        out = res
    return out
