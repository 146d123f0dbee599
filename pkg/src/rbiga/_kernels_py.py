"""Pure numpy implementations of the hot kernels.

These mirror the Cython versions in ``_speedups.pyx`` one to one and are used
whenever the compiled extension is unavailable (or disabled through the
``RBIGA_PURE_PYTHON`` environment variable).
"""
import numpy as np


def find_spans(knots, degree, xs):
    """Return 0-based span indices ``i`` with ``knots[i] <= x < knots[i+1]``.

    ``x`` equal to the last knot is assigned to the last nonzero span.
    """
    knots = np.asarray(knots, dtype=float)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    n = len(knots) - degree - 1
    spans = np.searchsorted(knots, xs, side="right") - 1
    return np.clip(spans, degree, n - 1).astype(np.int64)


def basis_funs_ders(knots, degree, xs, nders):
    """Nonzero basis functions and derivatives at many points.

    Parameters
    ----------
    knots : array_like
        Open knot vector.
    degree : int
        Polynomial degree ``p``.
    xs : array_like
        Evaluation points, shape ``(m,)``.
    nders : int
        Highest derivative order requested. Orders above ``p`` yield zeros.

    Returns
    -------
    spans : ndarray of int64, shape (m,)
    ders : ndarray, shape (m, nders + 1, p + 1)
        ``ders[k, r, j]`` is the ``r``-th derivative of basis function
        ``spans[k] - p + j`` at ``xs[k]``.
    """
    knots = np.asarray(knots, dtype=float)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    p = degree
    m = xs.shape[0]
    spans = find_spans(knots, p, xs)

    # ndu[:, j, r]: basis values (upper triangle) and knot differences (lower)
    ndu = np.zeros((m, p + 1, p + 1))
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    ndu[:, 0, 0] = 1.0
    for j in range(1, p + 1):
        left[:, j] = xs - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - xs
        saved = np.zeros(m)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            denom = ndu[:, j, r]
            temp = np.divide(ndu[:, r, j - 1], denom,
                             out=np.zeros(m), where=denom != 0.0)
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((m, nders + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    top = min(nders, p)
    a = np.zeros((m, 2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[:] = 0.0
        a[:, 0, 0] = 1.0
        for k in range(1, top + 1):
            d = np.zeros(m)
            rk = r - k
            pk = p - k
            if r >= k:
                denom = ndu[:, pk + 1, rk]
                a[:, s2, 0] = np.divide(a[:, s1, 0], denom,
                                        out=np.zeros(m), where=denom != 0.0)
                d = a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                denom = ndu[:, pk + 1, rk + j]
                a[:, s2, j] = np.divide(a[:, s1, j] - a[:, s1, j - 1], denom,
                                        out=np.zeros(m), where=denom != 0.0)
                d = d + a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                denom = ndu[:, pk + 1, r]
                a[:, s2, k] = np.divide(-a[:, s1, k - 1], denom,
                                        out=np.zeros(m), where=denom != 0.0)
                d = d + a[:, s2, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1
    fac = p
    for k in range(1, top + 1):
        ders[:, k, :] *= fac
        fac *= p - k
    return spans, ders


def element_matrices(phi_a, phi_b, wq):
    """Per-element products ``K[e, a, b] = sum_q wq[e, q] phi_a[e, q, a] phi_b[e, q, b]``."""
    return np.einsum("eqa,eqb,eq->eab", phi_a, phi_b, wq, optimize=True)


def tensor_basis(vals):
    """Tensor product of univariate local basis rows.

    ``vals`` is a list with one array per direction, each of shape
    ``(E_d, Q_d, p_d + 1)``. Returns ``(E, Q, nloc)`` with the first
    direction varying fastest in every index.
    """
    out = vals[0]
    for v in vals[1:]:
        e1, q1, n1 = out.shape
        e2, q2, n2 = v.shape
        out = (v[:, None, :, None, :, None] * out[None, :, None, :, None, :])
        out = out.reshape(e1 * e2, q1 * q2, n1 * n2)
    return out
