"""Univariate B-spline knot vectors, basis evaluation and refinement.

Indices are 0-based throughout: basis function ``i`` is supported on
``[values[i], values[i + p + 1]]`` and a span index ``i`` denotes the
interval ``[values[i], values[i + 1])``.
"""
from dataclasses import dataclass
from math import comb

import numpy as np

from . import kernels


class SplineError(ValueError):
    """Invalid knot vector or refinement request."""


class KnotMultiplicityError(SplineError):
    """Refinement would raise a knot multiplicity above the degree."""


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Open, normalized knot vector ``0 = xi_0 <= ... <= xi_{n+p} = 1``."""

    values: np.ndarray
    degree: int

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).ravel()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        p = int(self.degree)
        object.__setattr__(self, "degree", p)
        if p < 0:
            raise SplineError(f"degree must be >= 0, got {p}")
        if len(vals) < 2 * (p + 1):
            raise SplineError(f"knot vector of degree {p} needs at least "
                              f"{2 * (p + 1)} knots, got {len(vals)}")
        if np.any(np.diff(vals) < 0):
            raise SplineError("knot values must be non-decreasing")
        if vals[0] != 0.0 or vals[-1] != 1.0:
            raise SplineError("knot vector must start at 0 and end at 1")
        if np.any(vals[: p + 1] != 0.0) or np.any(vals[-(p + 1):] != 1.0):
            raise SplineError(f"knot vector is not open: end knots must be "
                              f"repeated {p + 1} times")
        if np.sum(vals == 0.0) > p + 1 or np.sum(vals == 1.0) > p + 1:
            raise SplineError("end knots repeated more than degree + 1 times")
        inner, counts = np.unique(vals[p + 1:-(p + 1)], return_counts=True)
        if len(counts) and counts.max() > max(p, 1):
            raise SplineError(f"interior knot {inner[counts.argmax()]} has "
                              f"multiplicity {counts.max()} > degree {p}")

    @classmethod
    def uniform(cls, degree, nelems, continuity=None):
        """Open uniform knot vector with ``nelems`` spans.

        ``continuity`` defaults to ``degree - 1`` (interior multiplicity 1).
        """
        if continuity is None:
            continuity = degree - 1
        mult = degree - continuity
        interior = np.repeat(np.arange(1, nelems) / nelems, mult)
        vals = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
        return cls(vals, degree)

    @property
    def p(self):
        return self.degree

    @property
    def n(self):
        """Number of basis functions."""
        return len(self.values) - self.degree - 1

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, KnotVector):
            return NotImplemented
        return (self.degree == other.degree
                and len(self.values) == len(other.values)
                and bool(np.all(self.values == other.values)))

    def __hash__(self):
        return hash((self.degree, self.values.tobytes()))

    def __repr__(self):
        return f"KnotVector({self.values.tolist()}, degree={self.degree})"

    def reversed(self):
        """Knot vector of the reversed parametrization ``x -> 1 - x``."""
        return KnotVector(1.0 - self.values[::-1], self.degree)

    def multiplicity(self, x):
        """Number of stored knots exactly equal to ``x``."""
        return int(np.sum(self.values == x))

    def breakpoints(self):
        """Distinct knot values."""
        return np.unique(self.values)

    def interior_breakpoints(self):
        bp = self.breakpoints()
        return bp[1:-1]

    def spans(self):
        """0-based indices of the nonzero knot spans (the elements)."""
        v = self.values
        p = self.degree
        idx = np.arange(p, self.n)
        return idx[v[idx + 1] > v[idx]]

    @property
    def nelems(self):
        return len(self.spans())

    def greville(self):
        """Greville abscissae, one per basis function."""
        p = self.degree
        if p == 0:
            return 0.5 * (self.values[:-1] + self.values[1:])
        v = self.values
        return np.array([v[i + 1:i + p + 1].mean() for i in range(self.n)])


@dataclass(frozen=True)
class BasisSpan:
    """The ``p + 1`` possibly-nonzero basis functions at a point.

    ``values[j]`` belongs to basis function ``span - p + j``. ``derivatives``
    holds rows ``0..order`` (row 0 equals ``values``) when requested.
    """

    span: int
    values: np.ndarray
    derivatives: np.ndarray = None

    @property
    def first(self):
        return self.span - (len(self.values) - 1)

    @property
    def indices(self):
        return np.arange(self.first, self.span + 1)


def _check_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0) or np.any(np.isnan(x)):
        raise SplineError(f"evaluation point outside [0, 1]: {x}")
    return x


def find_span(kv, x):
    """Index ``i`` of the nonzero span with ``xi_i <= x < xi_{i+1}``.

    ``x = 1`` is assigned to the last nonzero span.
    """
    x = _check_domain(x)
    return int(kernels.find_spans(kv.values, kv.degree, np.atleast_1d(x))[0])


def eval_basis(kv, x):
    """Cox-de Boor values of the nonzero basis functions at ``x``."""
    x = _check_domain(x)
    spans, ders = kernels.basis_funs_ders(kv.values, kv.degree, np.atleast_1d(x), 0)
    return BasisSpan(int(spans[0]), ders[0, 0].copy())


def eval_basis_derivatives(kv, x, order):
    """Basis values and derivatives up to ``order`` at ``x``.

    Rows beyond the degree are identically zero.
    """
    x = _check_domain(x)
    if order < 0:
        raise SplineError("derivative order must be non-negative")
    spans, ders = kernels.basis_funs_ders(kv.values, kv.degree, np.atleast_1d(x), order)
    return BasisSpan(int(spans[0]), ders[0, 0].copy(), ders[0].copy())


def basis_matrix(kv, xs, order=0):
    """Dense ``(len(xs), n)`` matrix of the ``order``-th derivatives of all basis functions."""
    xs = _check_domain(np.atleast_1d(xs))
    p = kv.degree
    spans, ders = kernels.basis_funs_ders(kv.values, p, xs, order)
    out = np.zeros((len(xs), kv.n))
    rows = np.arange(len(xs))[:, None]
    cols = spans[:, None] - p + np.arange(p + 1)[None, :]
    out[rows, cols] = ders[:, order, :]
    return out


def eval_curve(kv, ctrl, xs):
    """Points ``sum_i N_i(x) ctrl[i]`` of a (non-rational) spline curve."""
    ctrl = np.asarray(ctrl, dtype=float)
    return basis_matrix(kv, xs) @ ctrl


def knot_insertion_alphas(kv, xi_bar):
    """Coefficients ``alpha_i`` for inserting ``xi_bar`` once.

    Returns ``(k, alphas)`` where ``k`` is the 0-based span containing
    ``xi_bar`` and ``alphas`` has ``n + 1`` entries: the new control points
    are ``alpha_i B_i + (1 - alpha_i) B_{i-1}``.
    """
    v = kv.values
    p = kv.degree
    if not (0.0 <= xi_bar < 1.0):
        raise SplineError(f"inserted knot {xi_bar} must lie in [0, 1)")
    k = int(np.searchsorted(v, xi_bar, side="right") - 1)
    alphas = np.zeros(kv.n + 1)
    # in 1-based terms: alpha_i = 1 for i <= k-p, ratio for k-p+1 <= i <= k, 0 after
    alphas[: k - p + 1] = 1.0
    for i in range(k - p + 1, k + 1):
        alphas[i] = (xi_bar - v[i]) / (v[i + p] - v[i])
    return k, alphas


def insert_knot(kv, ctrl, xi_bar):
    """Insert ``xi_bar`` once, keeping the spanned curve unchanged.

    ``ctrl`` has shape ``(n, ...)``; the leading axis runs over basis
    functions. Rational curves must be refined in projective coordinates.
    """
    ctrl = np.asarray(ctrl, dtype=float)
    if ctrl.shape[0] != kv.n:
        raise SplineError(f"expected {kv.n} control points, got {ctrl.shape[0]}")
    if kv.multiplicity(xi_bar) + 1 > kv.degree:
        raise KnotMultiplicityError(
            f"inserting {xi_bar} would give multiplicity "
            f"{kv.multiplicity(xi_bar) + 1} > degree {kv.degree}")
    k, alphas = knot_insertion_alphas(kv, xi_bar)
    shape = (-1,) + (1,) * (ctrl.ndim - 1)
    a = alphas.reshape(shape)
    padded_prev = np.concatenate([ctrl[:1] * 0.0, ctrl], axis=0)   # B_{i-1}
    padded_cur = np.concatenate([ctrl, ctrl[-1:] * 0.0], axis=0)   # B_i
    new_ctrl = a * padded_cur + (1.0 - a) * padded_prev
    new_vals = np.insert(kv.values, k + 1, xi_bar)
    return KnotVector(new_vals, kv.degree), new_ctrl


def insert_knots(kv, ctrl, xis):
    """Insert several knots one after the other."""
    for xi in xis:
        kv, ctrl = insert_knot(kv, ctrl, xi)
    return kv, ctrl


def refinement_matrix(kv, new_knots):
    """Matrix ``E`` with ``ctrl_fine = E @ ctrl`` after inserting ``new_knots``."""
    kv_fine, e = insert_knots(kv, np.eye(kv.n), new_knots)
    return kv_fine, e


def _bezier_elevation_matrix(p, t):
    """Map from degree-``p`` Bezier control points to degree ``p + t``."""
    m = np.zeros((p + t + 1, p + 1))
    for i in range(p + t + 1):
        for j in range(max(0, i - t), min(p, i) + 1):
            m[i, j] = comb(p, j) * comb(t, i - j) / comb(p + t, i)
    return m


def elevate_order(kv, ctrl, raise_by):
    """Raise the degree by ``raise_by`` without changing the curve.

    The curve is split into Bezier segments, each segment is degree-elevated,
    and the result is brought back onto the knot vector whose interior
    multiplicities are raised by ``raise_by`` (same continuity as before).
    """
    if raise_by < 1:
        raise SplineError("raise_by must be >= 1")
    ctrl = np.asarray(ctrl, dtype=float)
    p = kv.degree
    if p == 0 and len(kv.interior_breakpoints()):
        raise SplineError("cannot elevate a discontinuous degree-0 basis: the jumps "
                          "would need interior multiplicity above the new degree")
    q = p + raise_by
    tail = ctrl.shape[1:]
    flat = ctrl.reshape(kv.n, -1)

    # Bezier extraction: every interior breakpoint to multiplicity p
    inner = kv.interior_breakpoints()
    fill = [x for x in inner for _ in range(p - kv.multiplicity(x))]
    kv_bez, bez = insert_knots(kv, flat, fill) if p > 0 else (kv, flat)
    nseg = len(inner) + 1
    elev = _bezier_elevation_matrix(p, raise_by)
    segs = [elev @ bez[s * p: s * p + p + 1] for s in range(nseg)] if p > 0 else \
        [elev @ bez[s: s + 1] for s in range(nseg)]

    # target knot vector: same breakpoints, multiplicities raised
    mults = [kv.multiplicity(x) + raise_by for x in inner]
    target_vals = np.concatenate(
        [np.zeros(q + 1)] + [np.full(m, x) for x, m in zip(inner, mults)] + [np.ones(q + 1)])
    kv_new = KnotVector(target_vals, q)

    # Bezier form of the elevated curve (C^0 at every breakpoint, multiplicity q)
    if p > 0:
        bez_new = np.vstack([segs[0]] + [s[1:] for s in segs[1:]])
    else:
        bez_new = np.vstack(segs)
    # bring back onto kv_new: bez_new = E @ ctrl_new with E the insertion matrix
    fill_new = [x for x, m in zip(inner, mults) for _ in range(q - m)]
    if fill_new:
        kv_check, e = refinement_matrix(kv_new, fill_new)
        new_flat, *_ = np.linalg.lstsq(e, bez_new, rcond=None)
    else:
        if bez_new.shape[0] != kv_new.n:
            # degree-0 input: segments share no points, interior multiplicity
            # raise_by already equals q on a discontinuous basis
            raise SplineError("inconsistent Bezier reassembly")
        new_flat = bez_new
    return kv_new, new_flat.reshape((kv_new.n,) + tail)


def k_refine(kv, ctrl, target_degree, new_knots):
    """Elevate to ``target_degree`` first, then insert ``new_knots``.

    New knots end up with continuity ``C^{q-1}`` (``q = target_degree``).
    """
    if target_degree < kv.degree:
        raise SplineError("target degree must be >= current degree")
    if target_degree > kv.degree:
        kv, ctrl = elevate_order(kv, ctrl, target_degree - kv.degree)
    return insert_knots(kv, ctrl, list(new_knots))
