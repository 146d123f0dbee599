"""Tensor-product NURBS patches (curves, surfaces, solids).

A patch stores its *projective* control lattice ``B^w`` of shape
``(n_1, ..., n_k, d + 1)``: the first ``d`` entries are the weighted
coordinates ``w * B`` and the last entry is the weight ``w``. Every
refinement acts on this lattice, which keeps the rational geometry exact.

Control points are flattened with the first parametric direction varying
fastest, matching the file format.
"""
import itertools

import numpy as np

from . import kernels
from .splines import KnotVector, SplineError, elevate_order, insert_knots

FACE_LABELS = ("u0", "u1", "v0", "v1", "w0", "w1")


class SingularMapError(ArithmeticError):
    """The geometry map has a (numerically) vanishing Jacobian determinant."""


class NurbsPatch:
    """A NURBS map from the unit hypercube ``[0, 1]^k`` to ``R^d``.

    Parameters
    ----------
    knots : sequence of KnotVector
        One knot vector per parametric direction.
    projective : array_like, shape (n_1, ..., n_k, d + 1)
        Projective control lattice.
    """

    def __init__(self, knots, projective):
        self.knots = tuple(knots)
        proj = np.array(projective, dtype=float)
        if proj.ndim != len(self.knots) + 1:
            raise ValueError(f"projective lattice has {proj.ndim - 1} lattice axes, "
                             f"expected {len(self.knots)}")
        expected = tuple(kv.n for kv in self.knots)
        if proj.shape[:-1] != expected:
            raise ValueError(f"lattice shape {proj.shape[:-1]} does not match "
                             f"knot vectors {expected}")
        if not 2 <= proj.shape[-1] - 1 <= 3:
            raise ValueError("spatial dimension must be 2 or 3")
        if np.any(proj[..., -1] <= 0.0):
            raise ValueError("all weights must be strictly positive")
        proj.setflags(write=False)
        self.projective = proj

    @classmethod
    def from_points(cls, knots, points, weights=None):
        points = np.asarray(points, dtype=float)
        if weights is None:
            weights = np.ones(points.shape[:-1])
        weights = np.asarray(weights, dtype=float)
        proj = np.concatenate([points * weights[..., None], weights[..., None]], axis=-1)
        return cls(knots, proj)

    # -- basic properties --------------------------------------------------

    @property
    def dim(self):
        return self.projective.shape[-1] - 1

    @property
    def param_dim(self):
        return len(self.knots)

    @property
    def shape(self):
        return self.projective.shape[:-1]

    @property
    def n_ctrl(self):
        return int(np.prod(self.shape))

    @property
    def degrees(self):
        return tuple(kv.degree for kv in self.knots)

    @property
    def weights(self):
        return self.projective[..., -1]

    @property
    def points(self):
        return self.projective[..., :-1] / self.projective[..., -1:]

    def flat(self, arr):
        """Flatten the lattice axes of ``arr`` (first direction fastest)."""
        k = self.param_dim
        arr = np.asarray(arr)
        tail = arr.shape[k:]
        return np.moveaxis(arr, range(k), range(k)[::-1]).reshape((-1,) + tail)

    @property
    def flat_points(self):
        return self.flat(self.points)

    @property
    def flat_weights(self):
        return self.flat(self.weights)

    def local_index(self, multi):
        """Flat index of lattice multi-index ``(i, j, k)``."""
        idx = 0
        stride = 1
        for i, n in zip(multi, self.shape):
            idx += i * stride
            stride *= n
        return idx

    def with_projective(self, projective):
        return NurbsPatch(self.knots, projective)

    def __repr__(self):
        return (f"NurbsPatch(dim={self.dim}, degrees={self.degrees}, "
                f"shape={self.shape})")

    # -- faces ---------------------------------------------------------------

    def face_lattice(self, label):
        """Multi-indices of the control points on parametric face ``label``.

        Returns an integer array of flat local indices shaped like the face
        lattice (remaining directions in their original order).
        """
        axis, side = _parse_face(label, self.param_dim)
        flat_idx = np.arange(self.n_ctrl).reshape(self.shape, order="F")
        sl = [slice(None)] * self.param_dim
        sl[axis] = 0 if side == 0 else self.shape[axis] - 1
        return flat_idx[tuple(sl)]

    def face_knots(self, label):
        axis, _ = _parse_face(label, self.param_dim)
        return tuple(kv for d, kv in enumerate(self.knots) if d != axis)


def _parse_face(label, param_dim):
    if label not in FACE_LABELS[: 2 * param_dim]:
        raise ValueError(f"unknown face {label!r} for a {param_dim}-parameter patch")
    return "uvw".index(label[0]), int(label[1])


def weights_and_points_from_projective(patch):
    """Split the projective lattice into control points and weights."""
    return patch.points, patch.weights


# -- evaluation ----------------------------------------------------------------

def _tensor_point_basis(patch, xs, nders):
    """Nonzero tensor B-spline values (and first derivatives) at points ``xs``.

    Returns ``idx (m, nloc)``, ``N (m, nloc)`` and, when ``nders >= 1``,
    ``dN (m, k, nloc)`` with respect to the parametric coordinates.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    m, k = xs.shape
    if k != patch.param_dim:
        raise ValueError(f"expected {patch.param_dim} parametric coordinates, got {k}")
    if np.any(xs < 0.0) or np.any(xs > 1.0):
        raise SplineError("parametric point outside the unit hypercube")
    per_dir = []
    for d, kv in enumerate(patch.knots):
        spans, ders = kernels.basis_funs_ders(kv.values, kv.degree, xs[:, d], nders)
        first = spans - kv.degree
        per_dir.append((first, ders))

    idx = np.zeros((m, 1), dtype=np.int64)
    vals = np.ones((m, 1))
    grads = np.ones((m, k, 1)) if nders >= 1 else None
    stride = 1
    for d, (first, ders) in enumerate(per_dir):
        p1 = ders.shape[2]
        loc = first[:, None] + np.arange(p1)[None, :]
        idx = (idx[:, None, :] + stride * loc[:, :, None]).reshape(m, -1)
        v0 = ders[:, 0, :]
        if grads is not None:
            v1 = ders[:, 1, :] if ders.shape[1] > 1 else np.zeros_like(v0)
            g = np.empty((m, k, grads.shape[2] * p1))
            for j in range(k):
                fac = v1 if j == d else v0
                g[:, j, :] = (fac[:, :, None] * grads[:, j, None, :]).reshape(m, -1)
            grads = g
        vals = (v0[:, :, None] * vals[:, None, :]).reshape(m, -1)
        stride *= patch.shape[d]
    return idx, vals, grads


def _rational(patch, idx, vals, grads):
    w = patch.flat_weights[idx]
    nw = vals * w
    wsum = nw.sum(axis=1)
    r = nw / wsum[:, None]
    if grads is None:
        return r, None
    dnw = grads * w[:, None, :]
    dwsum = dnw.sum(axis=2)
    dr = (dnw - r[:, None, :] * dwsum[:, :, None]) / wsum[:, None, None]
    return r, dr


def eval_nurbs_basis(patch, x, derivatives=False):
    """Nonzero rational basis functions at parametric point(s) ``x``.

    Returns ``(indices, values)`` or ``(indices, values, grads)``; for a single
    point the leading point axis is dropped.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    xs = x.reshape(1, -1) if single else x
    idx, vals, grads = _tensor_point_basis(patch, xs, 1 if derivatives else 0)
    r, dr = _rational(patch, idx, vals, grads)
    if single:
        out = (idx[0], r[0]) + ((dr[0],) if derivatives else ())
    else:
        out = (idx, r) + ((dr,) if derivatives else ())
    return out


def eval_geometry(patch, x):
    """Physical point(s) ``F(x) = sum_i R_i(x) B_i``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    xs = x.reshape(1, -1) if single else x
    idx, vals, _ = _tensor_point_basis(patch, xs, 0)
    r, _ = _rational(patch, idx, vals, None)
    pts = np.einsum("ma,mad->md", r, patch.flat_points[idx])
    return pts[0] if single else pts


def eval_geometry_jacobian(patch, x, check=True):
    """Jacobian ``dF/dx`` (shape ``(d, k)``) and its determinant.

    Raises :class:`SingularMapError` when ``|det| < 1e-14`` and ``check`` is set.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    xs = x.reshape(1, -1) if single else x
    idx, vals, grads = _tensor_point_basis(patch, xs, 1)
    r, dr = _rational(patch, idx, vals, grads)
    jac = np.einsum("mja,mai->mij", dr, patch.flat_points[idx])
    det = np.linalg.det(jac) if patch.param_dim == patch.dim else None
    if check and det is not None and np.any(np.abs(det) < 1e-14):
        raise SingularMapError("geometry map is singular at "
                               f"{xs[np.abs(det) < 1e-14][0]}")
    if single:
        return jac[0], (det[0] if det is not None else None)
    return jac, det


def grid_points(patch, grids):
    """Evaluate the patch on the tensor grid ``grids`` (one 1-D array per direction).

    Returns parametric points and physical points, first direction fastest.
    """
    mesh = np.meshgrid(*grids, indexing="ij")
    params = np.stack([patch.flat(g) for g in mesh], axis=-1)
    return params, eval_geometry(patch, params)


# -- refinement ----------------------------------------------------------------

def refine_patch(patch, direction, new_knots=(), raise_by=0):
    """Degree elevation then knot insertion along one parametric direction.

    Acts on the projective lattice, so the rational geometry is unchanged.
    """
    new_knots = list(new_knots)
    if raise_by == 0 and not new_knots:
        return patch
    kv = patch.knots[direction]
    lattice = np.moveaxis(np.asarray(patch.projective), direction, 0)
    if raise_by:
        kv, lattice = elevate_order(kv, lattice, raise_by)
    if new_knots:
        kv, lattice = insert_knots(kv, lattice, new_knots)
    knots = list(patch.knots)
    knots[direction] = kv
    return NurbsPatch(knots, np.moveaxis(lattice, 0, direction))


def h_refine_uniform(patch, nsub):
    """Split every span of every direction into ``nsub[d]`` equal parts."""
    if np.isscalar(nsub):
        nsub = [nsub] * patch.param_dim
    for d, s in enumerate(nsub):
        if s <= 1:
            continue
        bp = patch.knots[d].breakpoints()
        new = [a + (b - a) * j / s for a, b in zip(bp[:-1], bp[1:]) for j in range(1, s)]
        patch = refine_patch(patch, d, new_knots=new)
    return patch


def elevate_patch(patch, degrees):
    """Elevate each direction to at least ``degrees[d]``."""
    if np.isscalar(degrees):
        degrees = [degrees] * patch.param_dim
    for d, q in enumerate(degrees):
        if q > patch.knots[d].degree:
            patch = refine_patch(patch, d, raise_by=q - patch.knots[d].degree)
    return patch


def affine_transform(patch, c, g):
    """Patch whose control points are ``c + g @ B_i``; weights untouched."""
    c = np.asarray(c, dtype=float)
    g = np.asarray(g, dtype=float)
    pts = patch.points @ g.T + c
    return NurbsPatch.from_points(patch.knots, pts, patch.weights)


def corners(patch):
    """Physical positions of the ``2^k`` lattice corners."""
    sel = itertools.product(*[(0, n - 1) for n in patch.shape])
    return np.array([patch.points[s] for s in sel])
