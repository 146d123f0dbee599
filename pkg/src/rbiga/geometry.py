"""Multipatch reference domains and their affine parameter maps.

Patch indices are 0-based. Faces are labelled ``u0, u1, v0, v1, w0, w1``
(parametric direction and side).
"""
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import expressions as ex
from .nurbs import FACE_LABELS, NurbsPatch, affine_transform, eval_geometry


class GeometryError(ValueError):
    """Invalid domain definition."""


class NonconformingInterfaceError(GeometryError):
    def __init__(self, pair, reason):
        self.pair = tuple(pair)
        super().__init__(f"nonconforming interface between patches {pair[0]} "
                         f"and {pair[1]}: {reason}")


class SingularAffineMapError(GeometryError, ArithmeticError):
    pass


class ParameterDomainError(ValueError):
    """Parameter outside the box or of the wrong length."""


# -- parameter box -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ParameterDomain:
    """Box ``[a_1, b_1] x ... x [a_P, b_P]`` with a reference parameter."""

    bounds: np.ndarray
    mu_ref: np.ndarray

    def __post_init__(self):
        b = np.array(self.bounds, dtype=float).reshape(-1, 2)
        r = np.array(self.mu_ref, dtype=float).ravel()
        if np.any(b[:, 0] > b[:, 1]):
            raise ParameterDomainError("parameter bounds need a_i <= b_i")
        if r.shape != (b.shape[0],):
            raise ParameterDomainError(f"mu_ref has {r.size} entries, expected {b.shape[0]}")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "mu_ref", r)
        self.check(r)

    @property
    def P(self):
        return self.bounds.shape[0]

    @property
    def centroid(self):
        return self.bounds.mean(axis=1)

    def corners(self):
        return np.array(list(itertools.product(*self.bounds)))

    def contains(self, mu, rtol=1e-12):
        mu = np.asarray(mu, dtype=float)
        span = np.maximum(self.bounds[:, 1] - self.bounds[:, 0], 1.0)
        slack = rtol * span
        return bool(np.all(mu >= self.bounds[:, 0] - slack)
                    and np.all(mu <= self.bounds[:, 1] + slack))

    def check(self, mu):
        mu = np.asarray(mu, dtype=float).ravel()
        if mu.shape != (self.P,):
            raise ParameterDomainError(f"parameter has {mu.size} entries, expected {self.P}")
        if not self.contains(mu):
            raise ParameterDomainError(f"parameter {mu.tolist()} outside "
                                       f"{self.bounds.tolist()}")
        return mu

    def sample(self, n, seed):
        rng = np.random.default_rng(seed)
        return self.bounds[:, 0] + rng.random((n, self.P)) * np.diff(self.bounds, axis=1).T


# -- affine maps -------------------------------------------------------------------

class AffineParamMap:
    """Per-patch affine maps ``T^k(x; mu) = C^k(mu) + G^k(mu) x``.

    ``offsets[k]`` is a list of ``d`` expressions and ``linear[k]`` a
    ``d x d`` nested list of expressions (strings are parsed).
    """

    def __init__(self, offsets, linear):
        if len(offsets) != len(linear):
            raise GeometryError("need one offset and one matrix per patch")
        self.offsets = [[ex.as_expr(v) for v in c] for c in offsets]
        self.linear = [ex.matrix(g) for g in linear]
        for c, g in zip(self.offsets, self.linear):
            d = len(c)
            if len(g) != d or any(len(row) != d for row in g):
                raise GeometryError("affine map blocks have inconsistent sizes")
        self._jac = [None] * len(self.linear)
        self._inv = [None] * len(self.linear)

    @classmethod
    def identity(cls, n_patches, dim):
        eye = [[1 if i == j else 0 for j in range(dim)] for i in range(dim)]
        return cls([[0] * dim for _ in range(n_patches)], [eye] * n_patches)

    @property
    def n_patches(self):
        return len(self.linear)

    @property
    def dim(self):
        return len(self.offsets[0])

    def max_param(self):
        exprs = [e for c in self.offsets for e in c] + \
                [e for g in self.linear for row in g for e in row]
        return max((e.max_param() for e in exprs), default=0)

    def is_constant(self, k):
        return all(e.is_const for e in self.offsets[k]) and \
            all(e.is_const for row in self.linear[k] for e in row)

    def det_expr(self, k):
        return ex.det(self.linear[k])

    def jacobian_expr(self, k, mu_ref):
        """``|det G^k|`` as an expression; the sign is fixed at ``mu_ref``."""
        if self._jac[k] is None:
            d = self.det_expr(k)
            val = d(mu_ref)
            if val == 0.0:
                raise SingularAffineMapError(f"det G^{k} vanishes at mu_ref")
            self._jac[k] = d if val > 0 else -d
        return self._jac[k]

    def inverse_expr(self, k):
        if self._inv[k] is None:
            self._inv[k] = ex.inverse(self.linear[k])
        return self._inv[k]

    def to_json(self):
        return [{"C": [str(e) for e in c], "G": [[str(e) for e in row] for row in g]}
                for c, g in zip(self.offsets, self.linear)]


def evaluate_map(amap, k, mu):
    """Numeric ``(C, G, J, D)`` for patch ``k`` at ``mu``.

    ``J = |det G|`` and ``D = G^{-1}``.
    """
    c = np.array([e(mu) for e in amap.offsets[k]])
    g = ex.mat_eval(amap.linear[k], mu)
    det = np.linalg.det(g)
    if abs(det) < 1e-14 * max(1.0, np.abs(g).max() ** len(g)):
        raise SingularAffineMapError(f"G^{k}(mu) is singular at mu={list(mu)}")
    dinv = np.linalg.inv(g)
    return c, g, abs(det), dinv


# -- multipatch domains ------------------------------------------------------------

@dataclass(frozen=True)
class SharedEntity:
    """Boundary entity (face, edge or vertex) shared by two patches.

    ``fixed_k`` / ``fixed_l`` map a fixed parametric axis to its side (0/1).
    """

    k: int
    l: int
    fixed_k: tuple
    fixed_l: tuple

    def face_labels(self):
        """Face labels on both sides when the entity is a face, else ``None``."""
        if len(self.fixed_k) != 1:
            return None
        (ak, sk), = self.fixed_k
        (al, sl), = self.fixed_l
        return "uvw"[ak] + str(sk), "uvw"[al] + str(sl)


@dataclass(eq=False)
class MultipatchDomain:
    """Patches with a global numbering of their control points.

    ``glue[k][i]`` is the global index of local control point ``i`` of
    patch ``k`` (first parametric direction fastest).
    """

    patches: list
    glue: list
    n_dofs: int
    boundary_tags: dict = field(default_factory=dict)
    interfaces: list = field(default_factory=list)
    tol: float = 1e-10

    @property
    def dim(self):
        return self.patches[0].dim

    @property
    def n_patches(self):
        return len(self.patches)

    def face_dofs(self, k, face):
        loc = self.patches[k].face_lattice(face).ravel(order="F")
        return self.glue[k][loc]

    def tag_dofs(self, tag):
        if tag not in self.boundary_tags:
            raise GeometryError(f"unknown boundary tag {tag!r}")
        idx = [self.face_dofs(k, f) for k, f in self.boundary_tags[tag]]
        return np.unique(np.concatenate(idx)) if idx else np.zeros(0, dtype=np.int64)

    def interface_faces(self):
        """Set of ``(patch, face)`` pairs glued to another patch."""
        out = set()
        for ent in self.interfaces:
            labels = ent.face_labels()
            if labels:
                out.add((ent.k, labels[0]))
                out.add((ent.l, labels[1]))
        return out

    def boundary_faces(self):
        inner = self.interface_faces()
        return [(k, f) for k, p in enumerate(self.patches)
                for f in FACE_LABELS[: 2 * p.param_dim] if (k, f) not in inner]

    def global_points(self):
        """Control point coordinates indexed by global dof."""
        pts = np.zeros((self.n_dofs, self.dim))
        for p, g in zip(self.patches, self.glue):
            pts[g] = p.flat_points
        return pts

    def owner(self, k, xparam):
        """Lowest patch index whose closure contains ``F^k(xparam)``."""
        xparam = np.asarray(xparam, dtype=float)
        best = k
        for ent in self.interfaces:
            for me, other, fixed in ((ent.k, ent.l, ent.fixed_k), (ent.l, ent.k, ent.fixed_l)):
                if me != k or other >= best:
                    continue
                if all(xparam[a] == float(s) for a, s in fixed):
                    best = other
        return best

    def with_patches(self, patches):
        return MultipatchDomain(list(patches), self.glue, self.n_dofs,
                                dict(self.boundary_tags), list(self.interfaces), self.tol)


def _entities(shape):
    """All boundary entities of a lattice: (fixed axes->side tuple, flat index set)."""
    k = len(shape)
    flat_idx = np.arange(int(np.prod(shape))).reshape(shape, order="F")
    out = []
    for naxes in range(1, k + 1):
        for axes in itertools.combinations(range(k), naxes):
            for sides in itertools.product((0, 1), repeat=naxes):
                sl = [slice(None)] * k
                for a, s in zip(axes, sides):
                    sl[a] = 0 if s == 0 else shape[a] - 1
                out.append((tuple(zip(axes, sides)), frozenset(flat_idx[tuple(sl)].ravel().tolist())))
    return out


def _free_knots(patch, fixed):
    axes = {a for a, _ in fixed}
    return [kv for d, kv in enumerate(patch.knots) if d not in axes]


def _knots_compatible(kvs_a, kvs_b):
    if len(kvs_a) != len(kvs_b):
        return False
    remaining = list(kvs_b)
    for kv in kvs_a:
        for j, other in enumerate(remaining):
            if kv == other or kv.reversed() == other:
                remaining.pop(j)
                break
        else:
            return False
    return True


def glue_patches(patches, tol=1e-10, boundary_tags=None):
    """Number control points globally, merging coincident points across patches.

    Interfaces must be conforming: shared control points of two patches form
    a complete face, edge or vertex lattice on both sides with matching knot
    vectors and weights.
    """
    patches = list(patches)
    if not patches:
        raise GeometryError("need at least one patch")
    dim = patches[0].dim
    if any(p.dim != dim for p in patches):
        raise GeometryError("all patches must live in the same spatial dimension")

    owners = np.concatenate([np.full(p.n_ctrl, k) for k, p in enumerate(patches)])
    offsets = np.cumsum([0] + [p.n_ctrl for p in patches])
    pts = np.vstack([p.flat_points for p in patches])
    wts = np.concatenate([p.flat_weights for p in patches])

    parent = np.arange(len(pts))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    pairs = cKDTree(pts).query_pairs(r=tol, output_type="ndarray") if len(patches) > 1 \
        else np.zeros((0, 2), dtype=np.int64)
    pairs = pairs[owners[pairs[:, 0]] != owners[pairs[:, 1]]]
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
        if abs(wts[i] - wts[j]) > tol * max(1.0, abs(wts[i])):
            a, b = sorted((owners[i], owners[j]))
            raise NonconformingInterfaceError((a, b), "coincident control points carry "
                                                      "different weights")

    roots = np.array([find(i) for i in range(len(pts))])
    numbering = {}
    gids = np.empty(len(pts), dtype=np.int64)
    for i, r in enumerate(roots):
        if r not in numbering:
            numbering[r] = len(numbering)
        gids[i] = numbering[r]
    glue = [gids[offsets[k]:offsets[k + 1]] for k in range(len(patches))]

    # conformity of every patch pair that shares points
    interfaces = []
    for k, l in itertools.combinations(range(len(patches)), 2):
        shared = np.intersect1d(glue[k], glue[l])
        if shared.size == 0:
            continue
        loc_k = frozenset(np.nonzero(np.isin(glue[k], shared))[0].tolist())
        loc_l = frozenset(np.nonzero(np.isin(glue[l], shared))[0].tolist())
        if len(loc_k) != shared.size or len(loc_l) != shared.size:
            raise NonconformingInterfaceError((k, l), "control points merged within a patch")
        ent_k = [f for f, s in _entities(patches[k].shape) if s == loc_k]
        ent_l = [f for f, s in _entities(patches[l].shape) if s == loc_l]
        if not ent_k or not ent_l:
            raise NonconformingInterfaceError(
                (k, l), "shared control points do not form a complete face, edge or vertex")
        fk, fl = ent_k[0], ent_l[0]
        if len(fk) != len(fl) or not _knots_compatible(_free_knots(patches[k], fk),
                                                       _free_knots(patches[l], fl)):
            raise NonconformingInterfaceError((k, l), "knot vectors or degrees differ "
                                                      "along the shared entity")
        interfaces.append(SharedEntity(k, l, fk, fl))

    tags = {}
    for name, faces in (boundary_tags or {}).items():
        norm = []
        for k, face in faces:
            k = int(k)
            if not 0 <= k < len(patches):
                raise GeometryError(f"boundary tag {name!r} refers to missing patch {k}")
            patches[k].face_lattice(face)  # validates the label
            norm.append((k, face))
        tags[name] = norm
    return MultipatchDomain(patches, glue, int(len(numbering)), tags, interfaces, tol)


def transform_control_points(domain, amap, mu):
    """Deformed domain with control points ``B_i^k(mu) = T^k(B_i^k; mu)``."""
    new = []
    for k, p in enumerate(domain.patches):
        c, g, _, _ = evaluate_map(amap, k, mu)
        new.append(affine_transform(p, c, g))
    return domain.with_patches(new)


def check_interface_continuity(domain, amap, mu_samples, tol=1e-10, n_face_samples=50,
                               seed=0):
    """Check ``T^k = T^l`` on shared control points and sampled interface points.

    Returns a list of violation records (empty when the maps are continuous).
    """
    rng = np.random.default_rng(seed)
    violations = []
    for mu in np.atleast_2d(mu_samples):
        maps = [evaluate_map(amap, k, mu)[:2] for k in range(domain.n_patches)]
        for ent in domain.interfaces:
            k, l = ent.k, ent.l
            pk = domain.patches[k]
            shared = np.intersect1d(domain.glue[k], domain.glue[l])
            loc = np.nonzero(np.isin(domain.glue[k], shared))[0]
            x = pk.flat_points[loc]
            # points on the shared entity, sampled through patch k
            npts = n_face_samples
            params = rng.random((npts, pk.param_dim))
            for a, s in ent.fixed_k:
                params[:, a] = float(s)
            x = np.vstack([x, eval_geometry(pk, params)])
            (ck, gk), (cl, gl) = maps[k], maps[l]
            dist = np.linalg.norm((ck + x @ gk.T) - (cl + x @ gl.T), axis=1)
            scale = max(1.0, np.abs(x).max())
            if dist.max() > tol * scale:
                violations.append({"patches": (k, l), "mu": [float(m) for m in mu],
                                   "max_distance": float(dist.max())})
    return violations
