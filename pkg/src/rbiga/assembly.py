"""Isogeometric Galerkin truth discretization.

The parametrized form on the deformed domain is pulled back patch by patch
to the reference domain, where every coefficient entry of
``A^k(mu) = J^k  Gc^k A_o^k Gc^k^T`` (``Gc = blockdiag(D, 1)``) becomes one
affine term ``Theta^q(mu) A^q``. Basis functions are the isoparametric NURBS
of the glued reference domain.
"""
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import expressions as ex
from . import kernels
from .geometry import transform_control_points
from .nurbs import SingularMapError, _rational, _tensor_point_basis


class AssemblyError(ValueError):
    pass


class NonAffineError(AssemblyError):
    """The requested term has no affine decomposition (e.g. a curved Neumann face)."""


class UnsupportedFeatureError(AssemblyError):
    pass


class SolverError(RuntimeError):
    pass


# -- problem definition ----------------------------------------------------------

@dataclass(frozen=True)
class Ball:
    """Indicator of a closed ball, given in reference coordinates."""

    center: tuple
    radius: float

    def __call__(self, x):
        c = np.asarray(self.center, dtype=float)
        return (np.sum((x - c) ** 2, axis=-1) <= self.radius ** 2).astype(float)


@dataclass
class ProblemDefinition:
    """Per-patch data of ``-div(K grad u) + c u = f`` with boundary conditions.

    Attributes
    ----------
    coefficients : list
        One ``(d+1) x (d+1)`` symmetric matrix of expressions per patch
        (diffusion block then reaction entry).
    sources : list
        Per patch a list of ``(expr, spatial)`` pairs. ``spatial`` is ``None``
        (constant), a :class:`Ball` or a callable of reference coordinates.
    boundary_conditions : dict
        ``tag -> ("dirichlet", 0.0)`` or ``tag -> ("neumann", h)``.
    """

    coefficients: list
    sources: list
    boundary_conditions: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = [ex.matrix(a) for a in self.coefficients]
        self.sources = [[(ex.as_expr(e), s) for e, s in src] for src in self.sources]
        if len(self.sources) != len(self.coefficients):
            raise AssemblyError("need one source list per patch")
        for k, a in enumerate(self.coefficients):
            n = len(a)
            if any(len(row) != n for row in a):
                raise AssemblyError(f"coefficient matrix of patch {k} is not square")
            for i, j in itertools.combinations(range(n), 2):
                if str(a[i][j]) != str(a[j][i]):
                    raise AssemblyError(f"coefficient matrix of patch {k} is not symmetric")
        for tag, (kind, value) in self.boundary_conditions.items():
            if kind not in ("dirichlet", "neumann"):
                raise AssemblyError(f"unknown boundary condition {kind!r} on {tag!r}")
            if kind == "dirichlet" and float(value) != 0.0:
                raise UnsupportedFeatureError("only homogeneous Dirichlet data is supported")

    @property
    def dirichlet_tags(self):
        return [t for t, (kind, _) in self.boundary_conditions.items() if kind == "dirichlet"]

    @property
    def neumann_tags(self):
        return [t for t, (kind, _) in self.boundary_conditions.items() if kind == "neumann"]

    def check_psd(self, mus, tol=1e-12):
        """Raise if some ``A_o^k(mu)`` has a clearly negative eigenvalue."""
        for k, a in enumerate(self.coefficients):
            for mu in np.atleast_2d(mus):
                lam = np.linalg.eigvalsh(ex.mat_eval(a, mu))
                if lam.min() < -tol * max(1.0, np.abs(lam).max()):
                    raise AssemblyError(f"coefficient matrix of patch {k} is indefinite "
                                        f"at mu={list(mu)}")


# -- quadrature --------------------------------------------------------------------

def gauss_rule_1d(kv, npts=None):
    """Gauss-Legendre points/weights on every nonzero span of ``kv``.

    Returns ``(points (E, Q), weights (E, Q), first (E,))`` where ``first`` is
    the index of the first nonzero basis function on the span.
    """
    npts = kv.degree + 1 if npts is None else npts
    gx, gw = np.polynomial.legendre.leggauss(npts)
    spans = np.asarray(kv.spans(), dtype=np.int64)
    a = kv.values[spans]
    b = kv.values[spans + 1]
    h = (b - a)[:, None]
    pts = a[:, None] + 0.5 * h * (gx[None, :] + 1.0)
    wts = 0.5 * h * gw[None, :]
    return pts, wts, spans - kv.degree


def build_quadrature(patch):
    """Per-direction Gauss rules with ``p_d + 1`` points per span."""
    return [gauss_rule_1d(kv) for kv in patch.knots]


@dataclass
class PatchQuadrature:
    """Basis data at all volume quadrature points of one patch.

    ``comps`` holds the ``d`` physical gradient components followed by the
    basis values, each of shape ``(E, Q, nloc)``.
    """

    conn: np.ndarray
    local_conn: np.ndarray
    weights: np.ndarray
    comps: list
    points: np.ndarray
    params: np.ndarray


def element_connectivity(patch, firsts):
    """Local lattice indices ``(E, nloc)`` of the basis functions on each element."""
    conn = np.zeros((1, 1), dtype=np.int64)
    stride = 1
    for d, first in enumerate(firsts):
        loc = first[:, None] + np.arange(patch.knots[d].degree + 1)[None, :]
        conn = (conn[None, :, None, :] + stride * loc[:, None, :, None]).reshape(
            conn.shape[0] * loc.shape[0], conn.shape[1] * loc.shape[1])
        stride *= patch.shape[d]
    return conn


def patch_quadrature(patch, glue=None):
    rules = build_quadrature(patch)
    k = patch.param_dim
    if k != patch.dim:
        raise AssemblyError("volume assembly needs param_dim == dim")
    vals0, vals1, firsts = [], [], []
    for kv, (pts, _, first) in zip(patch.knots, rules):
        e, q = pts.shape
        _, ders = kernels.basis_funs_ders(kv.values, kv.degree, pts.ravel(), 1)
        ders = ders.reshape(e, q, 2, kv.degree + 1)
        vals0.append(np.ascontiguousarray(ders[:, :, 0, :]))
        vals1.append(np.ascontiguousarray(ders[:, :, 1, :]))
        firsts.append(first)

    B = kernels.tensor_basis(vals0)
    dB = []
    for j in range(k):
        dB.append(kernels.tensor_basis([vals1[d] if d == j else vals0[d] for d in range(k)]))
    wq = kernels.tensor_basis([w[:, :, None] for _, w, _ in rules])[:, :, 0]
    params = np.stack([kernels.tensor_basis([(p if d == j else np.ones_like(p))[:, :, None]
                                             for d, (p, _, _) in enumerate(rules)])[:, :, 0]
                       for j in range(k)], axis=-1)

    conn = element_connectivity(patch, firsts)
    w = patch.flat_weights[conn][:, None, :]
    P = patch.flat_points[conn]
    wsum = np.sum(B * w, axis=2)
    R = B * w / wsum[:, :, None]
    dR = [(g * w - R * np.sum(g * w, axis=2)[:, :, None]) / wsum[:, :, None] for g in dB]
    jac = np.stack([np.einsum("eqa,eai->eqi", g, P) for g in dR], axis=-1)  # (E,Q,d,k)
    det = np.linalg.det(jac)
    if np.any(np.abs(det) < 1e-14):
        raise SingularMapError("geometry map is singular at a quadrature point")
    inv = np.linalg.inv(jac)  # (E,Q,k,d)
    grads = [sum(inv[:, :, j, i][:, :, None] * dR[j] for j in range(k)) for i in range(patch.dim)]
    x = np.einsum("eqa,eai->eqi", R, P)
    gconn = conn if glue is None else glue[conn]
    return PatchQuadrature(gconn, conn, wq * np.abs(det), grads + [R], x, params)


def _face_quadrature(patch, face):
    """Surface quadrature on a parametric face: params, weights, basis, normals."""
    axis, side = "uvw".index(face[0]), int(face[1])
    free = [d for d in range(patch.param_dim) if d != axis]
    rules = [gauss_rule_1d(patch.knots[d]) for d in free]
    pts1 = [r[0].ravel() for r in rules]
    wts1 = [r[1].ravel() for r in rules]
    grid = np.meshgrid(*pts1, indexing="ij")
    wgrid = np.meshgrid(*wts1, indexing="ij")
    m = grid[0].size
    params = np.empty((m, patch.param_dim))
    for d, g in zip(free, grid):
        params[:, d] = g.ravel(order="F")
    params[:, axis] = float(side)
    wq = np.prod([g.ravel(order="F") for g in wgrid], axis=0)
    idx, vals, grads = _tensor_point_basis(patch, params, 1)
    R, dR = _rational(patch, idx, vals, grads)
    jac = np.einsum("mja,mai->mij", dR, patch.flat_points[idx])
    tang = jac[:, :, free]
    if patch.dim == 3:
        nvec = np.cross(tang[:, :, 0], tang[:, :, 1])
    else:
        t = tang[:, :, 0]
        nvec = np.stack([t[:, 1], -t[:, 0]], axis=1)
    meas = np.linalg.norm(nvec, axis=1)
    return idx, R, wq * meas, nvec / meas[:, None], params


def _planar_normal(patch, face, tol=1e-10):
    _, _, _, normals, _ = _face_quadrature(patch, face)
    n0 = normals[0]
    if np.max(np.abs(normals - n0)) > tol:
        raise NonAffineError(f"Neumann face {face} is not planar; its pulled-back "
                             "measure is not affine in the parameters")
    n0 = np.where(np.abs(n0) < 1e-13, 0.0, n0)
    return n0 / np.linalg.norm(n0)


# -- parametric coefficients ------------------------------------------------------

def _block_g(dinv):
    d = len(dinv)
    return [[dinv[i][j] if i < d and j < d else (ex.ONE if i == j else ex.ZERO)
             for j in range(d + 1)] for i in range(d + 1)]


def build_parametric_coefficient(amap, problem, k, mu_ref):
    """``A^k(mu) = J Gc A_o Gc^T`` and ``f^k(mu) = J f_o`` as expressions."""
    jac = amap.jacobian_expr(k, mu_ref)
    gc = _block_g(amap.inverse_expr(k))
    a_o = problem.coefficients[k]
    if len(a_o) != amap.dim + 1:
        raise AssemblyError(f"patch {k}: coefficient matrix must be "
                            f"{amap.dim + 1}x{amap.dim + 1}")
    inner = ex.matmul(ex.matmul(gc, a_o), ex.transpose(gc))
    a = [[jac * e for e in row] for row in inner]
    f = [(jac * e, s) for e, s in problem.sources[k]]
    return a, f


def neumann_factor(amap, k, normal, mu_ref):
    """``J |D^T n|`` as an expression for a planar face with unit normal ``n``."""
    dinv = amap.inverse_expr(k)
    d = len(dinv)
    comps = []
    for j in range(d):
        c = ex.ZERO
        for i in range(d):
            if normal[i] != 0.0:
                c = c + dinv[i][j] * float(normal[i])
        if not ex.is_zero(c):
            comps.append(c)
    jac = amap.jacobian_expr(k, mu_ref)
    if len(comps) == 1:
        c = comps[0]
        return jac * c if c(mu_ref) > 0 else jac * (-c)
    s = ex.ZERO
    for c in comps:
        s = s + c * c
    return jac * ex.sqrt(s)


# -- affine decomposition -----------------------------------------------------------

@dataclass
class AffineFormDecomposition:
    """``A(mu) = sum_q Theta^q(mu) A^q`` and ``f(mu) = sum_q Theta_f^q(mu) f^q``.

    Matrices act on the DOFs listed in ``free`` (all DOFs before
    :func:`apply_dirichlet`). ``psd`` flags terms known to be positive
    semi-definite by construction.
    """

    thetas: list
    matrices: list
    rhs_thetas: list
    rhs_vectors: list
    n_dofs: int
    free: np.ndarray
    psd: list
    labels: list = field(default_factory=list)

    @property
    def Q(self):
        return len(self.thetas)

    @property
    def Q_f(self):
        return len(self.rhs_thetas)

    @property
    def size(self):
        return len(self.free)

    def theta_values(self, mu):
        return _eval_all(self.thetas, mu)

    def rhs_theta_values(self, mu):
        return _eval_all(self.rhs_thetas, mu)

    def matrix(self, mu):
        th = self.theta_values(mu)
        out = self.matrices[0] * th[0]
        for t, m in zip(th[1:], self.matrices[1:]):
            out = out + t * m
        return out.tocsr()

    def rhs(self, mu):
        th = self.rhs_theta_values(mu)
        if not self.rhs_vectors:
            return np.zeros(self.size)
        return sum(t * v for t, v in zip(th, self.rhs_vectors))

    def expand(self, u):
        """Embed a free-DOF vector into the full DOF vector (zeros elsewhere)."""
        full = np.zeros(self.n_dofs)
        full[self.free] = u
        return full


def _eval_all(exprs, mu):
    mu = np.asarray(mu, dtype=float)
    if mu.ndim == 1:
        return np.array([e(mu) for e in exprs])
    return np.stack([e(mu) for e in exprs], axis=1) if exprs else np.zeros((len(mu), 0))


def merge_terms(thetas, items, samples, combine, rtol=1e-12):
    """Merge terms whose thetas agree at all ``samples``; keeps first-seen order."""
    vals = [np.atleast_1d(t(samples)) for t in thetas]
    groups = []
    for i, v in enumerate(vals):
        for g in groups:
            w = vals[g[0]]
            if np.all(np.abs(v - w) <= rtol * np.maximum(np.abs(v), np.abs(w)) + 1e-300):
                g.append(i)
                break
        else:
            groups.append([i])
    merged = []
    for g in groups:
        merged.append((thetas[g[0]], combine([items[i] for i in g]), g))
    return merged


def _scatter_matrix(pairs, n):
    rows, cols, vals = [], [], []
    for qd, (i, j) in pairs:
        ke = kernels.element_matrices(qd.comps[i], qd.comps[j], qd.weights)
        if i != j:
            ke = ke + ke.transpose(0, 2, 1)
        nloc = qd.conn.shape[1]
        rows.append(np.repeat(qd.conn, nloc, axis=1).ravel())
        cols.append(np.tile(qd.conn, (1, nloc)).ravel())
        vals.append(ke.ravel())
    m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    m.sum_duplicates()
    return ((m + m.T) * 0.5).tocsr()


def _scatter_vector(conn, vals, n):
    return np.bincount(conn.ravel(), weights=vals.ravel(), minlength=n)


def _source_values(spatial, x):
    if spatial is None:
        return np.ones(x.shape[:-1])
    return np.asarray(spatial(x), dtype=float)


def _neumann_faces(domain, problem):
    faces = []
    seen = {}
    for tag in problem.neumann_tags:
        h = float(problem.boundary_conditions[tag][1])
        for kf in domain.boundary_tags.get(tag, []):
            if kf in seen:
                raise AssemblyError(f"face {kf} carries two Neumann tags")
            seen[kf] = tag
            if h != 0.0:
                faces.append((kf[0], kf[1], h))
    for tag in problem.dirichlet_tags:
        for kf in domain.boundary_tags.get(tag, []):
            if kf in seen:
                raise AssemblyError(f"face {kf} is tagged both Dirichlet ({tag}) and "
                                    f"Neumann ({seen[kf]})")
    return faces


def assemble_affine_decomposition(domain, amap, problem, pdomain, quads=None,
                                  merge_samples=16, seed=20240607):
    """Assemble all affine terms on the reference domain and merge equal thetas.

    ``quads`` may carry precomputed :class:`PatchQuadrature` objects.
    """
    if amap.n_patches != domain.n_patches or len(problem.coefficients) != domain.n_patches:
        raise AssemblyError("map, problem and domain disagree on the number of patches")
    n = domain.n_dofs
    mu_ref = pdomain.mu_ref
    if quads is None:
        quads = [patch_quadrature(p, g) for p, g in zip(domain.patches, domain.glue)]

    thetas, pairs, labels, psd = [], [], [], []
    rhs_thetas, rhs_vecs, rhs_labels = [], [], []
    for k, qd in enumerate(quads):
        a, f = build_parametric_coefficient(amap, problem, k, mu_ref)
        for i in range(len(a)):
            for j in range(i, len(a)):
                if ex.is_zero(a[i][j]):
                    continue
                thetas.append(a[i][j])
                pairs.append((qd, (i, j)))
                labels.append(f"patch{k}[{i},{j}]")
                psd.append(i == j)
        for e, spatial in f:
            if ex.is_zero(e):
                continue
            g = _source_values(spatial, qd.points)
            vals = np.einsum("eqa,eq->ea", qd.comps[-1], qd.weights * g)
            rhs_thetas.append(e)
            rhs_vecs.append(_scatter_vector(qd.conn, vals, n))
            rhs_labels.append(f"source{k}")

    for k, face, h in _neumann_faces(domain, problem):
        patch = domain.patches[k]
        normal = _planar_normal(patch, face)
        idx, R, w, _, _ = _face_quadrature(patch, face)
        gidx = domain.glue[k][idx]
        rhs_thetas.append(neumann_factor(amap, k, normal, mu_ref))
        rhs_vecs.append(_scatter_vector(gidx, R * (h * w)[:, None], n))
        rhs_labels.append(f"neumann{k}{face}")

    samples = pdomain.sample(merge_samples, seed)
    # evaluate every theta once on the samples; this also catches divisions by zero
    merged = merge_terms(thetas, list(range(len(thetas))), samples, lambda g: g)
    mats, m_thetas, m_psd, m_labels = [], [], [], []
    for theta, group, _ in merged:
        mats.append(_scatter_matrix([pairs[i] for i in group], n))
        m_thetas.append(theta)
        m_psd.append(all(psd[i] for i in group))
        m_labels.append("+".join(labels[i] for i in group))
    rmerged = merge_terms(rhs_thetas, rhs_vecs, samples, lambda vs: np.sum(vs, axis=0))
    return AffineFormDecomposition(
        thetas=m_thetas, matrices=mats,
        rhs_thetas=[t for t, _, _ in rmerged], rhs_vectors=[v for _, v, _ in rmerged],
        n_dofs=n, free=np.arange(n), psd=m_psd, labels=m_labels)


def assemble_direct(domain, amap, problem, mu):
    """Full-DOF ``A(mu), f(mu)`` assembled directly on the deformed geometry.

    Serves as an oracle for the affine decomposition.
    """
    mu = np.asarray(mu, dtype=float)
    deformed = transform_control_points(domain, amap, mu)
    n = domain.n_dofs
    rows, cols, vals = [], [], []
    f = np.zeros(n)
    for k, (p_ref, p_def) in enumerate(zip(domain.patches, deformed.patches)):
        qd = patch_quadrature(p_def, domain.glue[k])
        x_ref = np.einsum("eqa,eai->eqi", qd.comps[-1],
                          p_ref.flat_points[qd.local_conn])
        a = ex.mat_eval(problem.coefficients[k], mu)
        nloc = qd.conn.shape[1]
        ke = np.zeros((qd.conn.shape[0], nloc, nloc))
        for i, j in itertools.product(range(len(a)), repeat=2):
            if a[i, j] != 0.0:
                ke += a[i, j] * np.einsum("eqa,eqb,eq->eab", qd.comps[i], qd.comps[j],
                                          qd.weights)
        rows.append(np.repeat(qd.conn, nloc, axis=1).ravel())
        cols.append(np.tile(qd.conn, (1, nloc)).ravel())
        vals.append(ke.ravel())
        for e, spatial in problem.sources[k]:
            g = e(mu) * _source_values(spatial, x_ref)
            f += _scatter_vector(qd.conn, np.einsum("eqa,eq->ea", qd.comps[-1],
                                                    qd.weights * g), n)
    for k, face, h in _neumann_faces(domain, problem):
        idx, R, w, _, _ = _face_quadrature(deformed.patches[k], face)
        f += _scatter_vector(domain.glue[k][idx], R * (h * w)[:, None], n)
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    return A, f


# -- boundary conditions, solves, outputs -------------------------------------------

def dirichlet_dofs(domain, problem):
    tags = problem.dirichlet_tags
    if not tags:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate([domain.tag_dofs(t) for t in tags]))


def apply_dirichlet(decomp, constrained):
    """Eliminate the (homogeneous) Dirichlet DOFs ``constrained``."""
    mask = np.ones(decomp.n_dofs, dtype=bool)
    mask[np.asarray(constrained, dtype=np.int64)] = False
    keep = mask[decomp.free]
    free = decomp.free[keep]
    sel = np.nonzero(keep)[0]
    mats = [m[sel][:, sel].tocsr() for m in decomp.matrices]
    vecs = [v[sel] for v in decomp.rhs_vectors]
    return AffineFormDecomposition(list(decomp.thetas), mats, list(decomp.rhs_thetas), vecs,
                                   decomp.n_dofs, free, list(decomp.psd), list(decomp.labels))


def is_spd(matrix):
    """Symmetric positive definiteness via an unpivoted-diagonal sparse LU."""
    try:
        lu = spla.splu(sp.csc_matrix(matrix), permc_spec="MMD_AT_PLUS_A",
                       diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    except RuntimeError:
        return False
    d = lu.U.diagonal()
    return bool(np.all(d > 0.0)) and np.array_equal(lu.perm_r, lu.perm_c)


def build_x_gram(decomp, mu_ref):
    x = decomp.matrix(mu_ref)
    if not is_spd(x):
        raise AssemblyError("A(mu_ref) is not positive definite on the free DOFs")
    return x


def solve_spd(A, b, rtol=1e-10):
    """Sparse direct solve with a CG fallback; raises :class:`SolverError`."""
    A = sp.csc_matrix(A)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    diag = ""
    try:
        u = spla.splu(A).solve(b)
        res = np.linalg.norm(A @ u - b) / bnorm
        if res < rtol:
            return u
        diag = f"direct solve residual {res:.2e}"
    except RuntimeError as exc:
        diag = f"factorization failed ({exc})"
    u, info = spla.cg(A, b, rtol=1e-12, maxiter=10 * A.shape[0])
    res = np.linalg.norm(A @ u - b) / bnorm
    if info != 0 or res >= rtol:
        raise SolverError(f"truth solve failed: {diag}; CG info={info}, residual {res:.2e}")
    return u


def truth_solve(decomp, mu):
    """Free-DOF truth coefficients ``u(mu)``."""
    return solve_spd(decomp.matrix(mu), decomp.rhs(mu))


def evaluate_output(u, decomp, mu):
    """Compliant output ``s = f(mu)^T u``."""
    return float(decomp.rhs(mu) @ u)


def evaluate_field(domain, u_full, patch, x):
    """``u(x) = sum_i u_i R_i(x)`` at parametric point(s) ``x`` of ``patch``."""
    p = domain.patches[patch]
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    xs = x.reshape(1, -1) if single else x
    idx, vals, _ = _tensor_point_basis(p, xs, 0)
    R, _ = _rational(p, idx, vals, None)
    out = np.sum(R * np.asarray(u_full)[domain.glue[patch][idx]], axis=1)
    return float(out[0]) if single else out


def l2_error(domain, u_full, exact, quads=None):
    """``||u_h - u||_{L2}`` on the reference domain via the volume quadrature."""
    if quads is None:
        quads = [patch_quadrature(p, g) for p, g in zip(domain.patches, domain.glue)]
    total = 0.0
    for qd in quads:
        uh = np.einsum("eqa,ea->eq", qd.comps[-1], np.asarray(u_full)[qd.conn])
        total += float(np.sum(qd.weights * (uh - exact(qd.points)) ** 2))
    return np.sqrt(total)
