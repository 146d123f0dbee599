"""Lagrange reduced-basis spaces, Galerkin projection and the online stage."""
import numpy as np
import scipy.linalg as sla

from . import expressions as ex


class CollinearSnapshot(Exception):
    """Raised internally when a snapshot adds no new direction."""


class ReducedSolveError(np.linalg.LinAlgError):
    pass


class RBSpace:
    """X-orthonormal basis ``Z`` of snapshots, grown one vector at a time.

    Offline appends must come from a single writer.
    """

    def __init__(self, X_gram, collinear_tol=1e-10):
        self.X = X_gram
        self.n = X_gram.shape[0]
        self.collinear_tol = collinear_tol
        self._Z = np.zeros((self.n, 0))
        self._XZ = np.zeros((self.n, 0))
        self.samples = []

    @property
    def N(self):
        return self._Z.shape[1]

    @property
    def Z(self):
        return self._Z

    def append(self, snapshot, mu=None):
        """Orthonormalize and append ``snapshot``; returns ``False`` if collinear."""
        return gram_schmidt_append(self, snapshot, mu)

    def reconstruct(self, coeffs):
        return reconstruct(self, coeffs)

    def orthonormality_error(self):
        return float(np.max(np.abs(self._Z.T @ self._XZ - np.eye(self.N)), initial=0.0))


def gram_schmidt_append(space, snapshot, mu=None):
    """Modified Gram-Schmidt in the X inner product, with one reorthogonalization.

    The snapshot is rejected (``False`` returned, space unchanged) when its
    component orthogonal to the space is below ``collinear_tol`` times its norm.
    """
    u = np.asarray(snapshot, dtype=float)
    norm0 = np.sqrt(max(u @ (space.X @ u), 0.0))
    if norm0 == 0.0:
        return False
    v = u.copy()
    for _ in range(2):
        for j in range(space.N):
            v -= (space._XZ[:, j] @ v) * space._Z[:, j]
    xv = space.X @ v
    norm = np.sqrt(max(v @ xv, 0.0))
    if norm < space.collinear_tol * norm0:
        return False
    space._Z = np.column_stack([space._Z, v / norm])
    space._XZ = np.column_stack([space._XZ, xv / norm])
    space.samples.append(None if mu is None else np.asarray(mu, dtype=float))
    return True


def reconstruct(space, coeffs):
    """Truth-sized vector ``Z @ coeffs`` (verification and field output only)."""
    coeffs = np.asarray(coeffs, dtype=float)
    return space.Z[:, :coeffs.shape[-1]] @ coeffs.T if coeffs.ndim == 2 else \
        space.Z[:, :len(coeffs)] @ coeffs


class ReducedModel:
    """Projected operators ``A_N^q``, loads ``f_N^q`` and certification data.

    Online evaluation uses only ``N``-, ``Q``- and sample-sized arrays.
    """

    def __init__(self, thetas, rhs_thetas, pdomain, A_N=None, f_N=None):
        self.thetas = [ex.as_expr(t) for t in thetas]
        self.rhs_thetas = [ex.as_expr(t) for t in rhs_thetas]
        self.pdomain = pdomain
        Q, Qf = len(self.thetas), len(self.rhs_thetas)
        self.A_N = np.zeros((Q, 0, 0)) if A_N is None else np.asarray(A_N, dtype=float)
        self.f_N = np.zeros((Qf, 0)) if f_N is None else np.asarray(f_N, dtype=float)
        self.residual = None
        self.coercivity = None
        self.samples = []
        self.history = []
        self.converged = False

    @property
    def N(self):
        return self.A_N.shape[1]

    @property
    def Q(self):
        return len(self.thetas)

    @property
    def Q_f(self):
        return len(self.rhs_thetas)

    # -- offline -----------------------------------------------------------------
    def append_basis(self, space, decomp):
        """Incremental projection after ``space`` gained one vector."""
        n = space.N
        if n != self.N + 1:
            raise ValueError(f"space has N={n}, model has N={self.N}; append one at a time")
        z = space.Z[:, -1]
        Z = space.Z
        A = np.zeros((self.Q, n, n))
        A[:, :n - 1, :n - 1] = self.A_N
        for q, m in enumerate(decomp.matrices):
            col = Z.T @ (m @ z)
            A[q, :, n - 1] = col
            A[q, n - 1, :] = col
        f = np.zeros((self.Q_f, n))
        f[:, :n - 1] = self.f_N
        for q, v in enumerate(decomp.rhs_vectors):
            f[q, n - 1] = v @ z
        self.A_N, self.f_N = A, f
        self.samples = [s for s in space.samples]

    # -- online --------------------------------------------------------------------
    def theta(self, mu):
        return _eval(self.thetas, mu)

    def rhs_theta(self, mu):
        return _eval(self.rhs_thetas, mu)

    def check_mu(self, mu):
        mu = np.asarray(mu, dtype=float)
        if mu.ndim == 1:
            return self.pdomain.check(mu)
        for m in mu:
            self.pdomain.check(m)
        return mu

    def solve(self, mu, N=None):
        return online_solve(self, mu, N)

    def output(self, mu, coeffs):
        return online_output(self, mu, coeffs)

    def query(self, mu, N=None, estimator="energy"):
        """Online answer at ``mu``: coefficients, ``s_N`` and the error bound."""
        mu = self.check_mu(mu)
        th, thf = self.theta(mu), self.rhs_theta(mu)
        u = _solve(self.A_N, self.f_N, th, thf, N)
        s = thf @ self.f_N[:, :len(u)] @ u
        rnorm = self.residual.dual_norm_from_thetas(th, thf, u)
        alpha = self.coercivity.lower_bound(mu)
        if alpha <= 0.0:
            raise ValueError(f"coercivity lower bound {alpha} is not positive at {mu}")
        delta = rnorm / np.sqrt(alpha) if estimator == "energy" else rnorm / alpha
        return {"coefficients": u, "s_N": float(s), "delta": float(delta),
                "residual": float(rnorm), "alpha_LB": float(alpha)}

    def solve_many(self, mus, N=None):
        """Batched reduced solves at ``mus`` (M, P); returns (M, N) coefficients."""
        mus = np.atleast_2d(mus)
        th, thf = self.theta(mus), self.rhs_theta(mus)
        n = self.N if N is None else N
        A = np.einsum("mq,qij->mij", th, self.A_N[:, :n, :n])
        f = thf @ self.f_N[:, :n]
        return np.linalg.solve(A, f[:, :, None])[:, :, 0], th, thf

    def arrays(self):
        """All online arrays, for structural checks and the archive."""
        out = {"A_N": self.A_N, "f_N": self.f_N}
        if self.residual is not None:
            out.update({f"residual/{k}": v for k, v in self.residual.arrays().items()})
        if self.coercivity is not None:
            out.update({f"coercivity/{k}": v for k, v in self.coercivity.arrays().items()})
        return out


def _eval(exprs, mu):
    mu = np.asarray(mu, dtype=float)
    if mu.ndim == 1:
        return np.array([e(mu) for e in exprs])
    return np.stack([e(mu) for e in exprs], axis=1)


def _solve(A_N, f_N, th, thf, N=None):
    n = A_N.shape[1] if N is None else N
    if n < 1:
        raise ReducedSolveError("reduced model is empty")
    A = np.tensordot(th, A_N[:, :n, :n], axes=1)
    f = thf @ f_N[:, :n]
    try:
        return sla.solve(A, f, assume_a="pos", check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ReducedSolveError(f"reduced system is singular: {exc}") from None


def project_operators(space, decomp, pdomain):
    """Full (non-incremental) projection ``A_N^q = Z^T A^q Z``, ``f_N^q = Z^T f^q``."""
    Z = space.Z
    A = np.stack([Z.T @ (m @ Z) for m in decomp.matrices])
    A = 0.5 * (A + A.transpose(0, 2, 1))
    f = np.stack([Z.T @ v for v in decomp.rhs_vectors]) if decomp.rhs_vectors \
        else np.zeros((0, space.N))
    model = ReducedModel(decomp.thetas, decomp.rhs_thetas, pdomain, A, f)
    model.samples = list(space.samples)
    return model


def online_solve(model, mu, N=None):
    """Coefficients ``u_N(mu)`` of the dense ``N x N`` reduced system."""
    mu = model.check_mu(mu)
    return _solve(model.A_N, model.f_N, model.theta(mu), model.rhs_theta(mu), N)


def online_output(model, mu, coeffs):
    """Compliant output ``s_N = sum_m u_m f(zeta_m; mu)``."""
    coeffs = np.asarray(coeffs, dtype=float)
    return float(model.rhs_theta(mu) @ model.f_N[:, :len(coeffs)] @ coeffs)
