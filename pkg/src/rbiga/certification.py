"""A posteriori certification: residual dual norms and coercivity lower bounds.

The residual Riesz representers ``X^{-1} f^q`` and ``X^{-1} A^q zeta_n`` are
kept offline as an X-orthonormal basis ``W``; online only their coefficient
matrix in that basis is used, so ``||r||_{X'}`` is the Euclidean norm of a
short vector and never the square root of a difference of large numbers.
"""
import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linprog

from . import expressions as ex


class CertificationError(ValueError):
    pass


class MinThetaError(CertificationError):
    """The min-theta bound is not valid for this decomposition."""


class EigenSolverError(RuntimeError):
    pass


class SCMWarning(UserWarning):
    pass


# -- residual data ----------------------------------------------------------------

class ResidualData:
    """Coefficients of the residual representers in an X-orthonormal basis.

    ``coef_f`` has shape ``(K, Q_f)`` and ``coef_a`` shape ``(K, Q, N)``.
    The Gram blocks of the representers follow as ``c_ff = coef_f^T coef_f``
    and so on.
    """

    def __init__(self, coef_f, coef_a):
        self.coef_f = np.asarray(coef_f, dtype=float)
        self.coef_a = np.asarray(coef_a, dtype=float)

    @property
    def N(self):
        return self.coef_a.shape[2]

    @property
    def c_ff(self):
        return self.coef_f.T @ self.coef_f

    @property
    def c_fa(self):
        K, Q, N = self.coef_a.shape
        return self.coef_f.T @ self.coef_a.reshape(K, Q * N)

    @property
    def c_aa(self):
        K, Q, N = self.coef_a.shape
        flat = self.coef_a.reshape(K, Q * N)
        return flat.T @ flat

    def vector(self, th, thf, u):
        n = u.shape[-1]
        if u.ndim == 1:
            return self.coef_f @ thf - np.einsum("kqn,q,n->k", self.coef_a[:, :, :n], th, u)
        return thf @ self.coef_f.T - np.einsum("kqn,mq,mn->mk", self.coef_a[:, :, :n], th, u)

    def dual_norm_from_thetas(self, th, thf, u):
        return np.linalg.norm(self.vector(th, thf, u), axis=-1)

    def arrays(self):
        return {"coef_f": self.coef_f, "coef_a": self.coef_a}


class ResidualBuilder:
    """Offline helper growing :class:`ResidualData` as the basis grows."""

    def __init__(self, decomp, X_gram, drop_tol=1e-13):
        self.decomp = decomp
        self.X = sp.csc_matrix(X_gram)
        try:
            self._lu = spla.splu(self.X)
        except RuntimeError as exc:
            raise CertificationError(f"cannot factorize X_gram: {exc}") from None
        self.drop_tol = drop_tol
        self.W = np.zeros((self.X.shape[0], 0))
        self.XW = np.zeros((self.X.shape[0], 0))
        self._cf = []
        self._ca = []  # list over n of (Q, K_n) coefficient blocks
        for v in decomp.rhs_vectors:
            self._cf.append(self._add(self._lu.solve(v)))

    def _add(self, rep):
        """Express ``rep`` in ``W`` (extending ``W`` if needed); return coefficients."""
        xrep = self.X @ rep
        norm0 = np.sqrt(max(rep @ xrep, 0.0))
        coef = np.zeros(self.W.shape[1])
        v = rep.copy()
        for _ in range(2):
            c = self.XW.T @ v
            v -= self.W @ c
            coef += c
        xv = self.X @ v
        norm = np.sqrt(max(v @ xv, 0.0))
        if norm0 > 0.0 and norm > self.drop_tol * norm0:
            self.W = np.column_stack([self.W, v / norm])
            self.XW = np.column_stack([self.XW, xv / norm])
            coef = np.append(coef, norm)
        return coef

    def append(self, zeta):
        self._ca.append([self._add(self._lu.solve(m @ zeta)) for m in self.decomp.matrices])

    def data(self):
        K = self.W.shape[1]
        cf = np.zeros((K, len(self._cf)))
        for q, c in enumerate(self._cf):
            cf[:len(c), q] = c
        ca = np.zeros((K, self.decomp.Q, len(self._ca)))
        for n, blocks in enumerate(self._ca):
            for q, c in enumerate(blocks):
                ca[:len(c), q, n] = c
        return ResidualData(cf, ca)

    def riesz_solve(self, r):
        return self._lu.solve(r)


def build_residual_data(space, decomp, X_gram):
    """Residual data for all vectors of ``space`` at once."""
    b = ResidualBuilder(decomp, X_gram)
    for n in range(space.N):
        b.append(space.Z[:, n])
    return b.data()


def residual_dual_norm(data, model, mu, coeffs):
    """``||r(.; mu)||_{X'}`` from the cached residual data."""
    return float(data.dual_norm_from_thetas(model.theta(mu), model.rhs_theta(mu),
                                            np.asarray(coeffs, dtype=float)))


def residual_dual_norm_direct(decomp, X_gram, Z, mu, coeffs):
    """Oracle: ``r = f - A Z u``, ``||r||^2 = r^T X^{-1} r``."""
    r = decomp.rhs(mu) - decomp.matrix(mu) @ (Z[:, :len(coeffs)] @ coeffs)
    y = spla.splu(sp.csc_matrix(X_gram)).solve(r)
    return float(np.sqrt(max(r @ y, 0.0)))


# -- exact coercivity and Rayleigh bounds -----------------------------------------

def generalized_extreme_eig(A, X, which="min", kind="spd", tol=1e-12):
    """Extreme eigenpair of the pencil ``(A, X)`` with ``X`` SPD.

    ``kind`` describes ``A`` ("spd", "psd" or "any") and selects the shift
    used for the smallest eigenvalue.
    """
    A = sp.csc_matrix(A)
    X = sp.csc_matrix(X)
    n = A.shape[0]
    if n <= 200:
        w, v = sla.eigh(A.toarray(), X.toarray())
        i = 0 if which == "min" else -1
        return float(w[i]), v[:, i]
    try:
        if which == "max":
            w, v = spla.eigsh(A, k=1, M=X, which="LA", tol=tol, Minv=_lu_operator(X))
        elif kind == "any":
            w, v = spla.eigsh(A, k=1, M=X, which="SA", tol=tol, Minv=_lu_operator(X),
                              maxiter=50 * n)
        else:
            sigma = 0.0
            if kind == "psd":
                # singular A: shift slightly below zero so A - sigma X is SPD
                scale = spla.eigsh(A, k=1, M=X, which="LA", tol=1e-6,
                                   Minv=_lu_operator(X))[0][0]
                sigma = -1e-6 * max(abs(scale), 1e-300)
            w, v = spla.eigsh(A, k=1, M=X, sigma=sigma, which="LM", tol=tol)
    except (spla.ArpackNoConvergence, spla.ArpackError, RuntimeError) as exc:
        raise EigenSolverError(f"generalized eigensolver failed: {exc}") from None
    return float(w[0]), v[:, 0]


def _lu_operator(X):
    lu = spla.splu(sp.csc_matrix(X))
    return spla.LinearOperator(X.shape, matvec=lu.solve, dtype=float)


def exact_coercivity(decomp, X_gram, mu):
    """``alpha(mu)``: smallest eigenvalue of ``(A(mu), X)`` (shift-invert Lanczos)."""
    return generalized_extreme_eig(decomp.matrix(mu), X_gram, "min")[0]


def exact_coercivity_vector(decomp, X_gram, mu):
    return generalized_extreme_eig(decomp.matrix(mu), X_gram, "min")


def term_is_psd(matrix, tol=1e-10, dense_limit=3000):
    """Numerical PSD check: ``lambda_min >= -tol * trace``."""
    trace = float(matrix.diagonal().sum())
    n = matrix.shape[0]
    if n <= dense_limit:
        lam = np.linalg.eigvalsh(matrix.toarray())[0]
    else:
        lam = spla.eigsh(sp.csc_matrix(matrix), k=1, which="SA", tol=1e-8,
                         maxiter=20 * n)[0][0]
    return lam >= -tol * abs(trace)


# -- coercivity models ----------------------------------------------------------------

class MinThetaCoercivity:
    """``alpha_LB(mu) = min_q Theta^q(mu) / Theta^q(mu_ref)``.

    Valid when every ``A^q`` is PSD and every ``Theta^q > 0`` on the
    parameter box, with the X inner product equal to ``a(., .; mu_ref)``.
    """

    strategy = "mintheta"

    def __init__(self, thetas, mu_ref):
        self.thetas = [ex.as_expr(t) for t in thetas]
        self.mu_ref = np.asarray(mu_ref, dtype=float)
        self.theta_ref = np.array([t(self.mu_ref) for t in self.thetas])
        if np.any(self.theta_ref <= 0.0):
            raise MinThetaError("Theta^q(mu_ref) must be positive; use the SCM strategy")

    @classmethod
    def build(cls, decomp, pdomain, n_samples=256, seed=0, check_psd=True):
        """Validate the preconditions and build the bound."""
        samples = np.vstack([pdomain.sample(n_samples, seed), pdomain.corners()])
        th = decomp.theta_values(samples)
        if np.any(th <= 0.0):
            q = int(np.nonzero(np.any(th <= 0.0, axis=0))[0][0])
            raise MinThetaError(f"Theta^{q} = {decomp.thetas[q]} is not positive on the "
                                "parameter box; use the SCM strategy")
        if check_psd:
            for q, (m, flag) in enumerate(zip(decomp.matrices, decomp.psd)):
                if not flag and not term_is_psd(m):
                    raise MinThetaError(f"A^{q} is not positive semi-definite; use the "
                                        "SCM strategy")
        return cls(decomp.thetas, pdomain.mu_ref)

    def lower_bound(self, mu):
        mu = np.asarray(mu, dtype=float)
        vals = np.array([t(mu) for t in self.thetas])
        return float(np.min(vals / self.theta_ref)) if mu.ndim == 1 else \
            np.min(vals.T / self.theta_ref, axis=1)

    def lower_bounds(self, mus):
        return np.atleast_1d(self.lower_bound(np.atleast_2d(mus)))

    def arrays(self):
        return {"theta_ref": self.theta_ref}

    def metadata(self):
        return {"strategy": self.strategy, "mu_ref": self.mu_ref.tolist()}


class SCMCoercivity:
    """Successive constraint method lower/upper bounds.

    Attributes
    ----------
    box : ndarray (Q, 2)
        Rayleigh-quotient bounds of each ``A^q`` relative to ``X``.
    samples : ndarray (K, P)
        Trained parameters.
    alphas : ndarray (K,)
        Exact coercivity constants at the trained parameters.
    yvecs : ndarray (K, Q)
        ``a^q(v, v) / ||v||_X^2`` for the minimizing eigenvectors.
    """

    strategy = "scm"
    rhs_margin = 1e-6
    box_margin = 1e-8

    def __init__(self, thetas, box, samples, alphas, yvecs, M=4, eps=0.75, converged=True):
        self.thetas = [ex.as_expr(t) for t in thetas]
        self.box = np.asarray(box, dtype=float)
        self.samples = np.atleast_2d(np.asarray(samples, dtype=float))
        self.alphas = np.asarray(alphas, dtype=float)
        self.yvecs = np.asarray(yvecs, dtype=float).reshape(-1, len(self.thetas))
        self.M = int(M)
        self.eps = float(eps)
        self.converged = bool(converged)
        self._theta_samples = self._theta(self.samples) if len(self.samples) else None

    def _theta(self, mus):
        return np.stack([np.atleast_1d(t(np.atleast_2d(mus))) for t in self.thetas], axis=1)

    def upper_bound(self, mu):
        th = self._theta(mu)[0]
        return float(np.min(self.yvecs @ th))

    def lower_bound(self, mu):
        mu = np.asarray(mu, dtype=float)
        th = self._theta(mu)[0]
        Q = len(th)
        d = np.linalg.norm(self.samples - mu, axis=1)
        near = np.argsort(d, kind="stable")[:self.M]
        A_ub = -self._theta_samples[near]
        b_ub = -self.alphas[near] * (1.0 - self.rhs_margin)
        span = self.box[:, 1] - self.box[:, 0]
        lo = self.box[:, 0] - self.box_margin * np.maximum(span, 1.0)
        hi = self.box[:, 1] + self.box_margin * np.maximum(span, 1.0)
        res = linprog(th, A_ub=A_ub, b_ub=b_ub, bounds=list(zip(lo, hi)), method="highs")
        if res.status != 0:
            raise CertificationError(f"SCM linear program failed at mu={mu.tolist()}: "
                                     f"{res.message}")
        return float(res.fun) if Q else 0.0

    def lower_bounds(self, mus):
        return np.array([self.lower_bound(m) for m in np.atleast_2d(mus)])

    def arrays(self):
        return {"box": self.box, "samples": self.samples, "alphas": self.alphas,
                "yvecs": self.yvecs}

    def metadata(self):
        return {"strategy": self.strategy, "M": self.M, "eps": self.eps,
                "converged": self.converged}


def scm_box(decomp, X_gram):
    box = np.zeros((decomp.Q, 2))
    for q, (m, flag) in enumerate(zip(decomp.matrices, decomp.psd)):
        box[q, 0] = generalized_extreme_eig(m, X_gram, "min", "psd" if flag else "any")[0]
        box[q, 1] = generalized_extreme_eig(m, X_gram, "max")[0]
    return box


def scm_train(decomp, X_gram, training, eps=0.75, M=4, max_iter=100, box=None):
    """Greedy-on-gap SCM over the training set.

    Returns an :class:`SCMCoercivity`; ``converged`` is ``False`` (with a
    warning) when ``max_iter`` samples did not reach the gap tolerance.
    """
    training = np.atleast_2d(np.asarray(training, dtype=float))
    if box is None:
        box = scm_box(decomp, X_gram)
    th_train = decomp.theta_values(training)
    chosen, alphas, yvecs = [], [], []
    idx = 0
    while True:
        mu = training[idx]
        alpha, v = exact_coercivity_vector(decomp, X_gram, mu)
        xv = X_gram @ v
        nv = v @ xv
        y = np.array([v @ (m @ v) / nv for m in decomp.matrices])
        chosen.append(mu)
        alphas.append(alpha)
        yvecs.append(y)
        model = SCMCoercivity(decomp.thetas, box, np.array(chosen), np.array(alphas),
                              np.array(yvecs), M=M, eps=eps)
        ub = np.min(th_train @ model.yvecs.T, axis=1)
        lb = model.lower_bounds(training)
        gap = (ub - lb) / ub
        worst = int(np.argmax(gap))
        if gap[worst] <= eps:
            break
        if len(chosen) >= max_iter:
            warnings.warn(f"SCM stopped after {max_iter} samples with gap {gap[worst]:.3g}",
                          SCMWarning)
            model.converged = False
            break
        idx = worst
    model.gap = float(np.max(gap))
    return model


# -- estimators --------------------------------------------------------------------

def coercivity_lower_bound(model, mu):
    return model.lower_bound(mu)


def error_estimator(rnorm, alpha_lb, kind="energy"):
    """``Delta_en = ||r|| / sqrt(alpha_LB)`` or ``Delta_X = ||r|| / alpha_LB``."""
    alpha_lb = np.asarray(alpha_lb, dtype=float)
    if np.any(alpha_lb <= 0.0):
        raise CertificationError("coercivity lower bound must be positive")
    if kind == "energy":
        return rnorm / np.sqrt(alpha_lb)
    if kind == "xnorm":
        return rnorm / alpha_lb
    raise ValueError(f"unknown estimator {kind!r}")
