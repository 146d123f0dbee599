"""Greedy selection of snapshot parameters driven by the error estimator."""
import csv
import io
import itertools
import re
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import truth_solve
from .certification import ResidualBuilder, error_estimator
from .reduction import RBSpace, ReducedModel


class GreedyConfigError(ValueError):
    pass


def sample_training_set(pdomain, spec):
    """Training set from ``"lattice=KxKxK"``, ``"random:n,seed"`` or an explicit array."""
    if isinstance(spec, str):
        spec = spec.strip()
        m = re.fullmatch(r"lattice=([0-9x]+)", spec)
        if m:
            sizes = [int(s) for s in m.group(1).split("x")]
            return lattice(pdomain, sizes)
        m = re.fullmatch(r"random:(\d+),(\d+)", spec)
        if m:
            n, seed = int(m.group(1)), int(m.group(2))
            if n < 1:
                raise GreedyConfigError("random training set needs n >= 1")
            return pdomain.sample(n, seed)
        raise GreedyConfigError(f"cannot parse training spec {spec!r}")
    pts = np.atleast_2d(np.asarray(spec, dtype=float))
    if pts.size == 0:
        raise GreedyConfigError("empty training set")
    for p in pts:
        pdomain.check(p)
    return pts


def lattice(pdomain, sizes):
    if len(sizes) == 1:
        sizes = sizes * pdomain.P
    if len(sizes) != pdomain.P or min(sizes) < 1:
        raise GreedyConfigError(f"lattice needs {pdomain.P} positive sizes, got {sizes}")
    axes = [np.linspace(a, b, k) if k > 1 else np.array([(a + b) / 2])
            for (a, b), k in zip(pdomain.bounds, sizes)]
    # first parameter varies fastest
    return np.array([pt[::-1] for pt in itertools.product(*axes[::-1])])


@dataclass
class GreedyConfig:
    training: np.ndarray
    tol: float = 1e-6
    n_max: int = 50
    first: str = "centroid"
    estimator: str = "energy"
    keep_estimates: bool = False
    normalize: str = "none"

    def __post_init__(self):
        self.training = np.atleast_2d(np.asarray(self.training, dtype=float))
        if self.training.size == 0:
            raise GreedyConfigError("empty training set")
        if not self.tol > 0:
            raise GreedyConfigError("tol must be positive")
        if self.n_max < 1:
            raise GreedyConfigError("n_max must be at least 1")
        if self.estimator not in ("energy", "xnorm"):
            raise GreedyConfigError(f"unknown estimator {self.estimator!r}")
        if self.normalize not in ("none", "output"):
            raise GreedyConfigError(f"unknown normalization {self.normalize!r}")

    def first_index(self, pdomain):
        if self.first == "centroid":
            d = np.linalg.norm(self.training - pdomain.centroid, axis=1)
            return int(np.argmin(d))
        m = re.fullmatch(r"random:(\d+)", self.first)
        if m:
            return int(np.random.default_rng(int(m.group(1))).integers(len(self.training)))
        raise GreedyConfigError(f"unknown first-parameter rule {self.first!r}")


@dataclass
class GreedyHistory:
    N: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    index: list = field(default_factory=list)
    max_delta: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    converged: bool = False
    exact_space: bool = False

    def __len__(self):
        return len(self.N)

    def to_json(self, include_times=False):
        out = {"N": self.N, "mu": self.mu, "index": self.index, "max_delta": self.max_delta,
               "skipped": self.skipped, "converged": self.converged,
               "exact_space": self.exact_space}
        if self.estimates:
            out["estimates"] = self.estimates
        if include_times:
            out["wall_time"] = self.wall_time
        return out

    @classmethod
    def from_json(cls, obj):
        h = cls()
        for k in ("N", "mu", "index", "max_delta", "skipped", "estimates", "wall_time"):
            setattr(h, k, list(obj.get(k, [])))
        h.converged = bool(obj.get("converged", False))
        h.exact_space = bool(obj.get("exact_space", False))
        return h


def greedy_build(config, decomp, X_gram, pdomain, coercivity, log=None):
    """Run the greedy loop; returns ``(space, model, history)``.

    Each iteration truth-solves at the selected parameter, orthonormalizes,
    updates the projections and residual data incrementally and evaluates
    the estimator over the training set. Ties go to the lowest index.
    """
    xi = config.training
    space = RBSpace(X_gram)
    model = ReducedModel(decomp.thetas, decomp.rhs_thetas, pdomain)
    model.coercivity = coercivity
    builder = ResidualBuilder(decomp, X_gram)
    history = GreedyHistory()
    alpha = coercivity.lower_bounds(xi)
    blocked = np.zeros(len(xi), dtype=bool)
    deltas = None
    idx = config.first_index(pdomain)
    t0 = time.perf_counter()
    while True:
        mu = xi[idx]
        u = truth_solve(decomp, mu)
        blocked[idx] = True
        if not space.append(u, mu):
            history.skipped.append(int(idx))
            if log:
                log(f"snapshot at index {idx} is collinear; skipped")
            cand = np.where(blocked, -np.inf, deltas if deltas is not None else 0.0)
            if np.all(np.isinf(cand)):
                history.exact_space = True
                break
            idx = int(np.argmax(cand))
            continue
        model.append_basis(space, decomp)
        builder.append(space.Z[:, -1])
        model.residual = builder.data()

        coeffs, th, thf = model.solve_many(xi)
        rnorm = model.residual.dual_norm_from_thetas(th, thf, coeffs)
        deltas = error_estimator(rnorm, alpha, config.estimator)
        if config.normalize == "output":
            s_N = np.einsum("mq,qn,mn->m", thf, model.f_N, coeffs)
            deltas = error_estimator(rnorm, alpha, "energy") ** 2 / np.abs(s_N)
        worst = float(np.max(deltas))
        history.N.append(space.N)
        history.mu.append([float(m) for m in mu])
        history.index.append(int(idx))
        history.max_delta.append(worst)
        history.wall_time.append(time.perf_counter() - t0)
        if config.keep_estimates:
            history.estimates.append(deltas.tolist())
        if log:
            log(f"N={space.N:3d}  max Delta={worst:.3e}  mu={np.round(mu, 6).tolist()}")
        if worst <= config.tol:
            history.converged = True
            break
        if space.N >= config.n_max:
            break
        cand = np.where(blocked, -np.inf, deltas)
        if np.all(np.isinf(cand)):
            history.exact_space = True
            break
        idx = int(np.argmax(cand))
    model.history = history
    model.converged = history.converged
    return space, model, history


def convergence_report(history, fmt="csv"):
    """``(N, max_delta, mu...)`` rows as CSV text or a list of dicts."""
    rows = [{"N": n, "max_delta": d, "mu": list(m)}
            for n, d, m in zip(history.N, history.max_delta, history.mu)]
    if fmt == "json":
        return rows
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    P = len(history.mu[0]) if history.mu else 0
    w.writerow(["N", "max_delta"] + [f"mu{i + 1}" for i in range(P)])
    for r in rows:
        w.writerow([r["N"], repr(r["max_delta"])] + [repr(m) for m in r["mu"]])
    return buf.getvalue()
