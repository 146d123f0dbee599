"""A loaded case: geometry, problem, truth decomposition and offline/online helpers."""
import numpy as np

from . import assembly as asm
from . import io as rio
from . import presets
from .certification import MinThetaCoercivity, ResidualData, SCMCoercivity, scm_train
from .geometry import (ParameterDomain, check_interface_continuity, evaluate_map,
                       transform_control_points)
from .nurbs import grid_points
from .greedy import GreedyConfig, GreedyHistory, greedy_build, sample_training_set
from .reduction import ReducedModel


class Case:
    """Everything needed for truth solves on one discretization."""

    def __init__(self, geometry, problem, level_subdivisions=None, name=None):
        self.name = name
        self.geometry_json = rio.load_json(geometry)
        self.problem_json = rio.load_json(problem)
        self.domain, self.amap, self.pdomain = rio.load_geometry(self.geometry_json,
                                                                 level_subdivisions)
        self.problem = rio.load_problem(self.problem_json, self.domain.n_patches,
                                        self.pdomain.P)
        rio.check_tags(self.domain, self.problem)
        self._quads = None
        self._full = None
        self._decomp = None
        self._X = None

    @classmethod
    def preset(cls, name, level=None):
        g, p = presets.get_preset(name, level)
        return cls(g, p, name=name)

    @property
    def quads(self):
        if self._quads is None:
            self._quads = [asm.patch_quadrature(p, g)
                           for p, g in zip(self.domain.patches, self.domain.glue)]
        return self._quads

    @property
    def full_decomposition(self):
        if self._full is None:
            self._full = asm.assemble_affine_decomposition(
                self.domain, self.amap, self.problem, self.pdomain, quads=self.quads)
        return self._full

    @property
    def decomposition(self):
        """Decomposition restricted to the free (non-Dirichlet) DOFs."""
        if self._decomp is None:
            self._decomp = asm.apply_dirichlet(self.full_decomposition,
                                               asm.dirichlet_dofs(self.domain, self.problem))
        return self._decomp

    @property
    def X(self):
        if self._X is None:
            self._X = asm.build_x_gram(self.decomposition, self.pdomain.mu_ref)
        return self._X

    @property
    def n_dofs(self):
        return self.domain.n_dofs

    def validate(self, n_samples=10, seed=0):
        """Structural and sampled checks; returns a JSON-ready report."""
        samples = self.pdomain.sample(n_samples, seed)
        report = {"patches": self.domain.n_patches, "dofs": self.domain.n_dofs,
                  "parameters": self.pdomain.P}
        viol = check_interface_continuity(self.domain, self.amap, samples)
        report["interface_violations"] = viol
        self.problem.check_psd(samples)
        for k in range(self.amap.n_patches):
            for mu in samples:
                evaluate_map(self.amap, k, mu)
        d = self.decomposition
        report["Q"] = d.Q
        report["Q_f"] = d.Q_f
        report["free_dofs"] = d.size
        report["thetas"] = [str(t) for t in d.thetas]
        report["rhs_thetas"] = [str(t) for t in d.rhs_thetas]
        report["ok"] = not viol
        return report

    def truth(self, mu):
        mu = self.pdomain.check(mu)
        u = asm.truth_solve(self.decomposition, mu)
        return u, asm.evaluate_output(u, self.decomposition, mu)

    def field(self, u_free):
        return self.decomposition.expand(u_free)

    def sample_field(self, u_free, mu, n=5):
        """Field on an ``n``-point tensor grid per patch of the deformed domain.

        Returns an array of rows ``(patch, xi_1..xi_d, x_1..x_d, u)``.
        """
        mu = self.pdomain.check(mu)
        u_full = self.field(u_free)
        deformed = transform_control_points(self.domain, self.amap, mu)
        rows = []
        for k, patch in enumerate(deformed.patches):
            params, phys = grid_points(patch, [np.linspace(0.0, 1.0, n)] * patch.param_dim)
            vals = asm.evaluate_field(self.domain, u_full, k, params)
            rows.append(np.column_stack([np.full(len(params), k), params, phys, vals]))
        return np.vstack(rows)

    def energy_norm(self, v, mu):
        return float(np.sqrt(max(v @ (self.decomposition.matrix(mu) @ v), 0.0)))

    def coercivity_model(self, strategy="mintheta", training=None):
        """``"mintheta"`` or ``"scm:eps"`` (training set required for SCM)."""
        if strategy == "mintheta":
            return MinThetaCoercivity.build(self.decomposition, self.pdomain)
        if strategy.startswith("scm"):
            eps = float(strategy.split(":", 1)[1]) if ":" in strategy else 0.75
            return scm_train(self.decomposition, self.X, training, eps=eps)
        raise ValueError(f"unknown coercivity strategy {strategy!r}")

    def offline(self, train="lattice=5x5x5", tol=1e-6, n_max=50, first="centroid",
                estimator="energy", coercivity="mintheta", log=None, keep_estimates=False,
                normalize="none"):
        xi = sample_training_set(self.pdomain, train)
        cfg = GreedyConfig(xi, tol=tol, n_max=n_max, first=first, estimator=estimator,
                           keep_estimates=keep_estimates, normalize=normalize)
        coer = self.coercivity_model(coercivity, xi)
        space, model, history = greedy_build(cfg, self.decomposition, self.X, self.pdomain,
                                             coer, log=log)
        model.estimator = estimator
        return space, model, history


# -- archive round trip ---------------------------------------------------------------

def save_model(path, model, extra_metadata=None, space=None, decomp=None):
    """Write ``model`` to a deterministic archive.

    When ``space`` and ``decomp`` are given the basis and the free-DOF map are
    stored too, so fields can be reconstructed; online queries never read them.
    """
    meta = {"format": "rbiga-reduced-model", "version": 1,
            "Q": model.Q, "Q_f": model.Q_f, "N": model.N, "P": model.pdomain.P,
            "mu_ref": model.pdomain.mu_ref.tolist(),
            "bounds": model.pdomain.bounds.tolist(),
            "thetas": [str(t) for t in model.thetas],
            "rhs_thetas": [str(t) for t in model.rhs_thetas],
            "samples": [np.asarray(s).tolist() for s in model.samples],
            "converged": bool(model.converged),
            "estimator": getattr(model, "estimator", "energy"),
            "coercivity": model.coercivity.metadata()}
    if extra_metadata:
        meta.update(extra_metadata)
    arrays = model.arrays()
    if space is not None and decomp is not None:
        arrays["basis/Z"] = space.Z
        arrays["basis/free"] = np.asarray(decomp.free, dtype=float)
        meta["n_dofs"] = int(decomp.n_dofs)
    rio.write_archive(path, meta, arrays, model.history.to_json()
                     if hasattr(model.history, "to_json") else {})


def load_model(path):
    meta, arrays, history = rio.read_archive(path)
    pdom = ParameterDomain(meta["bounds"], meta["mu_ref"])
    model = ReducedModel(meta["thetas"], meta["rhs_thetas"], pdom,
                         arrays["A_N"], arrays["f_N"])
    model.residual = ResidualData(arrays["residual/coef_f"], arrays["residual/coef_a"])
    cm = meta["coercivity"]
    if cm["strategy"] == "mintheta":
        model.coercivity = MinThetaCoercivity(meta["thetas"], cm["mu_ref"])
    else:
        model.coercivity = SCMCoercivity(meta["thetas"], arrays["coercivity/box"],
                                         arrays["coercivity/samples"],
                                         arrays["coercivity/alphas"],
                                         arrays["coercivity/yvecs"], M=cm["M"],
                                         eps=cm["eps"], converged=cm["converged"])
    model.samples = [np.asarray(s) for s in meta["samples"]]
    model.history = GreedyHistory.from_json(history)
    model.converged = meta["converged"]
    model.estimator = meta.get("estimator", "energy")
    model.metadata = meta
    model.basis = arrays.get("basis/Z")
    model.basis_free = arrays.get("basis/free")
    return model
