"""Small hand-built problems used as oracles across the test modules."""
import numpy as np

from rbiga import assembly as asm
from rbiga.geometry import AffineParamMap, ParameterDomain, glue_patches
from rbiga.nurbs import NurbsPatch, elevate_patch, h_refine_uniform
from rbiga.splines import KnotVector

SIDES = [(0, "u0"), (0, "u1"), (0, "v0"), (0, "v1")]


def unit_square_patch(p, nel):
    kv = KnotVector.uniform(1, 1)
    pts = np.stack(np.meshgrid([0.0, 1.0], [0.0, 1.0], indexing="ij"), axis=-1)
    patch = NurbsPatch.from_points([kv, kv], pts)
    return h_refine_uniform(elevate_patch(patch, [p, p]), nel)


def square_problem(p, nel, source=None, theta="1", dirichlet=True, reaction="0"):
    """``-theta * Laplace(u) + reaction * u = f`` on the unit square.

    Returns ``(domain, amap, problem, pdomain)``; one parameter ``mu1`` in [1, 4].
    """
    domain = glue_patches([unit_square_patch(p, nel)], boundary_tags={"wall": SIDES})
    coeff = [[theta, "0", "0"], ["0", theta, "0"], ["0", "0", reaction]]
    src = [("1", source)] if source is not None else [("0", None)]
    bcs = {"wall": ("dirichlet", 0.0)} if dirichlet else {}
    problem = asm.ProblemDefinition([coeff], [src], bcs)
    return domain, AffineParamMap.identity(1, 2), problem, ParameterDomain([[1, 4]], [1])


def sinsin_source(x):
    return 2 * np.pi ** 2 * np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])


def sinsin_exact(x):
    return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])


def manufactured_l2(p, nel):
    domain, amap, problem, pdom = square_problem(p, nel, sinsin_source)
    dec = asm.apply_dirichlet(asm.assemble_affine_decomposition(domain, amap, problem, pdom),
                              asm.dirichlet_dofs(domain, problem))
    u = asm.truth_solve(dec, [1.0])
    return asm.l2_error(domain, dec.expand(u), sinsin_exact)


def observed_rates(p, nels):
    errs = [manufactured_l2(p, n) for n in nels]
    return [np.log2(a / b) for a, b in zip(errs[:-1], errs[1:])], errs


def relative_frobenius(a, b):
    d = (a - b).tocsr()
    return np.sqrt((d.multiply(d)).sum()) / np.sqrt((b.multiply(b)).sum())
