import numpy as np
import pytest

from rbiga import assembly as asm
from rbiga.reduction import (RBSpace, ReducedModel, ReducedSolveError, online_output,
                             online_solve, project_operators, reconstruct)

def grow(case, mus):
    """Space and incrementally projected model from truth snapshots at ``mus``."""
    d = case.decomposition
    space = RBSpace(case.X)
    model = ReducedModel(d.thetas, d.rhs_thetas, case.pdomain)
    for mu in mus:
        if space.append(asm.truth_solve(d, mu), mu):
            model.append_basis(space, d)
    return space, model

def energy(case, v, mu):
    return case.energy_norm(v, mu)

@pytest.fixture(scope="module")
def grown(pipeline0):
    mus = pipeline0.pdomain.sample(8, 21)
    return (*grow(pipeline0, mus), mus)

def test_first_snapshot_normalized(pipeline0):
    u = asm.truth_solve(pipeline0.decomposition, [2.0, 2.0, 2.0])
    space = RBSpace(pipeline0.X)
    assert space.append(u)
    xn = np.sqrt(u @ (pipeline0.X @ u))
    np.testing.assert_allclose(space.Z[:, 0], u / xn, rtol=1e-13)

def test_duplicate_snapshot_rejected(pipeline0):
    u = asm.truth_solve(pipeline0.decomposition, [2.0, 3.0, 2.0])
    space = RBSpace(pipeline0.X)
    assert space.append(u)
    assert not space.append(2.5 * u)
    assert not space.append(np.zeros_like(u))
    assert space.N == 1

def test_orthonormality_random_appends(pipeline0, rng):
    space = RBSpace(pipeline0.X)
    for _ in range(20):
        space.append(rng.normal(size=pipeline0.decomposition.size))
    assert space.N == 20
    assert space.orthonormality_error() < 1e-10

def test_incremental_equals_full_projection(pipeline0, grown):
    space, model, _ = grown
    full = project_operators(space, pipeline0.decomposition, pipeline0.pdomain)
    scale = np.abs(full.A_N).max()
    assert np.abs(model.A_N - full.A_N).max() < 1e-13 * scale
    np.testing.assert_allclose(model.f_N, full.f_N, rtol=0, atol=1e-13 * np.abs(full.f_N).max())

def test_one_vector_scalar_galerkin(pipeline0):
    d = pipeline0.decomposition
    space, model = grow(pipeline0, [[2.0, 2.0, 2.0]])
    z = space.Z[:, 0]
    for q, m in enumerate(d.matrices):
        assert model.A_N[q, 0, 0] == pytest.approx(z @ (m @ z), rel=1e-13)
    mu = np.array([4.0, 1.5, 3.0])
    u = online_solve(model, mu)
    expect = (d.rhs(mu) @ z) / (z @ (d.matrix(mu) @ z))
    assert u[0] == pytest.approx(expect, rel=1e-12)

def test_reduced_matrix_spd(pipeline0, grown):
    _, model, _ = grown
    for mu in pipeline0.pdomain.sample(10, 5):
        A = np.tensordot(model.theta(mu), model.A_N, axes=1)
        assert np.linalg.eigvalsh(A).min() > 0

def test_lagrange_reproduction(pipeline0, grown):
    space, model, mus = grown
    d = pipeline0.decomposition
    for mu in mus:
        u = asm.truth_solve(d, mu)
        uN = reconstruct(space, online_solve(model, mu))
        e = u - uN
        assert np.sqrt(e @ (pipeline0.X @ e)) < 1e-10 * np.sqrt(u @ (pipeline0.X @ u))
        s = asm.evaluate_output(u, d, mu)
        assert online_output(model, mu, online_solve(model, mu)) == pytest.approx(s, rel=1e-10)

def test_compliant_identity(pipeline0, grown):
    space, model, _ = grown
    d = pipeline0.decomposition
    for mu in pipeline0.pdomain.sample(10, 77):
        u = asm.truth_solve(d, mu)
        c = online_solve(model, mu)
        s, sN = asm.evaluate_output(u, d, mu), online_output(model, mu, c)
        e = energy(pipeline0, u - reconstruct(space, c), mu) ** 2
        assert abs(s - sN - e) <= 1e-10 * abs(s)
        assert s >= sN - 1e-12 * abs(s)

def test_galerkin_optimality(pipeline0, grown):
    space, model, _ = grown
    d = pipeline0.decomposition
    mu = np.array([1.3, 4.4, 2.2])
    u = asm.truth_solve(d, mu)
    err = energy(pipeline0, u - reconstruct(space, online_solve(model, mu)), mu)
    for n in range(min(5, space.N)):
        z = space.Z[:, n]
        # best multiple of a single basis vector cannot beat the Galerkin solution
        A = d.matrix(mu)
        v = z * (z @ (A @ u)) / (z @ (A @ z))
        assert err <= energy(pipeline0, u - v, mu) * (1 + 1e-12)

def test_error_monotone_in_N(pipeline0, grown):
    space, model, _ = grown
    d = pipeline0.decomposition
    for mu in pipeline0.pdomain.sample(3, 8):
        u = asm.truth_solve(d, mu)
        errs = [energy(pipeline0, u - reconstruct(space, online_solve(model, mu, N)), mu)
                for N in range(1, space.N + 1)]
        assert all(b <= a + 1e-12 * errs[0] for a, b in zip(errs[:-1], errs[1:]))

def test_reconstruct_properties(grown, pipeline0, rng):
    space, _, _ = grown
    np.testing.assert_array_equal(reconstruct(space, np.zeros(space.N)), 0.0)
    c = rng.normal(size=space.N)
    v = reconstruct(space, c)
    assert np.sqrt(v @ (pipeline0.X @ v)) == pytest.approx(np.linalg.norm(c), rel=1e-10)

def test_offline_online_consistency(pipeline0, grown):
    space, model, _ = grown
    d = pipeline0.decomposition
    mu = np.array([2.2, 3.3, 1.1])
    Z = space.Z
    A = Z.T @ (d.matrix(mu) @ Z)
    f = Z.T @ d.rhs(mu)
    s_fly = f @ np.linalg.solve(A, f)
    assert online_output(model, mu, online_solve(model, mu)) == pytest.approx(s_fly, rel=1e-12)

def test_solve_many_matches_single(pipeline0, grown):
    _, model, _ = grown
    mus = pipeline0.pdomain.sample(6, 3)
    batch, _, _ = model.solve_many(mus)
    for mu, c in zip(mus, batch):
        np.testing.assert_allclose(c, online_solve(model, mu), rtol=1e-10)

def test_empty_model_and_bad_mu(pipeline0):
    d = pipeline0.decomposition
    model = ReducedModel(d.thetas, d.rhs_thetas, pipeline0.pdomain)
    with pytest.raises(ReducedSolveError):
        online_solve(model, [1.0, 1.0, 1.0])
    from rbiga.geometry import ParameterDomainError
    with pytest.raises(ParameterDomainError):
        online_solve(model, [0.0, 1.0, 1.0])

def test_append_out_of_order(pipeline0, grown):
    space, _, _ = grown
    d = pipeline0.decomposition
    model = ReducedModel(d.thetas, d.rhs_thetas, pipeline0.pdomain)
    with pytest.raises(ValueError, match="one at a time"):
        model.append_basis(space, d)
