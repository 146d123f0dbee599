import numpy as np
import pytest

from rbiga import assembly as asm
from rbiga.certification import MinThetaCoercivity
from rbiga.greedy import (GreedyConfig, GreedyConfigError, GreedyHistory, convergence_report,
                          greedy_build, lattice, sample_training_set)

from helpers import square_problem


def test_lattice_training_set(pipeline0):
    xi = sample_training_set(pipeline0.pdomain, "lattice=3x3x3")
    assert xi.shape == (27, 3)
    rows = {tuple(r) for r in xi}
    assert (1.0, 1.0, 1.0) in rows and (5.0, 5.0, 5.0) in rows
    np.testing.assert_array_equal(xi[1], [3.0, 1.0, 1.0])     # first parameter fastest
    np.testing.assert_array_equal(lattice(pipeline0.pdomain, [2]), xi[[0, 2, 6, 8, 18, 20,
                                                                       24, 26]])


def test_random_training_set(pipeline0):
    a = sample_training_set(pipeline0.pdomain, "random:100,7")
    b = sample_training_set(pipeline0.pdomain, "random:100,7")
    np.testing.assert_array_equal(a, b)
    assert all(pipeline0.pdomain.contains(m) for m in a)


@pytest.mark.parametrize("spec", ["", "lattice=", "random:0,1", "grid=3", []])
def test_bad_training_specs(pipeline0, spec):
    with pytest.raises((GreedyConfigError, ValueError)):
        sample_training_set(pipeline0.pdomain, spec)


def test_bad_config():
    with pytest.raises(GreedyConfigError):
        GreedyConfig(np.ones((2, 1)), tol=0.0)
    with pytest.raises(GreedyConfigError):
        GreedyConfig(np.ones((2, 1)), n_max=0)
    with pytest.raises(GreedyConfigError):
        GreedyConfig(np.ones((2, 1)), estimator="l2")
    with pytest.raises(GreedyConfigError):
        GreedyConfig(np.ones((2, 1)), normalize="state")


def test_one_dimensional_manifold_needs_one_vector():
    domain, amap, problem, pdom = square_problem(2, 4, source=lambda x: 1 + x[..., 1],
                                                 theta="mu1")
    d = asm.apply_dirichlet(asm.assemble_affine_decomposition(domain, amap, problem, pdom),
                            asm.dirichlet_dofs(domain, problem))
    X = asm.build_x_gram(d, pdom.mu_ref)
    cfg = GreedyConfig(np.linspace(1, 4, 11)[:, None], tol=1e-6, n_max=10)
    space, model, hist = greedy_build(cfg, d, X, pdom, MinThetaCoercivity.build(d, pdom))
    assert space.N == 1 and hist.converged
    assert hist.max_delta[-1] < 1e-9


def test_pipeline_history(pipeline_model, pipeline0):
    space, model, hist = pipeline_model
    assert hist.converged and hist.max_delta[-1] <= 1e-6
    assert len(hist) == space.N == model.N
    xi = sample_training_set(pipeline0.pdomain, "lattice=4x4x4")
    assert len(set(hist.index)) == len(hist.index)
    for i, mu in zip(hist.index, hist.mu):
        np.testing.assert_array_equal(xi[i], mu)
    # first parameter is the training point nearest the centroid (lowest index on ties)
    d = np.linalg.norm(xi - pipeline0.pdomain.centroid, axis=1)
    assert hist.index[0] == int(np.argmin(d))


def test_deterministic(pipeline0, pipeline_model):
    _, _, h1 = pipeline_model
    _, _, h2 = pipeline0.offline(train="lattice=4x4x4", tol=1e-6, n_max=30)
    assert h1.to_json() == h2.to_json()


def test_nmax_cap_flags_not_converged(pipeline0):
    _, model, hist = pipeline0.offline(train="lattice=3x3x3", tol=1e-12, n_max=2)
    assert model.N == 2 and not hist.converged
    _, model, hist = pipeline0.offline(train="lattice=3x3x3", tol=1e-12, n_max=1)
    assert len(hist) == 1


def test_random_first_parameter(pipeline0):
    _, _, h = pipeline0.offline(train="lattice=3x3x3", n_max=3, first="random:4")
    cfg = GreedyConfig(sample_training_set(pipeline0.pdomain, "lattice=3x3x3"),
                       first="random:4")
    assert h.index[0] == cfg.first_index(pipeline0.pdomain)
    with pytest.raises(GreedyConfigError):
        GreedyConfig(np.ones((1, 3)), first="median").first_index(pipeline0.pdomain)


def test_exact_space_when_training_exhausted():
    domain, amap, problem, pdom = square_problem(2, 2, source=lambda x: 1 + x[..., 0],
                                                 theta="mu1")
    d = asm.apply_dirichlet(asm.assemble_affine_decomposition(domain, amap, problem, pdom),
                            asm.dirichlet_dofs(domain, problem))
    X = asm.build_x_gram(d, pdom.mu_ref)
    # every snapshot is collinear with the first; a tiny tol forces further picks
    cfg = GreedyConfig(np.array([[1.0], [2.0], [3.0]]), tol=1e-300, n_max=5)
    space, _, hist = greedy_build(cfg, d, X, pdom, MinThetaCoercivity.build(d, pdom))
    assert space.N == 1
    assert hist.exact_space and sorted(hist.skipped) == [0, 2]


def test_normalized_output_criterion(pipeline0):
    _, model, hist = pipeline0.offline(train="lattice=3x3x3", tol=1e-6, n_max=30,
                                       normalize="output")
    assert hist.converged
    xi = sample_training_set(pipeline0.pdomain, "lattice=3x3x3")
    for mu in xi:
        q = model.query(mu)
        assert q["delta"] ** 2 / q["s_N"] <= 1e-6 * (1 + 1e-9)


def test_estimates_kept_and_true_error_monotone(pipeline0):
    space, model, hist = pipeline0.offline(train="lattice=3x3x3", n_max=8,
                                           keep_estimates=True)
    assert len(hist.estimates) == len(hist) and len(hist.estimates[0]) == 27
    d = pipeline0.decomposition
    for mu in pipeline0.pdomain.sample(5, 13):
        u = asm.truth_solve(d, mu)
        errs = [pipeline0.energy_norm(u - space.Z[:, :N] @ model.solve(mu, N), mu)
                for N in range(1, space.N + 1)]
        assert all(b <= a + 1e-12 * errs[0] for a, b in zip(errs[:-1], errs[1:]))


def test_convergence_report(pipeline_model):
    _, _, hist = pipeline_model
    text = convergence_report(hist)
    lines = text.strip().splitlines()
    assert lines[0] == "N,max_delta,mu1,mu2,mu3"
    assert len(lines) - 1 == hist.N[-1]
    assert float(lines[-1].split(",")[1]) <= 1e-6
    assert convergence_report(GreedyHistory()) == "N,max_delta\n"
    assert convergence_report(hist, "json")[0]["N"] == 1


def test_history_json_round_trip(pipeline_model):
    _, _, hist = pipeline_model
    again = GreedyHistory.from_json(hist.to_json(include_times=True))
    assert again.to_json() == hist.to_json()
    assert "wall_time" not in hist.to_json()
