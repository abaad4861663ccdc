import numpy as np
import pytest
import scipy.sparse as sp

from chds import (SingularMatrixError, SolverFailure, build_crossed_mesh,
                  function_space, interpolate, solve_constrained_poisson,
                  solve_indefinite, solve_spd, uniform_refine)
from chds.fem import FeFunction, fe_norm, load_vector
from chds.operators import DarcyStokesSolver  # noqa: F401
from chds.scheme import build_spaces


def test_spd_identity():
    A = sp.eye(7, format="csr")
    b = np.arange(7.0)
    x, report = solve_spd(A, b)
    assert np.allclose(x, b)
    assert report.residual <= 1e-12


def test_spd_mass_constant(p1_n8):
    M = p1_n8.mass_matrix()
    ones = np.ones(p1_n8.dof_count)
    x, report = solve_spd(M, M @ ones, tol=1e-12)
    assert np.abs(x - 1.0).max() <= 1e-10
    assert report.residual <= 1e-12


def test_spd_small_vs_dense_oracle(rng):
    R = rng.standard_normal((5, 5))
    A = R.T @ R + np.eye(5)
    b = rng.standard_normal(5)
    expected = np.linalg.solve(A, b)  # dense Gaussian elimination oracle
    x, _ = solve_spd(sp.csr_matrix(A), b, tol=1e-14)
    assert np.abs(x - expected).max() <= 1e-10


def test_spd_large_uses_cg_and_converges():
    mesh = build_crossed_mesh((0.0, 1.0, 0.0, 1.0), 24)
    p1 = function_space(mesh, "p1")
    assert p1.dof_count > 600  # force the iterative path
    A = p1.mass_matrix() + p1.stiffness_matrix()
    rng = np.random.default_rng(3)
    b = rng.standard_normal(p1.dof_count)
    x, report = solve_spd(A, b, tol=1e-12)
    assert report.method == "cg"
    assert report.iterations > 0
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-11


def test_spd_failure_reports_residual():
    # indefinite diagonal makes CG break down; the failure carries a report
    n = 700
    d = np.ones(n)
    d[::2] = -1.0
    A = sp.diags(d).tocsr()
    b = np.ones(n)
    with pytest.raises(SolverFailure) as err:
        solve_spd(A, b, tol=1e-16)
    assert "diagonal" in str(err.value) or err.value.report is not None


def test_indefinite_swap():
    A = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    x, report = solve_indefinite(A, np.array([1.0, 2.0]))
    assert np.allclose(x, [2.0, 1.0])
    assert report.residual <= 1e-14


def test_indefinite_stokes_block_vs_dense_oracle(rng):
    mesh = build_crossed_mesh((0.0, 1.0, 0.0, 1.0), 4)
    spaces = build_spaces(mesh)
    # the same saddle matrix DarcyStokesSolver factorizes
    import chds.fem as fem
    free = spaces.velocity.free_dofs
    A = (spaces.velocity.stiffness_matrix()
         + spaces.velocity.mass_matrix())[free][:, free]
    D = fem.assemble_matrix("divergence", spaces.velocity,
                            spaces.ring)[:, free]
    m = spaces.ring.mass_of_constants()
    mcol = sp.csc_matrix(m.reshape(-1, 1))
    S = sp.bmat([[A, -D.T, None], [D, None, mcol], [None, mcol.T, None]],
                format="csc")
    b = rng.standard_normal(S.shape[0])
    x, _ = solve_indefinite(S, b)
    dense = np.linalg.solve(S.toarray(), b)
    assert np.abs(x - dense).max() <= 1e-10 * max(1.0, np.abs(dense).max())


def test_singular_matrix_reports_structured_error():
    A = sp.csr_matrix(np.array([[1.0, 2.0, 3.0],
                                [2.0, 4.0, 6.0],
                                [0.0, 1.0, 1.0]]))  # row 2 = 2 * row 1
    with pytest.raises(SingularMatrixError):
        solve_indefinite(A, np.ones(3))


def test_constrained_poisson_zero_rhs(p1_n8):
    K = p1_n8.stiffness_matrix()
    m = p1_n8.mass_of_constants()
    x = solve_constrained_poisson(K, np.zeros(p1_n8.dof_count), m)
    assert np.abs(x).max() <= 1e-14


def test_constrained_poisson_neumann_eigenfunction():
    # -u'' = zeta with zeta = cos(pi x): solution cos(pi x)/pi^2, H1 error
    # first order in h
    errors = []
    mesh = build_crossed_mesh((0.0, 1.0, 0.0, 1.0), 8)
    for _ in range(2):
        p1 = function_space(mesh, "p1")
        K = p1.stiffness_matrix()
        m = p1.mass_of_constants()
        b = load_vector(p1, lambda x, y: np.cos(np.pi * x))
        b -= m * (b.sum() / m.sum())  # strip the tiny quadrature-level mean
        x = solve_constrained_poisson(K, b, m, tol=1e-8)
        assert abs(float(m @ x)) <= 1e-12  # zero mean
        exact = interpolate(p1, lambda x_, y_: np.cos(np.pi * x_) / np.pi ** 2)
        err = FeFunction(p1, x - exact.coefficients)
        errors.append(fe_norm(err, "H1"))
        mesh = uniform_refine(mesh)
    rate = np.log2(errors[0] / errors[1])
    assert 0.7 <= rate <= 1.6


def test_constrained_poisson_rejects_inconsistent_rhs(p1_n8):
    K = p1_n8.stiffness_matrix()
    m = p1_n8.mass_of_constants()
    b = np.ones(p1_n8.dof_count)  # strongly nonzero sum
    with pytest.raises(SolverFailure):
        solve_constrained_poisson(K, b, m, tol=1e-10)


def test_constrained_poisson_linearity(p1_n8, rng):
    K = p1_n8.stiffness_matrix()
    M = p1_n8.mass_matrix()
    m = p1_n8.mass_of_constants()

    def zero_mean(v):
        # subtract the constant function (coefficient vector of ones)
        return v - float(m @ v) / float(m.sum())

    z1 = zero_mean(rng.standard_normal(p1_n8.dof_count))
    z2 = zero_mean(rng.standard_normal(p1_n8.dof_count))
    a, b = 0.7, -1.3
    lhs = solve_constrained_poisson(K, M @ (a * z1 + b * z2), m)
    rhs = (a * np.asarray(solve_constrained_poisson(K, M @ z1, m))
           + b * np.asarray(solve_constrained_poisson(K, M @ z2, m)))
    assert np.abs(lhs - rhs).max() <= 1e-11
