"""Sparse solvers for the three algebraic problem classes of the scheme:
SPD systems, symmetric-indefinite saddle systems, and mean-zero-constrained
Neumann-Poisson systems."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _umfpack

__all__ = [
    "SolveReport", "SolverFailure", "SingularMatrixError",
    "solve_spd", "solve_indefinite", "solve_constrained_poisson", "sparse_lu",
]

DIRECT_THRESHOLD = 600  # below this dimension, SPD solves go straight to LU


class _SuperLUAdapter:
    """splu wrapped to the same .solve/.refactor surface as UmfpackLU."""

    def __init__(self, A, permc_spec):
        self._permc = permc_spec
        A = sp.csc_matrix(A)
        self.shape = A.shape
        self._lu = spla.splu(A, permc_spec=permc_spec)
        self.nnz = A.nnz

    def solve(self, b, transposed=False):
        return self._lu.solve(np.asarray(b, dtype=float),
                              trans="T" if transposed else "N")

    def refactor(self, A):
        A = sp.csc_matrix(A)
        self._lu = spla.splu(A, permc_spec=self._permc)


def sparse_lu(A, permc_spec="COLAMD", strategy=None, refine=True):
    """Direct LU factorization handle with .solve(b) and .refactor(A).

    Uses the system UMFPACK when importable (much faster factorization and
    numeric-only refactorization for fixed sparsity patterns); otherwise
    SuperLU with the given ordering.  ``strategy='symmetric'`` requests the
    symmetric-pattern ordering (essential for saddle-point systems, where
    unsymmetric column orderings fill catastrophically).
    """
    if _umfpack.available():
        try:
            return _umfpack.UmfpackLU(A, strategy=strategy, refine=refine)
        except RuntimeError as exc:
            raise SingularMatrixError(
                f"sparse factorization failed: {exc}",
                pivot_row=_locate_zero_pivot(sp.csc_matrix(A))) from exc
    if strategy == "symmetric":
        permc_spec = "MMD_AT_PLUS_A"
    return _SuperLUAdapter(A, permc_spec)


@dataclass
class SolveReport:
    iterations: int
    residual: float
    method: str


class SolverFailure(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SingularMatrixError(SolverFailure):
    def __init__(self, message, pivot_row=None):
        super().__init__(message)
        self.pivot_row = pivot_row


def _rel_residual(A, x, b):
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return float(np.linalg.norm(A @ x))
    return float(np.linalg.norm(A @ x - b) / nb)


def solve_spd(A, b, tol=1e-12):
    """Solve a symmetric positive definite system.

    Conjugate gradients with Jacobi preconditioning, falling back to a
    direct factorization for small systems.  Raises SolverFailure with the
    achieved residual if CG does not converge within 10*dim iterations.
    """
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if n <= DIRECT_THRESHOLD:
        x = sparse_lu(A).solve(b)
        return x, SolveReport(1, _rel_residual(A, x, b), "lu")

    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverFailure("non-positive diagonal entry in SPD solve")
    precond = spla.LinearOperator(A.shape, lambda v: v / diag)
    count = [0]

    def cb(_):
        count[0] += 1

    maxiter = 10 * n
    x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=maxiter, M=precond,
                      callback=cb)
    res = _rel_residual(A, x, b)
    report = SolveReport(count[0], res, "cg")
    if info != 0 and res > tol:
        raise SolverFailure(
            f"CG did not converge in {maxiter} iterations "
            f"(residual {res:.3e})", report)
    return x, report


def _locate_zero_pivot(A):
    # best effort, only for small systems: dense LU pivot scan
    n = A.shape[0]
    if n > 2000:
        return None
    import scipy.linalg as dla
    dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    _, _, u = dla.lu(dense)
    piv = np.abs(np.diag(u))
    scale = piv.max() if piv.size else 0.0
    bad = np.nonzero(piv <= 1e-14 * max(scale, 1.0))[0]
    return int(bad[0]) if len(bad) else None


def solve_indefinite(A, b):
    """Direct sparse LU solve of a square nonsingular system."""
    b = np.asarray(b, dtype=float)
    A = sp.csc_matrix(A)
    try:
        lu = sparse_lu(A)
        x = lu.solve(b)
    except RuntimeError as exc:
        if isinstance(exc, SingularMatrixError):
            raise
        raise SingularMatrixError(
            f"sparse factorization failed: {exc}",
            pivot_row=_locate_zero_pivot(A)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("factorization produced non-finite values",
                                  pivot_row=_locate_zero_pivot(A))
    return x, SolveReport(1, _rel_residual(A, x, b), "sparse-lu")


def bordered_constraint_system(K, m):
    """The bordered matrix [[K, m], [m^T, 0]] as CSC."""
    m = np.asarray(m, dtype=float)
    col = sp.csc_matrix(m.reshape(-1, 1))
    return sp.bmat([[K, col], [col.T, None]], format="csc")


def solve_constrained_poisson(K, b, mass_vec, tol=1e-10, lu=None):
    """Zero-mean solution of the Neumann-Poisson system K x = b.

    The right side must be orthogonal to constants: sum(b) = (zeta, 1) = 0
    up to ``tol`` (relative to ||b||).  The zero-mean constraint
    ``mass_vec @ x = 0`` is imposed through a Lagrange multiplier row and
    column.  A prefactored ``lu`` of the bordered system may be supplied.
    """
    b = np.asarray(b, dtype=float)
    defect = abs(float(b.sum()))
    if defect > tol * max(1.0, float(np.linalg.norm(b))):
        raise SolverFailure(
            f"inconsistent right-hand side: constant component {defect:.3e}")
    if lu is None:
        lu = sparse_lu(bordered_constraint_system(K, mass_vec))
    rhs = np.concatenate([b, [0.0]])
    sol = lu.solve(rhs)
    return sol[:-1]
