"""Discrete operators: the inverse Laplacian T_h and its negative norm, the
discrete Laplacian, Ritz/L2/Darcy-Stokes projections, and the flow-coupled
bilinear form used by the solvability argument."""

import weakref

import numpy as np
import scipy.sparse as sp

from . import fem
from .fem import FeFunction, FemError, fe_norm, function_space, load_vector
from .linalg import (SolveReport, SolverFailure, bordered_constraint_system,
                     solve_spd, sparse_lu)

__all__ = [
    "NegNormWorkspace", "workspace_for", "apply_Th", "neg_norm", "neg_inner",
    "discrete_laplacian", "ritz_projection", "l2_projection",
    "darcy_stokes_projection", "DarcyStokesSolver", "ell_form",
]

MEAN_TOL = 1e-10


class NegNormWorkspace:
    """P1 mass/stiffness and the factorized bordered Neumann system for one
    mesh; built once and reused across T_h applications."""

    def __init__(self, space):
        if space.family != "p1":
            raise FemError("the negative norm lives on the P1 space")
        self.space = space
        self.mass = space.mass_matrix()
        self.stiffness = space.stiffness_matrix()
        self.mass_vec = space.mass_of_constants()
        self.area = space.mesh.area()
        self.lu = sparse_lu(
            bordered_constraint_system(self.stiffness, self.mass_vec))

    def solve(self, load):
        """Zero-mean x with a(x, chi) = load . chi for all chi."""
        sol = self.lu.solve(np.concatenate([load, [0.0]]))
        return sol[:-1]


_workspaces = weakref.WeakKeyDictionary()


def workspace_for(space):
    ws = _workspaces.get(space)
    if ws is None:
        ws = NegNormWorkspace(space)
        _workspaces[space] = ws
    return ws


def _require_zero_mean(zeta, ws, what="input"):
    mean = float(ws.mass_vec @ zeta.coefficients) / ws.area
    if abs(mean) > MEAN_TOL * max(1.0, fe_norm(zeta, "L2")):
        raise FemError(f"{what} must have zero mean, measured mean {mean:.3e}")


def apply_Th(zeta, workspace=None):
    """The discrete inverse Laplacian: the zero-mean P1 function with
    a(T_h zeta, chi) = (zeta, chi) for every zero-mean chi."""
    ws = workspace or workspace_for(zeta.space)
    _require_zero_mean(zeta, ws)
    load = ws.mass @ zeta.coefficients
    return FeFunction(zeta.space, ws.solve(load))


def neg_inner(z1, z2, workspace=None):
    """(z1, z2)_{-1,h} = a(T_h z1, T_h z2) = (z1, T_h z2)."""
    ws = workspace or workspace_for(z1.space)
    t2 = apply_Th(z2, ws)
    return float((ws.mass @ z1.coefficients) @ t2.coefficients)


def neg_norm(zeta, workspace=None):
    """||zeta||_{-1,h} = sqrt((zeta, T_h zeta)); equals the supremum of
    (zeta, chi)/||grad chi|| over zero-mean chi."""
    ws = workspace or workspace_for(zeta.space)
    t = apply_Th(zeta, ws)
    val = float((ws.mass @ zeta.coefficients) @ t.coefficients)
    return float(np.sqrt(max(val, 0.0)))


def discrete_laplacian(v):
    """The zero-mean P1 function with (Lap_h v, chi) = -a(v, chi) for all chi;
    one mass-matrix solve."""
    space = v.space
    rhs = -(space.stiffness_matrix() @ v.coefficients)
    x, _ = solve_spd(space.mass_matrix(), rhs, tol=1e-13)
    return FeFunction(space, x)


def ritz_projection(f, space):
    """Energy projection with matched mean: a(R_h f - f, chi) = 0 for all chi
    and (R_h f - f, 1) = 0.

    ``f`` is a ScalarField whose gradient feeds the right side; the mean
    constraint rides on the Lagrange multiplier of the bordered system.
    """
    if f.gradient is None:
        raise FemError("ritz_projection needs the gradient of f")
    xq, wdet = fem.quad_points(space.mesh)
    gf = np.asarray(f.gradient(xq[..., 0], xq[..., 1]), dtype=float)
    g = fem._phys_grads(space.mesh, space.family)
    local = np.einsum("tq,tqd,tqld->tl", wdet, gf, g)
    b = np.bincount(space.cell_dofs.ravel(), weights=local.ravel(),
                    minlength=space.dof_count)

    fq = np.asarray(f.value(xq[..., 0], xq[..., 1]), dtype=float)
    mean_f = float((wdet * fq).sum())

    ws = workspace_for(space)
    sol = ws.lu.solve(np.concatenate([b, [mean_f]]))
    return FeFunction(space, sol[:-1])


def l2_projection(f, space):
    """Mass-matrix solve for the L2-best approximation of a callable."""
    value = f.value if isinstance(f, fem.ScalarField) else f
    b = load_vector(space, value)
    x, _ = solve_spd(space.mass_matrix(), b, tol=1e-13)
    return FeFunction(space, x)


class DarcyStokesSolver:
    """Factorized Taylor-Hood saddle-point system
    ``coef_a * a(u,v) + coef_m * (u,v) - c(v,p) = F(v)``, ``c(u,q) = 0``
    with no-slip velocity (boundary dofs eliminated) and zero-mean pressure
    (Lagrange multiplier row/column)."""

    def __init__(self, vel_space, p_space, coef_a, coef_m):
        if vel_space.family != "p2v" or p_space.family == "p2v":
            raise FemError("expected a p2v velocity and scalar pressure space")
        self.vel_space = vel_space
        self.p_space = p_space
        self.coef_a = float(coef_a)
        self.coef_m = float(coef_m)
        self.free = vel_space.free_dofs
        A = (coef_a * vel_space.stiffness_matrix()
             + coef_m * vel_space.mass_matrix())
        D = fem.assemble_matrix("divergence", vel_space, p_space)
        self.div_full = D
        A_ff = A[self.free][:, self.free]
        D_f = D[:, self.free]
        m = p_space.mass_of_constants()
        mcol = sp.csc_matrix(m.reshape(-1, 1))
        S = sp.bmat([
            [A_ff, -D_f.T, None],
            [D_f, None, mcol],
            [None, mcol.T, None],
        ], format="csc")
        self.n_u = len(self.free)
        self.n_p = p_space.dof_count
        self.lu = sparse_lu(S, strategy="symmetric", refine=False)

    def solve(self, f_vel, g_p=None):
        """Solve for (u, p); ``f_vel`` is the full-length velocity load."""
        rhs = np.zeros(self.n_u + self.n_p + 1)
        rhs[:self.n_u] = f_vel[self.free]
        if g_p is not None:
            rhs[self.n_u:self.n_u + self.n_p] = g_p
        sol = self.lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise SolverFailure("flow saddle solve produced non-finite values",
                                SolveReport(1, np.inf, "sparse-lu"))
        u = np.zeros(self.vel_space.dof_count)
        u[self.free] = sol[:self.n_u]
        p = sol[self.n_u:self.n_u + self.n_p]
        return (FeFunction(self.vel_space, u),
                FeFunction(self.p_space, p))

    def divergence_residual(self, u):
        """max over the zero-mean pressure basis of |c(u, q)|."""
        r = self.div_full @ u.coefficients
        mean = r.sum() / self.p_space.mesh.area()
        r = r - mean * self.p_space.mass_of_constants()
        return float(np.abs(r).max())


def darcy_stokes_projection(u0, spaces, lam, eta, p0=None):
    """Darcy-Stokes projection (P_h u0, P_h p0) onto the Taylor-Hood pair.

    ``u0`` is a VectorField with gradient (or None for zero);
    ``spaces = (velocity, pressure)``.  The returned velocity is discretely
    divergence-free and the pressure has zero mean.
    """
    vel_space, p_space = spaces
    if lam <= 0:
        raise FemError("lambda must be positive")
    if u0 is None:
        return vel_space.zeros(), p_space.zeros()
    solver = DarcyStokesSolver(vel_space, p_space, lam, eta)
    xq, wdet = fem.quad_points(vel_space.mesh)
    x, y = xq[..., 0], xq[..., 1]

    f = np.zeros(vel_space.dof_count)
    uq = np.asarray(u0.value(x, y), dtype=float)
    vals, _ = fem._ref_tables("p2")
    local_x = eta * np.einsum("tq,tq,qi->ti", wdet, uq[..., 0], vals)
    local_y = eta * np.einsum("tq,tq,qi->ti", wdet, uq[..., 1], vals)
    if u0.gradient is None:
        raise FemError("darcy_stokes_projection needs the gradient of u0")
    gq = np.asarray(u0.gradient(x, y), dtype=float)  # (nt, nq, 2, 2)
    g2 = fem._phys_grads(vel_space.mesh, "p2")
    local_x += lam * np.einsum("tq,tqd,tqld->tl", wdet, gq[..., 0, :], g2)
    local_y += lam * np.einsum("tq,tqd,tqld->tl", wdet, gq[..., 1, :], g2)
    local = np.concatenate([local_x, local_y], axis=1)
    np.add.at(f, vel_space.cell_dofs.ravel(), local.ravel())

    if p0 is not None:
        # -c(v, p0) carried to the right side
        p0q = np.asarray(p0(x, y) if callable(p0) else p0.value(x, y),
                         dtype=float)
        lx = np.einsum("tq,tq,tql->tl", wdet, p0q, g2[..., 0])
        ly = np.einsum("tq,tq,tql->tl", wdet, p0q, g2[..., 1])
        lp = np.concatenate([lx, ly], axis=1)
        np.add.at(f, vel_space.cell_dofs.ravel(), -lp.ravel())

    return solver.solve(f)


def ell_form(mu1, mu2, phi_prev, params, tau, solver=None):
    """The flow-augmented bilinear form of the solvability argument:
    eps*a(mu1, mu2) + (grad(phi_prev) . u(mu1), mu2), where u(mu1) solves the
    auxiliary Darcy-Stokes system with mass coefficient eta + 1/tau and
    forcing gamma * (grad(phi_prev) . v, mu1)."""
    space = mu1.space
    mesh = space.mesh
    ws = workspace_for(space)
    _require_zero_mean(mu1, ws, "mu1")
    _require_zero_mean(mu2, ws, "mu2")
    vel_space = function_space(mesh, "p2v")
    p_space = function_space(mesh, "p1", mean_zero=True)
    if solver is None:
        solver = DarcyStokesSolver(vel_space, p_space, params.lam,
                                   params.eta + 1.0 / tau)
    B = fem.assemble_matrix("convection", vel_space, space, phi=phi_prev)
    u, _ = solver.solve(params.gamma * (B.T @ mu1.coefficients))
    K = space.stiffness_matrix()
    val = params.epsilon * float(mu1.coefficients @ (K @ mu2.coefficients))
    val += float(mu2.coefficients @ (B @ u.coefficients))
    return val
