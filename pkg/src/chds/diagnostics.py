"""Discrete energy, the per-step energy-law residual, and the conservation /
identity residuals monitored by the invariant test suite.

The long-range energy term uses the mesh-dependent negative norm (the one
induced by the discrete inverse Laplacian), so the per-step energy identity
closes exactly up to solver tolerances.  In the decoupled limit gamma = 0 the
velocity is identically zero and the 1/gamma terms are defined as 0.
"""

from dataclasses import dataclass

import numpy as np

from . import fem
from .linalg import sparse_lu
from .fem import values_at_quad
from .operators import workspace_for

__all__ = ["EnergyBreakdown", "InvariantResiduals", "Monitor",
           "energy", "energy_law_residual", "invariant_residuals"]


@dataclass
class EnergyBreakdown:
    kinetic: float       # (omega / 2 gamma) ||u||^2
    double_well: float   # (1 / 4 eps) ||phi^2 - 1||^2
    gradient: float      # (eps / 2) ||grad phi||^2
    longrange: float     # (theta / 2) ||phi - phibar0||^2_{-1,h}
    total: float


@dataclass
class InvariantResiduals:
    mass_dev: float
    div_res: float
    mu_mean_res: float
    xi_mean_res: float
    p_mean_res: float


class Monitor:
    """Caches every matrix and factorization the diagnostics need for one
    (spaces, params) pair; all methods are pure functions of states."""

    def __init__(self, spaces, params):
        if params.phi_bar0 is None:
            raise ValueError("params.phi_bar0 must be set (run initialize)")
        self.spaces = spaces
        self.params = params
        p1 = spaces.p1
        self.M = p1.mass_matrix()
        self.K = p1.stiffness_matrix()
        self.mvec = p1.mass_of_constants()
        self.area = spaces.mesh.area()
        self.Mv = spaces.velocity.mass_matrix()
        self.Kv = spaces.velocity.stiffness_matrix()
        self.D = fem.assemble_matrix("divergence", spaces.velocity, p1)
        self._neg_ws = workspace_for(p1) if params.theta > 0 else None
        self._mass_lu = None

    # -- energy --------------------------------------------------------------

    def energy(self, state):
        prm = self.params
        phi, u = state.phi, state.u
        c = phi.coefficients
        if prm.gamma > 0:
            kin = (prm.omega / (2 * prm.gamma)) * float(
                u.coefficients @ (self.Mv @ u.coefficients))
        else:
            kin = 0.0
        dw = self._double_well(phi) / (4 * prm.epsilon)
        grad = 0.5 * prm.epsilon * float(c @ (self.K @ c))
        if prm.theta > 0:
            lr = 0.5 * prm.theta * self._neg_sq(c - prm.phi_bar0)
        else:
            lr = 0.0
        return EnergyBreakdown(kinetic=kin, double_well=dw, gradient=grad,
                               longrange=lr, total=kin + dw + grad + lr)

    def _double_well(self, phi):
        phiq = values_at_quad(phi)
        _, wdet = fem.quad_points(self.spaces.mesh)
        t = phiq * phiq - 1.0
        return float((wdet * t * t).sum())

    def _neg_sq(self, coeffs):
        """||zeta||^2_{-1,h} for the P1 coefficient vector (must be zero-mean
        up to roundoff)."""
        load = self.M @ coeffs
        t = self._neg_ws.solve(load)
        return float(load @ t)

    # -- dissipation and the per-step law -------------------------------------

    def grad_mu_sq(self, state):
        c = state.mu.coefficients
        return float(c @ (self.K @ c))

    def grad_u_sq(self, state):
        c = state.u.coefficients
        return float(c @ (self.Kv @ c))

    def u_sq(self, state):
        c = state.u.coefficients
        return float(c @ (self.Mv @ c))

    def dissipation(self, state):
        """tau * [eps ||grad mu||^2 + (lam/gamma)||grad u||^2
        + (eta/gamma)||u||^2] at the given level."""
        prm = self.params
        d = prm.epsilon * self.grad_mu_sq(state)
        if prm.gamma > 0:
            d += (prm.lam / prm.gamma) * self.grad_u_sq(state)
            d += (prm.eta / prm.gamma) * self.u_sq(state)
        return prm.tau * d

    def energy_law_residual(self, prev, nxt, e_prev=None, e_next=None):
        """Left side of the per-step energy identity: energy change plus
        physical dissipation plus the tau^2 numerical-dissipation remainder;
        identically zero for exact solves."""
        prm = self.params
        tau = prm.tau
        if e_prev is None:
            e_prev = self.energy(prev)
        if e_next is None:
            e_next = self.energy(nxt)

        dphi = (nxt.phi.coefficients - prev.phi.coefficients) / tau
        remainder = 0.5 * prm.epsilon * float(dphi @ (self.K @ dphi))
        remainder += 0.5 / prm.epsilon * float(dphi @ (self.M @ dphi))
        _, wdet = fem.quad_points(self.spaces.mesh)
        pq_next = values_at_quad(nxt.phi)
        pq_prev = values_at_quad(prev.phi)
        dsq = (pq_next * pq_next - pq_prev * pq_prev) / tau
        remainder += float((wdet * dsq * dsq).sum()) / (4 * prm.epsilon)
        pdp = pq_next * (pq_next - pq_prev) / tau
        remainder += float((wdet * pdp * pdp).sum()) / (2 * prm.epsilon)
        if prm.gamma > 0:
            du = (nxt.u.coefficients - prev.u.coefficients) / tau
            remainder += float(du @ (self.Mv @ du)) / (2 * prm.gamma)
        if prm.theta > 0:
            remainder += 0.5 * prm.theta * self._neg_sq(dphi)

        return (e_next.total - e_prev.total + self.dissipation(nxt)
                + tau ** 2 * remainder)

    # -- invariants ------------------------------------------------------------

    def invariant_residuals(self, state):
        prm = self.params
        mass_dev = abs(float(self.mvec @ state.phi.coefficients)
                       - prm.phi_bar0 * self.area)

        r = self.D @ state.u.coefficients
        r = r - (r.sum() / self.area) * self.mvec
        div_res = float(np.abs(r).max())

        cubic = fem.assemble_vector("cubic", self.spaces.p1, phi=state.phi)
        mu_mean = float(self.mvec @ state.mu.coefficients) / self.area
        target = (cubic.sum() / self.area - prm.phi_bar0) / prm.epsilon
        mu_mean_res = abs(mu_mean - target)

        xi_mean_res = abs(float(self.mvec @ state.xi.coefficients))
        p_mean_res = abs(float(self.mvec @ state.p.coefficients))
        return InvariantResiduals(mass_dev=mass_dev, div_res=div_res,
                                  mu_mean_res=mu_mean_res,
                                  xi_mean_res=xi_mean_res,
                                  p_mean_res=p_mean_res)

    def lap_phi_l2(self, state):
        """||Lap_h phi||_{L2}: one prefactored mass solve."""
        if self._mass_lu is None:
            self._mass_lu = sparse_lu(self.M)
        w = self._mass_lu.solve(-(self.K @ state.phi.coefficients))
        return float(np.sqrt(max(w @ (self.M @ w), 0.0)))


# ---------------------------------------------------------------------------
# free functions over transient monitors

def _monitor_for(state, params):
    from .scheme import build_spaces
    if params.phi_bar0 is None:
        space = state.phi.space
        params = params.with_phi_bar0(
            float(space.mass_of_constants() @ state.phi.coefficients)
            / space.mesh.area())
    return Monitor(build_spaces(state.phi.space.mesh), params)


def energy(state, params):
    """EnergyBreakdown of a state (phi_bar0 defaults to the state's mean)."""
    return _monitor_for(state, params).energy(state)


def energy_law_residual(prev, nxt, params):
    if prev.phi.space.mesh is not nxt.phi.space.mesh:
        raise ValueError("states live on different meshes")
    return _monitor_for(prev, params).energy_law_residual(prev, nxt)


def invariant_residuals(state, params):
    return _monitor_for(state, params).invariant_residuals(state)
