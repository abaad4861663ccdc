"""The convex-splitting time stepper for the coupled phase-field / flow
system.

Each time step solves, by a Picard iteration, the coupled system

    (d_t phi, nu) + eps a(mu, nu) + (grad(phi_prev) . u, nu)        = 0
    eps^-1 (phi^3 - phi_prev, psi) + eps a(phi, psi)
                                    - (mu, psi) + (xi, psi)         = 0
    a(xi, zeta) - theta (phi - phibar0, zeta)                       = 0
    (d_t u, v) + lam a(u, v) + eta (u, v) - c(v, p)
                                    - gamma (grad(phi_prev) . v, mu) = 0
    c(u, q) = 0

where the cubic term is implicit (the convex part) and phi_prev enters the
concave and transport terms explicitly.  The phase block is solved by Newton
iteration on the monolithic system; the flow block is one saddle-point solve
with a factorization reused for the whole trajectory.
"""

import csv
import os
import time as _time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import fem
from .fem import FeFunction, function_space, interpolate
from .linalg import SolverFailure, solve_spd, sparse_lu
from .mesh import build_crossed_mesh
from .operators import (DarcyStokesSolver, darcy_stokes_projection,
                        ritz_projection, workspace_for)

__all__ = [
    "Params", "State", "SpaceBundle", "Stepper", "StepStats", "RunSummary",
    "build_spaces", "initialize", "solve_ch_block", "solve_flow_block",
    "step", "run",
]


@dataclass(frozen=True)
class Params:
    """Model and discretization constants.

    The scheme must accept any tau, h > 0 (unconditional solvability); the
    constructor enforces only sign constraints and that tau divides T.
    omega is fixed at 1 (the analysis normalizes it); phi_bar0 is the initial
    mass average, filled in by ``initialize``.
    """

    epsilon: float
    tau: float
    T: float
    gamma: float = 1.0
    lam: float = 1.0
    eta: float = 1.0
    theta: float = 0.0
    omega: float = 1.0
    picard_tol: float = 1e-9
    newton_tol: float = 1e-12
    linear_tol: float = 1e-12
    max_picard: int = 100
    max_newton: int = 50
    phi_bar0: float = None

    def __post_init__(self):
        if not (self.epsilon > 0 and self.lam > 0 and self.tau > 0
                and self.T > 0):
            raise ValueError("epsilon, lambda, tau, T must be positive")
        if self.gamma < 0 or self.eta < 0 or self.theta < 0:
            raise ValueError("gamma, eta, theta must be nonnegative")
        if self.omega != 1.0:
            raise ValueError("omega is fixed at 1 in this discretization")
        for name in ("picard_tol", "newton_tol", "linear_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def num_steps(self):
        m = round(self.T / self.tau)
        if m < 1 or abs(m * self.tau - self.T) > 1e-12 * max(1.0, self.T):
            raise ValueError(
                f"tau = {self.tau} does not divide T = {self.T}")
        return m

    def with_phi_bar0(self, value):
        return replace(self, phi_bar0=float(value))


@dataclass
class State:
    """All five fields at one time level."""
    phi: FeFunction
    mu: FeFunction
    xi: FeFunction
    u: FeFunction
    p: FeFunction
    step_index: int = 0
    time: float = 0.0


@dataclass
class SpaceBundle:
    mesh: object
    p1: object          # phase field / chemical potential space
    ring: object        # zero-mean P1 (xi and pressure)
    velocity: object    # P2 vector with no-slip boundary


def build_spaces(mesh):
    return SpaceBundle(
        mesh=mesh,
        p1=function_space(mesh, "p1"),
        ring=function_space(mesh, "p1", mean_zero=True),
        velocity=function_space(mesh, "p2v"),
    )


def _conv_apply(B, u_coeffs):
    return B.apply(u_coeffs) if hasattr(B, "apply") else B @ u_coeffs


def _conv_apply_t(B, m_coeffs):
    return B.apply_T(m_coeffs) if hasattr(B, "apply_T") else B.T @ m_coeffs


@dataclass
class StepStats:
    picard_iters: int
    newton_iters: int
    newton_history: list = field(default_factory=list)


class Stepper:
    """Holds all per-mesh matrices and factorizations for one (mesh, params)
    pair; the flow factorization and the Newton LU are reused across steps."""

    # refactor the Newton matrix once per-iteration contraction is worse
    REFRESH_RATIO = 0.5

    def __init__(self, spaces, params):
        self.spaces = spaces
        self.params = params
        p1 = spaces.p1
        self.M = p1.mass_matrix()
        self.K = p1.stiffness_matrix()
        self.mvec = p1.mass_of_constants()
        self.area = spaces.mesh.area()
        self.flow = DarcyStokesSolver(spaces.velocity, spaces.ring,
                                      params.lam, params.eta + 1.0 / params.tau)
        self._neg_ws = None
        self._ch_lu = None
        self._ch_phi_at_lu = None

    @property
    def neg_workspace(self):
        if self._neg_ws is None:
            self._neg_ws = workspace_for(self.spaces.p1)
        return self._neg_ws

    # -- initialization ----------------------------------------------------

    def initialize(self, phi0, u0=None, p0=None, mode="interpolate"):
        """Build the discrete initial state.

        phi0 by nodal interpolation (the experiment default) or Ritz
        projection; u0 by the Darcy-Stokes projection (zero if omitted);
        mu0 from the discrete variational derivative of the energy; xi0 from
        the long-range equation; p0 = 0.
        """
        spaces, prm = self.spaces, self.params
        if mode == "ritz":
            phi = ritz_projection(phi0, spaces.p1)
        elif mode == "interpolate":
            phi = interpolate(spaces.p1, phi0)
        else:
            raise ValueError(f"unknown initialization mode {mode!r}")

        phi_bar0 = (self.mvec @ phi.coefficients) / self.area
        self.params = prm = prm.with_phi_bar0(phi_bar0)

        if u0 is None:
            u = spaces.velocity.zeros()
            p = spaces.ring.zeros()
        else:
            u, p = darcy_stokes_projection(u0, (spaces.velocity, spaces.ring),
                                           prm.lam, prm.eta, p0=p0)

        # xi0 = theta * T_h(phi0 - phibar0); doubles as the mu0 theta-term
        if prm.theta > 0:
            dev = phi.coefficients - phi_bar0
            xi = FeFunction(spaces.p1,
                            prm.theta * self.neg_workspace.solve(self.M @ dev))
        else:
            xi = spaces.ring.zeros()

        cubic = fem.assemble_vector("cubic", spaces.p1, phi=phi)
        rhs = (prm.epsilon * (self.K @ phi.coefficients)
               + (cubic - self.M @ phi.coefficients) / prm.epsilon
               + self.M @ xi.coefficients)
        mu_c, _ = solve_spd(self.M, rhs, tol=prm.linear_tol)
        mu = FeFunction(spaces.p1, mu_c)
        return State(phi=phi, mu=mu, xi=xi, u=u, p=spaces.ring.zeros())

    # -- phase block (Newton) ----------------------------------------------

    def _convection_matrix(self, phi_prev):
        return fem.assemble_matrix("convection", self.spaces.velocity,
                                   self.spaces.p1, phi=phi_prev)

    def _convection_operator(self, phi_prev):
        return fem.ConvectionOperator(self.spaces.velocity, self.spaces.p1,
                                      phi_prev)

    def _ch_residual(self, z, phi_prev_c, bu, prm):
        n = self.M.shape[0]
        phi_c, mu_c = z[:n], z[n:2 * n]
        cubic = fem.assemble_vector(
            "cubic", self.spaces.p1,
            phi=FeFunction(self.spaces.p1, phi_c))
        r1 = (self.M @ ((phi_c - phi_prev_c) / prm.tau)
              + prm.epsilon * (self.K @ mu_c) + bu)
        r2 = ((cubic - self.M @ phi_prev_c) / prm.epsilon
              + prm.epsilon * (self.K @ phi_c) - self.M @ mu_c)
        if prm.theta == 0.0:
            return np.concatenate([r1, r2])
        xi_c, lag = z[2 * n:3 * n], z[3 * n]
        r2 = r2 + self.M @ xi_c
        r3 = (self.K @ xi_c
              - prm.theta * (self.M @ phi_c - prm.phi_bar0 * self.mvec)
              + lag * self.mvec)
        r4 = np.array([self.mvec @ xi_c])
        return np.concatenate([r1, r2, r3, r4])

    def _ch_jacobian(self, z, prm):
        n = self.M.shape[0]
        phi = FeFunction(self.spaces.p1, z[:n])
        C = fem.assemble_matrix("cubic_jacobian", self.spaces.p1,
                                self.spaces.p1, phi=phi)
        a11 = self.M / prm.tau
        a12 = prm.epsilon * self.K
        a21 = prm.epsilon * self.K + C / prm.epsilon
        a22 = -self.M
        if prm.theta == 0.0:
            return sp.bmat([[a11, a12], [a21, a22]], format="csc")
        mcol = sp.csc_matrix(self.mvec.reshape(-1, 1))
        return sp.bmat([
            [a11, a12, None, None],
            [a21, a22, self.M, None],
            [-prm.theta * self.M, None, self.K, mcol],
            [None, None, mcol.T, None],
        ], format="csc")

    def solve_ch_block(self, phi_prev, u_fixed=None, z0=None, B=None):
        """Solve the coupled phase/potential/long-range block for fixed
        transport velocity; returns (phi, mu, xi, newton_iterations).

        Newton with full steps; the LU factorization is reused between
        iterations and steps while the residual contracts quickly, and is
        refreshed at the current iterate otherwise.  A residual-halving
        damped step triggers only on residual increase.
        """
        prm = self.params
        if prm.theta > 0 and prm.phi_bar0 is None:
            prm = prm.with_phi_bar0(
                (self.mvec @ phi_prev.coefficients) / self.area)
        n = self.M.shape[0]
        if B is None and u_fixed is not None \
                and np.any(u_fixed.coefficients):
            B = self._convection_operator(phi_prev)
        if B is not None and u_fixed is not None:
            bu = _conv_apply(B, u_fixed.coefficients)
        else:
            bu = np.zeros(n)

        if z0 is None:
            if prm.theta == 0.0:
                z = np.concatenate([phi_prev.coefficients, np.zeros(n)])
            else:
                z = np.concatenate([phi_prev.coefficients, np.zeros(n),
                                    np.zeros(n), [0.0]])
        else:
            z = z0.copy()

        r = self._ch_residual(z, phi_prev.coefficients, bu, prm)
        norm_r = float(np.linalg.norm(r))
        history = [norm_r]
        fresh = False   # factorization taken at the current iterate
        iters = 0
        for iters in range(1, prm.max_newton + 1):
            if norm_r <= prm.newton_tol:
                iters -= 1
                break
            if self._ch_lu is None or self._ch_lu_size != len(z):
                self._refresh_ch_lu(z, prm)
                fresh = True
            d = self._ch_lu.solve(-r)
            alpha = 1.0
            for _ in range(60):
                zt = z + alpha * d
                rt = self._ch_residual(zt, phi_prev.coefficients, bu, prm)
                norm_rt = float(np.linalg.norm(rt))
                if norm_rt < norm_r or norm_rt <= prm.newton_tol:
                    break
                if not fresh:
                    self._refresh_ch_lu(z, prm)
                    fresh = True
                    d = self._ch_lu.solve(-r)
                    alpha = 1.0
                    continue
                alpha *= 0.5
            else:
                raise SolverFailure(
                    f"Newton stagnated at residual {norm_r:.3e} "
                    f"(history {history})")
            contraction = norm_rt / norm_r if norm_r > 0 else 0.0
            z, r, norm_r = zt, rt, norm_rt
            history.append(norm_r)
            if contraction > self.REFRESH_RATIO and not fresh \
                    and norm_r > prm.newton_tol:
                # reused factorization is contracting slowly: refresh at the
                # new iterate and take true Newton steps from here
                self._refresh_ch_lu(z, prm)
                fresh = True
            else:
                fresh = False
        if norm_r > prm.newton_tol:
            raise SolverFailure(
                f"Newton did not reach tolerance {prm.newton_tol:.1e} in "
                f"{prm.max_newton} iterations (history {history})")

        p1 = self.spaces.p1
        phi = FeFunction(p1, z[:n].copy())
        mu = FeFunction(p1, z[n:2 * n].copy())
        if prm.theta == 0.0:
            xi = self.spaces.ring.zeros()
        else:
            xi = FeFunction(p1, z[2 * n:3 * n].copy())
        self._last_z = z
        return phi, mu, xi, iters

    def _refresh_ch_lu(self, z, prm):
        J = self._ch_jacobian(z, prm)
        if self._ch_lu is not None and self._ch_lu_size == len(z):
            try:
                self._ch_lu.refactor(J)
                return
            except ValueError:
                pass
        self._ch_lu = sparse_lu(J, refine=False)
        self._ch_lu_size = len(z)

    # -- flow block ----------------------------------------------------------

    def solve_flow_block(self, phi_prev, mu_fixed, u_prev, B=None):
        """One Taylor-Hood saddle solve: system (1/tau + eta) M + lam K with
        right side (1/tau) M u_prev + gamma * B(phi_prev)^T mu."""
        prm = self.params
        if B is None:
            B = self._convection_operator(phi_prev)
        Mv = self.spaces.velocity.mass_matrix()
        rhs = (Mv @ u_prev.coefficients) / prm.tau
        if prm.gamma != 0.0:
            rhs = rhs + prm.gamma * _conv_apply_t(B, mu_fixed.coefficients)
        return self.flow.solve(rhs)

    # -- one time step -------------------------------------------------------

    def step(self, state):
        """Advance one step: Picard iteration alternating the phase block
        (with the current velocity iterate) and the flow block (with the
        fresh chemical potential), until the relative H1 change of phi and
        L2 change of u both fall below picard_tol."""
        prm = self.params
        if prm.phi_bar0 is None:
            self.params = prm = prm.with_phi_bar0(
                (self.mvec @ state.phi.coefficients) / self.area)
        B = self._convection_operator(state.phi)
        u_it = state.u
        phi_it = state.phi
        n = self.M.shape[0]
        if prm.theta == 0.0:
            z0 = np.concatenate([state.phi.coefficients,
                                 state.mu.coefficients])
        else:
            z0 = np.concatenate([state.phi.coefficients,
                                 state.mu.coefficients,
                                 state.xi.coefficients, [0.0]])
        total_newton = 0
        history = []
        for k in range(1, prm.max_picard + 1):
            phi, mu, xi, n_newton = self.solve_ch_block(
                state.phi, u_it, z0=z0, B=B)
            total_newton += n_newton
            z0 = self._last_z
            u, p = self.solve_flow_block(state.phi, mu, state.u, B=B)
            dphi = self._h1_change(phi, phi_it)
            du = self._l2_change(u, u_it)
            history.append((dphi, du))
            phi_it, u_it = phi, u
            if dphi <= prm.picard_tol and du <= prm.picard_tol:
                break
        else:
            raise SolverFailure(
                f"Picard iteration stagnated after {prm.max_picard} "
                f"iterations; change history {history}")
        new = State(phi=phi, mu=mu, xi=xi, u=u, p=p,
                    step_index=state.step_index + 1,
                    time=state.time + prm.tau)
        return new, StepStats(picard_iters=k, newton_iters=total_newton,
                              newton_history=history)

    def _h1_change(self, f, g):
        d = f.coefficients - g.coefficients
        num = np.sqrt(d @ (self.M @ d) + d @ (self.K @ d))
        c = f.coefficients
        den = np.sqrt(c @ (self.M @ c) + c @ (self.K @ c))
        return float(num / max(den, 1.0))

    def _l2_change(self, f, g):
        Mv = self.spaces.velocity.mass_matrix()
        d = f.coefficients - g.coefficients
        num = np.sqrt(max(d @ (Mv @ d), 0.0))
        den = np.sqrt(max(f.coefficients @ (Mv @ f.coefficients), 0.0))
        return float(num / max(den, 1.0))


# ---------------------------------------------------------------------------
# free-function API (constructs transient steppers; fine at test scale)

def initialize(config, spaces):
    """Discrete initial state per a Config: phi0 from the initial-data
    selector, u0 = 0, mode from init_mode."""
    stepper = Stepper(spaces, config.make_params())
    state = stepper.initialize(config.initial_field(), mode=config.init_mode)
    return state, stepper


def solve_ch_block(phi_prev, u_fixed, params):
    spaces = build_spaces(phi_prev.space.mesh)
    stepper = Stepper(spaces, params)
    phi, mu, xi, _ = stepper.solve_ch_block(phi_prev, u_fixed)
    return phi, mu, xi


def solve_flow_block(phi_prev, mu_fixed, u_prev, params):
    spaces = build_spaces(phi_prev.space.mesh)
    stepper = Stepper(spaces, params)
    return stepper.solve_flow_block(phi_prev, mu_fixed, u_prev)


def step(state, params):
    spaces = build_spaces(state.phi.space.mesh)
    stepper = Stepper(spaces, params)
    new, _ = stepper.step(state)
    return new


# ---------------------------------------------------------------------------
# trajectory runner

CSV_COLUMNS = ["step", "time", "E_total", "E_kinetic", "E_double_well",
               "E_gradient", "E_longrange", "dissipation", "mass_dev",
               "div_res", "mu_mean_res", "picard_iters", "newton_iters"]


@dataclass
class RunSummary:
    final_state: State
    params: Params
    rows: list
    energy_initial: float
    energy_monotone: bool
    max_energy_law_residual: float
    max_mass_dev: float
    max_div_res: float
    max_mu_mean_res: float
    sum_grad_mu: float        # tau * sum ||grad mu||^2
    sum_grad_u: float         # tau * sum ||grad u||^2
    sum_phi_increment_h1: float  # sum ||phi^m - phi^{m-1}||_H1^2
    max_mu_l2: float
    max_lap_phi_l2: float
    csv_path: str = None
    wall_clock: float = 0.0


_UNSET = object()


def run(config, *, out_dir=_UNSET, snapshot_every=None, progress=False,
        track_energy_law=True, track_monitors=True):
    """Execute M = round(T/tau) steps of the configured experiment, streaming
    per-step diagnostics to CSV and optional VTK snapshots; returns the final
    state and summary statistics.  Any step failure aborts with the partial
    CSV intact.  ``out_dir=None`` disables file output."""
    from . import diagnostics
    from .io import write_vtk_state

    mesh = build_crossed_mesh((0.0, 1.0, 0.0, 1.0), config.n)
    spaces = build_spaces(mesh)
    stepper = Stepper(spaces, config.make_params())
    state = stepper.initialize(config.initial_field(), mode=config.init_mode)
    prm = stepper.params
    mon = diagnostics.Monitor(spaces, prm)

    out_dir = config.out_dir if out_dir is _UNSET else out_dir
    snapshot_every = (config.snapshot_every if snapshot_every is None
                      else snapshot_every)
    csv_path = None
    writer = None
    fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "run.csv")
        fh = open(csv_path, "w", newline="", encoding="utf-8")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)

    t0 = _time.perf_counter()
    m_steps = prm.num_steps()
    e_prev = mon.energy(state)
    e0 = e_prev.total
    rows = []
    monotone = True
    max_law = 0.0
    maxes = {"mass": 0.0, "div": 0.0, "mu": 0.0,
             "mu_l2": 0.0, "lap": 0.0}
    sums = {"gmu": 0.0, "gu": 0.0, "dphi": 0.0}
    try:
        for m in range(1, m_steps + 1):
            prev = state
            state, stats = stepper.step(state)
            eb = mon.energy(state)
            diss = mon.dissipation(state)
            inv = mon.invariant_residuals(state)
            if track_energy_law:
                res = mon.energy_law_residual(prev, state, e_prev=e_prev,
                                              e_next=eb)
                max_law = max(max_law, abs(res))
            if eb.total > e_prev.total + 1e-10 * max(1.0, abs(e0)):
                monotone = False
            maxes["mass"] = max(maxes["mass"], inv.mass_dev)
            maxes["div"] = max(maxes["div"], inv.div_res)
            maxes["mu"] = max(maxes["mu"], inv.mu_mean_res)
            if track_monitors:
                maxes["mu_l2"] = max(maxes["mu_l2"],
                                     fem.fe_norm(state.mu, "L2"))
                maxes["lap"] = max(maxes["lap"], mon.lap_phi_l2(state))
            sums["gmu"] += prm.tau * mon.grad_mu_sq(state)
            sums["gu"] += prm.tau * mon.grad_u_sq(state)
            dinc = state.phi.coefficients - prev.phi.coefficients
            sums["dphi"] += float(
                dinc @ (stepper.M @ dinc) + dinc @ (stepper.K @ dinc))
            row = [m, state.time, eb.total, eb.kinetic, eb.double_well,
                   eb.gradient, eb.longrange, diss, inv.mass_dev,
                   inv.div_res, inv.mu_mean_res, stats.picard_iters,
                   stats.newton_iters]
            rows.append(row)
            if writer is not None:
                writer.writerow(_format_row(row))
                fh.flush()
            if snapshot_every and (m % snapshot_every == 0 or m == m_steps):
                write_vtk_state(os.path.join(out_dir, f"state_{m:06d}.vtk"),
                                state)
            if progress and (m % max(1, m_steps // 20) == 0):
                print(f"  step {m}/{m_steps}  E = {eb.total:.9e}", flush=True)
            e_prev = eb
    finally:
        if fh is not None:
            fh.close()

    return RunSummary(
        final_state=state, params=prm, rows=rows, energy_initial=e0,
        energy_monotone=monotone, max_energy_law_residual=max_law,
        max_mass_dev=maxes["mass"], max_div_res=maxes["div"],
        max_mu_mean_res=maxes["mu"], sum_grad_mu=sums["gmu"],
        sum_grad_u=sums["gu"], sum_phi_increment_h1=sums["dphi"],
        max_mu_l2=maxes["mu_l2"], max_lap_phi_l2=maxes["lap"],
        csv_path=csv_path, wall_clock=_time.perf_counter() - t0)


def _format_row(row):
    out = []
    for v in row:
        if isinstance(v, float):
            out.append(f"{v:.12e}")
        else:
            out.append(str(v))
    return out
