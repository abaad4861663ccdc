import numpy as np
import pytest

from chds import Config, FeFunction, build_crossed_mesh, interpolate
from chds import diagnostics, scheme
from chds.diagnostics import Monitor
from chds.scheme import Params, Stepper, build_spaces

from conftest import integrate_deg6


def make_stepper(spaces, **kw):
    base = dict(epsilon=6.25e-2, tau=1e-3, T=1e-2, picard_tol=1e-12,
                newton_tol=1e-12)
    base.update(kw)
    return Stepper(spaces, Params(**base))


def test_energy_pure_phase(spaces_n4):
    st = make_stepper(spaces_n4)
    state = st.initialize(lambda x, y: np.ones_like(x))
    eb = Monitor(spaces_n4, st.params).energy(state)
    assert eb.total == pytest.approx(0.0, abs=1e-13)
    assert eb.kinetic == 0.0 and eb.longrange == 0.0


def test_energy_zero_phase(spaces_n4):
    st = make_stepper(spaces_n4)
    state = st.initialize(lambda x, y: np.zeros_like(x))
    eb = Monitor(spaces_n4, st.params).energy(state)
    # ||0^2 - 1||^2 = |domain| = 1, so E = 1/(4 eps)
    assert eb.total == pytest.approx(1.0 / (4 * 6.25e-2), abs=1e-12)
    assert eb.double_well == pytest.approx(eb.total)


def test_energy_terms_nonnegative_and_sum(spaces_n8, rng):
    st = make_stepper(spaces_n8, theta=50.0)
    state = st.initialize(Config().initial_field())
    eb = Monitor(spaces_n8, st.params).energy(state)
    for term in (eb.kinetic, eb.double_well, eb.gradient, eb.longrange):
        assert term >= 0.0
    parts = eb.kinetic + eb.double_well + eb.gradient + eb.longrange
    assert abs(eb.total - parts) <= 1e-13 * max(1.0, eb.total)


def test_energy_against_independent_quadrature():
    # the initial datum on n=16: double-well and gradient terms vs an
    # independent degree-6 quadrature of the exact nodal interpolant
    mesh = build_crossed_mesh((0.0, 1.0, 0.0, 1.0), 16)
    spaces = build_spaces(mesh)
    st = make_stepper(spaces)
    state = st.initialize(Config().initial_field())
    eb = Monitor(spaces, st.params).energy(state)

    phi = state.phi
    p1 = spaces.p1
    eps = st.params.epsilon

    # loop-free degree-6 quadrature of the P1 interpolant, triangle by
    # triangle in barycentric form
    from conftest import degree6_rule
    pts, wts = degree6_rule()
    p = mesh.vertices[mesh.triangles]
    v0 = p[:, 0]
    jac = np.stack([p[:, 1] - v0, p[:, 2] - v0], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    lam = np.stack([1 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]], axis=1)
    pc = phi.coefficients[p1.cell_dofs]
    phiq = np.einsum("tl,ql->tq", pc, lam)
    dw = float(np.einsum("t,q,tq->", det, wts, (phiq ** 2 - 1) ** 2))
    expected_dw = dw / (4 * eps)
    assert eb.double_well == pytest.approx(expected_dw, abs=1e-10)

    inv = np.linalg.inv(jac)
    g_ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    g_phys = np.einsum("tji,lj->tli", inv, g_ref)
    grads = np.einsum("tl,tld->td", pc, g_phys)
    grad_sq = float((det * 0.5 * (grads ** 2).sum(axis=1)).sum())
    assert eb.gradient == pytest.approx(0.5 * eps * grad_sq, abs=1e-10)


def test_energy_law_residual_constant_state(spaces_n4):
    st = make_stepper(spaces_n4)
    state = st.initialize(lambda x, y: np.full_like(x, -0.3))
    nxt, _ = st.step(state)
    res = Monitor(spaces_n4, st.params).energy_law_residual(state, nxt)
    assert abs(res) <= 1e-13


def test_energy_law_residual_generic_with_theta(spaces_n8):
    st = make_stepper(spaces_n8, theta=120.0, tau=1e-3, T=5e-3)
    state = st.initialize(Config().initial_field())
    mon = Monitor(spaces_n8, st.params)
    e0 = mon.energy(state).total
    for _ in range(5):
        nxt, _ = st.step(state)
        res = mon.energy_law_residual(state, nxt)
        assert abs(res) <= 1e-8 * max(1.0, e0)
        state = nxt


def test_energy_law_residual_scales_with_solver_tolerance(spaces_n8):
    # loosening the Newton tolerance must visibly inflate the defect
    def max_residual(newton_tol, picard_tol):
        st = Stepper(spaces_n8, Params(
            epsilon=6.25e-2, tau=1e-3, T=3e-3, picard_tol=picard_tol,
            newton_tol=newton_tol))
        state = st.initialize(Config().initial_field())
        mon = Monitor(spaces_n8, st.params)
        worst = 0.0
        for _ in range(3):
            nxt, _ = st.step(state)
            worst = max(worst, abs(mon.energy_law_residual(state, nxt)))
            state = nxt
        return worst

    tight = max_residual(1e-12, 1e-12)
    loose = max_residual(1e-4, 1e-3)
    assert loose > 50 * tight


def test_invariants_fresh_state(spaces_n8):
    st = make_stepper(spaces_n8)
    state = st.initialize(Config().initial_field())
    inv = Monitor(spaces_n8, st.params).invariant_residuals(state)
    assert inv.mass_dev <= 1e-11
    assert inv.div_res <= 1e-11
    assert inv.mu_mean_res <= 1e-11
    assert inv.xi_mean_res <= 1e-11
    assert inv.p_mean_res <= 1e-11


def test_no_mass_drift_over_100_steps(spaces_n8):
    st = make_stepper(spaces_n8, T=0.1)
    state = st.initialize(Config().initial_field())
    mon = Monitor(spaces_n8, st.params)
    worst = 0.0
    for _ in range(100):
        state, _ = st.step(state)
        worst = max(worst, mon.invariant_residuals(state).mass_dev)
    assert worst <= 1e-10


def test_perturbation_changes_mass_by_lumped_entry(spaces_n8):
    st = make_stepper(spaces_n8)
    state = st.initialize(Config().initial_field())
    mon = Monitor(spaces_n8, st.params)
    base = mon.invariant_residuals(state).mass_dev
    i = 7
    delta = 1e-3
    state.phi.coefficients[i] += delta
    m_i = spaces_n8.p1.mass_of_constants()[i]
    got = mon.invariant_residuals(state).mass_dev
    assert got == pytest.approx(delta * m_i + base, abs=1e-14 + base)
    state.phi.coefficients[i] -= delta


def test_free_function_diagnostics(spaces_n4):
    st = make_stepper(spaces_n4)
    state = st.initialize(Config().initial_field())
    prm = st.params
    eb = diagnostics.energy(state, prm)
    assert eb.total > 0
    nxt = scheme.step(state, prm)
    res = diagnostics.energy_law_residual(state, nxt, prm)
    assert abs(res) <= 1e-8
    inv = diagnostics.invariant_residuals(nxt, prm)
    assert inv.mass_dev <= 1e-11


def test_monitor_requires_phi_bar0(spaces_n4):
    with pytest.raises(ValueError):
        Monitor(spaces_n4, Params(epsilon=0.1, tau=1e-3, T=1e-2))
