"""The discrete inverse Laplacian, its negative norm, and the projections.

Shows the eigenfunction sanity checks: applying the inverse Laplacian to
cos(pi x) divides it by pi^2, the induced negative norm matches its
variational characterization, and the three projections converge at their
expected rates.
"""

import numpy as np

from chds import (FeFunction, apply_Th, build_crossed_mesh,
                  darcy_stokes_projection, fe_norm, function_space,
                  interpolate, l2_projection, neg_norm, ritz_projection,
                  uniform_refine)
from chds.fem import ScalarField, VectorField
from chds.scheme import build_spaces

mesh = build_crossed_mesh((0.0, 1.0, 0.0, 1.0), 32)
p1 = function_space(mesh, "p1")

zeta = interpolate(p1, lambda x, y: np.cos(np.pi * x))
t = apply_Th(zeta)
target = interpolate(p1, lambda x, y: np.cos(np.pi * x) / np.pi ** 2)
err = fe_norm(FeFunction(p1, t.coefficients - target.coefficients), "L2")
print(f"inverse Laplacian of cos(pi x): L2 deviation from cos/pi^2 = {err:.2e}")
print(f"negative norm of cos(pi x) = {neg_norm(zeta):.6f} "
      f"(continuum value {np.sqrt(0.5) / np.pi:.6f})")

field = ScalarField(
    lambda x, y: np.cos(2 * np.pi * x),
    lambda x, y: np.stack([-2 * np.pi * np.sin(2 * np.pi * x),
                           np.zeros_like(y)], axis=-1))


def stream():
    def value(x, y):
        u1 = np.pi * np.sin(np.pi * x) ** 2 * np.sin(2 * np.pi * y)
        u2 = -np.pi * np.sin(2 * np.pi * x) * np.sin(np.pi * y) ** 2
        return np.stack([u1, u2], axis=-1)

    def gradient(x, y):
        g11 = np.pi ** 2 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
        g12 = 2 * np.pi ** 2 * np.sin(np.pi * x) ** 2 * np.cos(2 * np.pi * y)
        g21 = -2 * np.pi ** 2 * np.cos(2 * np.pi * x) * np.sin(np.pi * y) ** 2
        g22 = -np.pi ** 2 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
        return np.stack([np.stack([g11, g12], axis=-1),
                         np.stack([g21, g22], axis=-1)], axis=-2)

    return VectorField(value, gradient)


print("\nprojection errors under refinement (n = 8, 16, 32):")
print(f"{'n':>4} {'Ritz H1':>12} {'L2 proj L2':>12} {'Darcy-Stokes H1':>16}")
mesh = build_crossed_mesh((0.0, 1.0, 0.0, 1.0), 8)
prev = None
for level in range(3):
    spaces = build_spaces(mesh)
    r = ritz_projection(field, spaces.p1)
    q = l2_projection(field.value, spaces.p1)
    u, _ = darcy_stokes_projection(stream(), (spaces.velocity, spaces.ring),
                                   1.0, 1.0)

    from chds.fem import _grads_at_quad, quad_points, values_at_quad
    xq, wdet = quad_points(mesh)
    x, y = xq[..., 0], xq[..., 1]

    dr = values_at_quad(r) - field.value(x, y)
    dg = _grads_at_quad(r) - field.gradient(x, y)
    e_ritz = np.sqrt((wdet * dr ** 2).sum()
                     + (wdet * (dg ** 2).sum(axis=-1)).sum())
    dq = values_at_quad(q) - field.value(x, y)
    e_l2 = np.sqrt((wdet * dq ** 2).sum())
    du = values_at_quad(u) - stream().value(x, y)
    dgu = _grads_at_quad(u) - stream().gradient(x, y)
    e_ds = np.sqrt((wdet * (du ** 2).sum(axis=-1)).sum()
                   + (wdet * (dgu ** 2).sum(axis=(-2, -1))).sum())

    n = round(np.sqrt(mesh.num_triangles / 4))
    row = f"{n:>4} {e_ritz:>12.4e} {e_l2:>12.4e} {e_ds:>16.4e}"
    if prev is not None:
        rates = [np.log2(p / c) for p, c in
                 zip(prev, (e_ritz, e_l2, e_ds))]
        row += "   rates: " + ", ".join(f"{r:.2f}" for r in rates)
    print(row)
    prev = (e_ritz, e_l2, e_ds)
    mesh = uniform_refine(mesh)
