"""Numerical quadrature on the reference triangle.

The reference triangle has vertices (0,0), (1,0), (0,1) and area 1/2.
Weights sum to the reference area, so a physical integral over a triangle
with Jacobian determinant ``det`` is ``det * sum(w_q * f(x_q))``.
"""

import numpy as np

__all__ = ["QuadratureRule", "radon7"]


class QuadratureRule:
    """Points (reference coordinates) and weights of a triangle rule."""

    def __init__(self, points, weights, degree):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.degree = int(degree)
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self):
        return len(self.weights)


def radon7():
    """Radon's 7-point rule, exact for polynomials of degree <= 5.

    This single rule integrates every form in the scheme exactly: the
    highest-degree integrand that occurs is degree 4 (P1 cubed against a
    P1 test function, and P2-gradient pairings).
    """
    s15 = np.sqrt(15.0)
    a1 = (6.0 + s15) / 21.0
    a2 = (6.0 - s15) / 21.0
    w0 = 9.0 / 80.0
    w1 = (155.0 + s15) / 2400.0
    w2 = (155.0 - s15) / 2400.0
    # barycentric (l0, l1, l2) -> reference (x, y) = (l1, l2)
    bary = [
        (1 / 3, 1 / 3, 1 / 3),
        (1 - 2 * a1, a1, a1),
        (a1, 1 - 2 * a1, a1),
        (a1, a1, 1 - 2 * a1),
        (1 - 2 * a2, a2, a2),
        (a2, 1 - 2 * a2, a2),
        (a2, a2, 1 - 2 * a2),
    ]
    weights = [w0, w1, w1, w1, w2, w2, w2]
    points = [(b1, b2) for _, b1, b2 in bary]
    return QuadratureRule(points, weights, degree=5)


DEFAULT_RULE = radon7()
