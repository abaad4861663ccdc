import numpy as np
import pytest

from chds import build_crossed_mesh, function_space
from chds.scheme import build_spaces


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def unit_square_n2():
    return build_crossed_mesh((0.0, 1.0, 0.0, 1.0), 2)


@pytest.fixture(scope="session")
def unit_square_n4():
    return build_crossed_mesh((0.0, 1.0, 0.0, 1.0), 4)


@pytest.fixture(scope="session")
def unit_square_n8():
    return build_crossed_mesh((0.0, 1.0, 0.0, 1.0), 8)


@pytest.fixture(scope="session")
def spaces_n4(unit_square_n4):
    return build_spaces(unit_square_n4)


@pytest.fixture(scope="session")
def spaces_n8(unit_square_n8):
    return build_spaces(unit_square_n8)


@pytest.fixture(scope="session")
def p1_n8(unit_square_n8):
    return function_space(unit_square_n8, "p1")


def pytest_addoption(parser):
    parser.addoption(
        "--finest", action="store_true", default=False,
        help="include the optional n=128 level in the convergence acceptance "
             "test")


# a degree-6 exact triangle rule used as the independent quadrature oracle
# (12-point Dunavant rule); weights sum to the reference area 1/2
_D6_A1 = 0.063089014491502
_D6_A2 = 0.249286745170910
_D6_B = (0.053145049844817, 0.310352451033784)
_D6_W1 = 0.025422453185104
_D6_W2 = 0.058393137863189
_D6_W3 = 0.041425537809187


def degree6_rule():
    pts, wts = [], []
    for a, w in ((_D6_A1, _D6_W1), (_D6_A2, _D6_W2)):
        pts += [(a, a), (1 - 2 * a, a), (a, 1 - 2 * a)]
        wts += [w, w, w]
    b1, b2 = _D6_B
    b0 = 1.0 - b1 - b2
    for x, y in ((b0, b1), (b1, b0), (b0, b2), (b2, b0), (b1, b2), (b2, b1)):
        pts.append((x, y))
        wts.append(_D6_W3)
    return np.array(pts), np.array(wts)


def integrate_deg6(mesh, func):
    """Independent quadrature of func(x, y) over the mesh (degree-6 rule)."""
    pts, wts = degree6_rule()
    p = mesh.vertices[mesh.triangles]
    v0 = p[:, 0]
    jac = np.stack([p[:, 1] - v0, p[:, 2] - v0], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    xq = v0[:, None, :] + np.einsum("tdr,qr->tqd", jac, pts)
    vals = func(xq[..., 0], xq[..., 1])
    return float(np.einsum("t,q,tq->", det, wts, vals))
