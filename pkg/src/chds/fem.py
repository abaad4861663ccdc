"""P1/P2 scalar and P2 vector elements on triangles: spaces, assembly, norms.

All integrals use a single 7-point, degree-5-exact rule, which is exact for
every integrand the scheme produces (maximum degree 4).  Assembly is
vectorized over triangles into COO triplets and finalized as CSR.
"""

import numpy as np
import scipy.sparse as sp

from .quadrature import DEFAULT_RULE

__all__ = [
    "FeSpace", "FeFunction", "FemError", "ScalarField", "VectorField",
    "function_space", "interpolate", "assemble_matrix", "assemble_vector",
    "fe_norm", "prolongate", "quad_points", "values_at_quad",
]

FAMILIES = ("p1", "p2", "p2v")


class FemError(ValueError):
    pass


class ScalarField:
    """A scalar field given by callables; gradient is optional.

    ``value(x, y)`` maps coordinate arrays (N,) -> (N,);
    ``gradient(x, y)`` maps to (N, 2).
    """

    def __init__(self, value, gradient=None):
        self.value = value
        self.gradient = gradient


class VectorField:
    """A vector field; ``value(x, y) -> (N, 2)``, ``gradient -> (N, 2, 2)``
    with ``gradient[..., i, j]`` = d(u_i)/d(x_j)."""

    def __init__(self, value, gradient=None):
        self.value = value
        self.gradient = gradient


# ---------------------------------------------------------------------------
# reference basis tables

_QP = DEFAULT_RULE.points      # (nq, 2)
_QW = DEFAULT_RULE.weights     # (nq,)
_NQ = len(_QW)


def _p1_tables(pts):
    x, y = pts[:, 0], pts[:, 1]
    vals = np.stack([1.0 - x - y, x, y], axis=1)
    grads = np.tile(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]),
                    (len(pts), 1, 1))
    return vals, grads


def _p2_tables(pts):
    x, y = pts[:, 0], pts[:, 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    vals = np.stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ], axis=1)
    g0 = np.array([-1.0, -1.0])
    g1 = np.array([1.0, 0.0])
    g2 = np.array([0.0, 1.0])
    grads = np.empty((len(pts), 6, 2))
    grads[:, 0] = np.outer(4 * l0 - 1, g0)
    grads[:, 1] = np.outer(4 * l1 - 1, g1)
    grads[:, 2] = np.outer(4 * l2 - 1, g2)
    grads[:, 3] = 4 * (np.outer(l0, g1) + np.outer(l1, g0))
    grads[:, 4] = 4 * (np.outer(l1, g2) + np.outer(l2, g1))
    grads[:, 5] = 4 * (np.outer(l2, g0) + np.outer(l0, g2))
    return vals, grads


_P1_VALS, _P1_GRADS = _p1_tables(_QP)
_P2_VALS, _P2_GRADS = _p2_tables(_QP)


def _ref_tables(family):
    if family == "p1":
        return _P1_VALS, _P1_GRADS
    return _P2_VALS, _P2_GRADS  # p2 and p2v share scalar tables


# ---------------------------------------------------------------------------
# per-mesh geometry cache

def _geometry(mesh):
    geo = mesh._cache.get("geometry")
    if geo is None:
        p = mesh.vertices[mesh.triangles]          # (nt, 3, 2)
        v0 = p[:, 0]
        jac = np.stack([p[:, 1] - v0, p[:, 2] - v0], axis=2)  # (nt, 2, 2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1]
        inv[:, 0, 1] = -jac[:, 0, 1]
        inv[:, 1, 0] = -jac[:, 1, 0]
        inv[:, 1, 1] = jac[:, 0, 0]
        inv /= det[:, None, None]
        inv_t = inv.transpose(0, 2, 1)
        # physical quadrature points: (nt, nq, 2)
        xq = v0[:, None, :] + np.einsum("tdr,qr->tqd", jac, _QP)
        geo = {"det": det, "inv_t": inv_t, "xq": xq}
        mesh._cache["geometry"] = geo
    return geo


def _phys_grads(mesh, family):
    """Physical basis gradients at quadrature points: (nt, nq, nloc, 2)."""
    key = ("phys_grads", family)
    g = mesh._cache.get(key)
    if g is None:
        geo = _geometry(mesh)
        _, grads = _ref_tables(family)
        g = np.einsum("tij,qlj->tqli", geo["inv_t"], grads)
        mesh._cache[key] = g
    return g


def quad_points(mesh):
    """Physical quadrature points (nt, nq, 2) and weights*|det| (nt, nq)."""
    geo = _geometry(mesh)
    key = "wdet"
    w = mesh._cache.get(key)
    if w is None:
        w = geo["det"][:, None] * _QW[None, :]
        mesh._cache[key] = w
    return geo["xq"], w


# ---------------------------------------------------------------------------
# spaces

class FeSpace:
    """Degree-of-freedom map for one element family on a mesh.

    boundary_dofs is nonempty exactly for the velocity ("p2v") family, where
    homogeneous Dirichlet conditions apply; the scalar families carry natural
    boundary conditions.  mean_zero marks spaces constrained to zero mean
    (the constraint itself is imposed by bordered systems in the solvers).
    """

    def __init__(self, mesh, family, mean_zero=False):
        if family not in FAMILIES:
            raise FemError(f"unknown family {family!r}")
        self.mesh = mesh
        self.family = family
        self.mean_zero = bool(mean_zero)

        nv = mesh.num_vertices
        tris = mesh.triangles
        if family == "p1":
            self.scalar_dof_count = nv
            scalar_cells = tris
            node_coords = mesh.vertices
        else:
            ne = mesh.num_edges
            self.scalar_dof_count = nv + ne
            scalar_cells = np.concatenate(
                [tris, nv + mesh.triangle_edges], axis=1)
            mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]]
                          + mesh.vertices[mesh.edges[:, 1]])
            node_coords = np.concatenate([mesh.vertices, mids])
        self.node_coords = node_coords

        if family == "p2v":
            n = self.scalar_dof_count
            self.dof_count = 2 * n
            self.cell_dofs = np.concatenate(
                [scalar_cells, scalar_cells + n], axis=1)
            bnd_scalar = self._boundary_scalar_nodes()
            self.boundary_dofs = np.concatenate([bnd_scalar, bnd_scalar + n])
        else:
            self.dof_count = self.scalar_dof_count
            self.cell_dofs = scalar_cells
            self.boundary_dofs = np.empty(0, dtype=np.int64)

        self.cell_dofs = np.ascontiguousarray(self.cell_dofs, dtype=np.int64)
        self.boundary_dofs = np.sort(np.asarray(self.boundary_dofs,
                                                dtype=np.int64))
        self._cache = {}

    def _boundary_scalar_nodes(self):
        mesh = self.mesh
        counts = mesh._edge_counts
        bnd_edge_ids = np.nonzero(counts == 1)[0]
        nodes = [mesh.boundary_vertices]
        if self.family != "p1":
            nodes.append(mesh.num_vertices + bnd_edge_ids)
        return np.concatenate(nodes)

    @property
    def free_dofs(self):
        free = self._cache.get("free_dofs")
        if free is None:
            mask = np.ones(self.dof_count, dtype=bool)
            mask[self.boundary_dofs] = False
            free = np.nonzero(mask)[0]
            self._cache["free_dofs"] = free
        return free

    def zeros(self):
        return FeFunction(self, np.zeros(self.dof_count))

    def mass_matrix(self):
        m = self._cache.get("mass")
        if m is None:
            kind = "vector_mass" if self.family == "p2v" else "mass"
            m = assemble_matrix(kind, self, self)
            self._cache["mass"] = m
        return m

    def stiffness_matrix(self):
        k = self._cache.get("stiffness")
        if k is None:
            kind = "vector_stiffness" if self.family == "p2v" else "stiffness"
            k = assemble_matrix(kind, self, self)
            self._cache["stiffness"] = k
        return k

    def mass_of_constants(self):
        """The vector m with m_i = (1, basis_i); (f, 1) = m @ coefficients."""
        m = self._cache.get("mass_vec")
        if m is None:
            m = np.asarray(self.mass_matrix().sum(axis=1)).ravel()
            self._cache["mass_vec"] = m
        return m

    def __repr__(self):
        return (f"FeSpace({self.family!r}, dofs={self.dof_count}, "
                f"mesh={self.mesh!r})")


def function_space(mesh, family, mean_zero=False):
    key = ("space", family, mean_zero)
    space = mesh._cache.get(key)
    if space is None:
        space = FeSpace(mesh, family, mean_zero)
        mesh._cache[key] = space
    return space


class FeFunction:
    """Coefficient vector in an FeSpace."""

    def __init__(self, space, coefficients):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (space.dof_count,):
            raise FemError(
                f"coefficient length {coefficients.shape} does not match "
                f"dof count {space.dof_count}")
        self.space = space
        self.coefficients = coefficients

    def copy(self):
        return FeFunction(self.space, self.coefficients.copy())

    def mean(self):
        m = self.space.mass_of_constants()
        return float(m @ self.coefficients) / self.space.mesh.area()


def interpolate(space, f):
    """Nodal interpolant of a callable (or Scalar/VectorField)."""
    value = f.value if isinstance(f, (ScalarField, VectorField)) else f
    x, y = space.node_coords[:, 0], space.node_coords[:, 1]
    vals = np.asarray(value(x, y), dtype=float)
    if space.family == "p2v":
        if vals.shape != (len(x), 2):
            raise FemError("vector interpolation requires values of shape (N, 2)")
        coeff = np.concatenate([vals[:, 0], vals[:, 1]])
    else:
        vals = np.broadcast_to(vals, x.shape).astype(float)
        coeff = vals
    return FeFunction(space, coeff)


# ---------------------------------------------------------------------------
# evaluation helpers

def values_at_quad(f):
    """Values of an FeFunction at the quadrature points: (nt, nq) scalars
    or (nt, nq, 2) vectors."""
    space = f.space
    vals, _ = _ref_tables(space.family)
    if space.family == "p2v":
        n = space.scalar_dof_count
        cx = f.coefficients[:n][space.cell_dofs[:, :6]]
        cy = f.coefficients[n:][space.cell_dofs[:, :6]]
        vx = np.einsum("tl,ql->tq", cx, vals)
        vy = np.einsum("tl,ql->tq", cy, vals)
        return np.stack([vx, vy], axis=2)
    c = f.coefficients[space.cell_dofs]
    return np.einsum("tl,ql->tq", c, vals)


def _grads_at_quad(f):
    space = f.space
    g = _phys_grads(space.mesh, space.family)
    if space.family == "p2v":
        n = space.scalar_dof_count
        cx = f.coefficients[:n][space.cell_dofs[:, :6]]
        cy = f.coefficients[n:][space.cell_dofs[:, :6]]
        gx = np.einsum("tl,tqld->tqd", cx, g)
        gy = np.einsum("tl,tqld->tqd", cy, g)
        return np.stack([gx, gy], axis=2)  # (nt, nq, 2, 2)
    c = f.coefficients[space.cell_dofs]
    return np.einsum("tl,tqld->tqd", c, g)


# ---------------------------------------------------------------------------
# assembly

def _check_same_mesh(*spaces):
    mesh = spaces[0].mesh
    for s in spaces[1:]:
        if s.mesh is not mesh:
            raise FemError("spaces live on different meshes")
    return mesh


def _scatter(data, rows, cols, shape):
    mat = sp.coo_matrix((data.ravel(), (rows.ravel(), cols.ravel())),
                        shape=shape)
    return mat.tocsr()


def _pair_indices(test, trial):
    rows = np.repeat(test.cell_dofs, trial.cell_dofs.shape[1], axis=1)
    cols = np.tile(trial.cell_dofs, (1, test.cell_dofs.shape[1]))
    return rows, cols


def assemble_matrix(kind, trial, test, phi=None):
    """Assemble a bilinear form into a CSR matrix of shape (test, trial).

    Kinds
    -----
    mass, stiffness          scalar families (trial.family == test.family)
    vector_mass, vector_stiffness
                             p2v velocity blocks
    divergence               (div v, q): trial = p2v, test = scalar
    convection               (grad(phi) . v, q): trial = p2v, test = scalar,
                             phi a P1 function on the same mesh
    cubic_jacobian           (3 phi^2 u, v) on P1, the Newton linearization
                             of the cubic term
    """
    mesh = _check_same_mesh(trial, test)
    geo = _geometry(mesh)
    det, w = geo["det"], _QW

    if kind in ("mass", "stiffness"):
        if trial.family != test.family or trial.family == "p2v":
            raise FemError(f"{kind} requires matching scalar families")
        vals, _ = _ref_tables(trial.family)
        if kind == "mass":
            local = np.einsum("q,t,qi,qj->tij", w, det, vals, vals)
        else:
            g = _phys_grads(mesh, trial.family)
            local = np.einsum("q,t,tqid,tqjd->tij", w, det, g, g)
        rows, cols = _pair_indices(test, trial)
        return _scatter(local, rows, cols,
                        (test.dof_count, trial.dof_count))

    if kind in ("vector_mass", "vector_stiffness"):
        if trial.family != "p2v" or test.family != "p2v":
            raise FemError(f"{kind} requires the p2v family")
        scalar = function_space(mesh, "p2")
        block = (scalar.mass_matrix() if kind == "vector_mass"
                 else scalar.stiffness_matrix())
        return sp.block_diag([block, block]).tocsr()

    if kind == "divergence":
        if trial.family != "p2v" or test.family == "p2v":
            raise FemError("divergence maps p2v trial to a scalar test space")
        tvals, _ = _ref_tables(test.family)
        g2 = _phys_grads(mesh, "p2")
        dx = np.einsum("q,t,qi,tqj->tij", w, det, tvals, g2[..., 0])
        dy = np.einsum("q,t,qi,tqj->tij", w, det, tvals, g2[..., 1])
        local = np.concatenate([dx, dy], axis=2)
        rows, cols = _pair_indices(test, trial)
        return _scatter(local, rows, cols,
                        (test.dof_count, trial.dof_count))

    if kind == "convection":
        if phi is None or phi.space.family != "p1":
            raise FemError("convection requires a P1 phi argument")
        _check_same_mesh(trial, phi.space)
        if trial.family != "p2v" or test.family == "p2v":
            raise FemError("convection maps p2v trial to a scalar test space")
        lm = _p1_p2_local_mass(mesh, test)
        gphi = _p1_cell_gradients(phi)
        local = np.concatenate([gphi[:, None, None, 0] * lm,
                                gphi[:, None, None, 1] * lm], axis=2)
        rows, cols = _pair_indices(test, trial)
        return _scatter(local, rows, cols,
                        (test.dof_count, trial.dof_count))

    if kind == "cubic_jacobian":
        if phi is None or phi.space.family != "p1":
            raise FemError("cubic_jacobian requires a P1 phi argument")
        if trial.family != "p1" or test.family != "p1":
            raise FemError("cubic_jacobian is a P1 form")
        phiq = values_at_quad(phi)
        _, wdet = quad_points(mesh)
        pair = (_P1_VALS[:, :, None] * _P1_VALS[:, None, :]).reshape(_NQ, 9)
        local = (3.0 * (wdet * phiq * phiq) @ pair).reshape(-1, 3, 3)
        rows, cols = _pair_indices(test, trial)
        return _scatter(local, rows, cols,
                        (test.dof_count, trial.dof_count))

    raise FemError(f"unknown matrix kind {kind!r}")


def _p1_p2_local_mass(mesh, p1_space):
    """Per-triangle (P1 test x P2 scalar trial) mass blocks, cached."""
    key = "p1_p2_local_mass"
    lm = mesh._cache.get(key)
    if lm is None:
        det = _geometry(mesh)["det"]
        lm = np.einsum("q,t,qi,qj->tij", _QW, det, _P1_VALS, _P2_VALS)
        mesh._cache[key] = lm
    return lm


def _p1_cell_gradients(phi):
    """Element-constant gradient of a P1 function: (nt, 2)."""
    g = _phys_grads(phi.space.mesh, "p1")[:, 0]  # q-independent
    c = phi.coefficients[phi.space.cell_dofs]
    return np.einsum("tl,tld->td", c, g)


def assemble_vector(kind, test, phi=None, g=None):
    """Assemble a linear functional into a dense vector over the test space.

    Kinds: ``cubic`` gives (phi^3, psi_i) for P1 phi; ``weighted_mass``
    gives (g, psi_i) for an FeFunction g on the same mesh.
    """
    mesh = test.mesh
    det = _geometry(mesh)["det"]
    tvals, _ = _ref_tables(test.family)
    if test.family == "p2v":
        raise FemError("vector test spaces are not supported here")

    if kind == "cubic":
        if phi is None or phi.space.family != "p1":
            raise FemError("cubic requires a P1 phi argument")
        _check_same_mesh(test, phi.space)
        v = values_at_quad(phi)
        fq = v * v * v  # much faster than v**3 for large arrays
    elif kind == "weighted_mass":
        if g is None:
            raise FemError("weighted_mass requires g")
        _check_same_mesh(test, g.space)
        fq = values_at_quad(g)
    else:
        raise FemError(f"unknown vector kind {kind!r}")

    _, wdet = quad_points(mesh)
    local = (wdet * fq) @ tvals
    return np.bincount(test.cell_dofs.ravel(), weights=local.ravel(),
                       minlength=test.dof_count)


class ConvectionOperator:
    """Matrix-free action of the convection pairing (grad(phi) . v, q) for
    one fixed P1 phi: ``apply`` maps velocity coefficients to the scalar
    test space, ``apply_T`` is the transpose.  Equivalent to the assembled
    convection matrix, without the per-step sparse rebuild."""

    def __init__(self, vel_space, test_space, phi):
        mesh = _check_same_mesh(vel_space, test_space, phi.space)
        if vel_space.family != "p2v" or test_space.family == "p2v":
            raise FemError("convection maps p2v trial to a scalar test space")
        self.vel_space = vel_space
        self.test_space = test_space
        self.lm = _p1_p2_local_mass(mesh, test_space)        # (nt, 3, 6)
        g = _p1_cell_gradients(phi)
        self.gx, self.gy = g[:, 0].copy(), g[:, 1].copy()
        self.cells_p2 = vel_space.cell_dofs[:, :6]
        self.cells_test = test_space.cell_dofs
        self.n2 = vel_space.scalar_dof_count

    def apply(self, u_coeffs):
        ux = u_coeffs[: self.n2][self.cells_p2]
        uy = u_coeffs[self.n2:][self.cells_p2]
        local = (self.gx[:, None] * np.einsum("tij,tj->ti", self.lm, ux)
                 + self.gy[:, None] * np.einsum("tij,tj->ti", self.lm, uy))
        return np.bincount(self.cells_test.ravel(), weights=local.ravel(),
                           minlength=self.test_space.dof_count)

    def apply_T(self, m_coeffs):
        mloc = m_coeffs[self.cells_test]                      # (nt, 3)
        s = np.einsum("tij,ti->tj", self.lm, mloc)            # (nt, 6)
        out = np.zeros(self.vel_space.dof_count)
        out[: self.n2] = np.bincount(
            self.cells_p2.ravel(), weights=(self.gx[:, None] * s).ravel(),
            minlength=self.n2)
        out[self.n2:] = np.bincount(
            self.cells_p2.ravel(), weights=(self.gy[:, None] * s).ravel(),
            minlength=self.n2)
        return out


def load_vector(test, func):
    """Quadrature load vector (f, psi_i) for a callable f(x, y)."""
    xq, wdet = quad_points(test.mesh)
    fq = np.asarray(func(xq[..., 0], xq[..., 1]), dtype=float)
    tvals, _ = _ref_tables(test.family)
    if test.family == "p2v":
        local_x = np.einsum("tq,tq,qi->ti", wdet, fq[..., 0], tvals)
        local_y = np.einsum("tq,tq,qi->ti", wdet, fq[..., 1], tvals)
        local = np.concatenate([local_x, local_y], axis=1)
    else:
        local = np.einsum("tq,tq,qi->ti", wdet, fq, tvals)
    return np.bincount(test.cell_dofs.ravel(), weights=local.ravel(),
                       minlength=test.dof_count)


# ---------------------------------------------------------------------------
# norms

def fe_norm(f, kind="L2"):
    """L2 / H1-semi / H1 norms by quadrature; Linf-nodal is the max absolute
    coefficient (the standard nodal surrogate for P1/P2)."""
    space = f.space
    c = f.coefficients
    if kind == "Linf-nodal":
        return float(np.abs(c).max()) if len(c) else 0.0
    if kind == "L2":
        return float(np.sqrt(max(c @ (space.mass_matrix() @ c), 0.0)))
    if kind == "H1-semi":
        return float(np.sqrt(max(c @ (space.stiffness_matrix() @ c), 0.0)))
    if kind == "H1":
        m = c @ (space.mass_matrix() @ c)
        k = c @ (space.stiffness_matrix() @ c)
        return float(np.sqrt(max(m + k, 0.0)))
    raise FemError(f"unknown norm kind {kind!r}")


# ---------------------------------------------------------------------------
# prolongation between nested meshes

def _ancestor_triangles(fine_mesh, coarse_mesh):
    """Index of the coarse triangle containing each fine triangle."""
    anc = np.arange(fine_mesh.num_triangles)
    m = fine_mesh
    while m is not coarse_mesh:
        if m.parent is None:
            raise FemError("meshes are not nested")
        anc = m.parent_triangle[anc]
        m = m.parent
    return anc


def prolongate(coarse_field, fine_space):
    """Exact nodal injection of a coarse function into a nested fine space.

    The fine mesh must be a refinement descendant of the coarse mesh and the
    families must match; the result is pointwise identical to the input.
    """
    cspace = coarse_field.space
    if cspace.family != fine_space.family:
        raise FemError(
            f"family mismatch: {cspace.family!r} vs {fine_space.family!r}")
    fmesh, cmesh = fine_space.mesh, cspace.mesh
    if not fmesh.is_descendant_of(cmesh):
        raise FemError("fine mesh is not a refinement descendant of the coarse mesh")
    if fmesh is cmesh:
        return coarse_field.copy()

    anc = _ancestor_triangles(fmesh, cmesh)

    # one fine triangle owning each scalar node
    nscalar = (fine_space.scalar_dof_count if fine_space.family == "p2v"
               else fine_space.dof_count)
    owner = np.empty(nscalar, dtype=np.int64)
    scal_cells = fine_space.cell_dofs[:, :fine_space.cell_dofs.shape[1] // 2] \
        if fine_space.family == "p2v" else fine_space.cell_dofs
    tri_of = np.repeat(np.arange(fmesh.num_triangles),
                       scal_cells.shape[1])
    owner[scal_cells.ravel()] = tri_of

    pts = fine_space.node_coords
    ct = anc[owner]                            # coarse triangle per node
    p = cmesh.vertices[cmesh.triangles[ct]]    # (N, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    rel = pts - p[:, 0]
    xi = (rel[:, 0] * d2[:, 1] - rel[:, 1] * d2[:, 0]) / det
    eta = (d1[:, 0] * rel[:, 1] - d1[:, 1] * rel[:, 0]) / det
    ref = np.stack([xi, eta], axis=1)

    if cspace.family == "p1":
        basis = np.stack([1 - xi - eta, xi, eta], axis=1)
    else:
        basis, _ = _p2_tables(ref)

    if cspace.family == "p2v":
        n = cspace.scalar_dof_count
        cd = cspace.cell_dofs[ct][:, :6]
        vx = np.einsum("nl,nl->n", coarse_field.coefficients[:n][cd], basis)
        vy = np.einsum("nl,nl->n", coarse_field.coefficients[n:][cd], basis)
        coeff = np.concatenate([vx, vy])
    else:
        cd = cspace.cell_dofs[ct]
        coeff = np.einsum("nl,nl->n", coarse_field.coefficients[cd], basis)
    return FeFunction(fine_space, coeff)
