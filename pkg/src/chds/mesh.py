"""Crossed triangulations of a rectangle and uniform (red) refinement.

The crossed ("union-jack") pattern splits every grid cell into four right
isosceles triangles by both diagonals.  Unlike the single-diagonal split,
no triangle ever carries two boundary edges, which the Taylor-Hood element
requires of the mesh family.  Meshes are immutable after construction and
refinement records the parent so nested-space prolongation stays exact.
"""

import numpy as np

__all__ = ["Mesh", "MeshError", "build_crossed_mesh", "uniform_refine"]


class MeshError(ValueError):
    pass


class Mesh:
    """Conforming triangulation of a rectangle.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    boundary_vertices : sorted int array
    h : float
        Mesh size metric: half the grid-cell diagonal (sqrt(2)*side/(2n)
        on an n-celled square); halves under refinement.
    level : int
        Refinement depth, 0 for a freshly built mesh.
    parent : Mesh or None
    parent_triangle : (nt,) int array or None
        For refined meshes, the parent triangle containing each child.
    """

    def __init__(self, vertices, triangles, h, domain, level=0, parent=None,
                 parent_triangle=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.h = float(h)
        self.domain = tuple(float(v) for v in domain)  # (x0, x1, y0, y1)
        self.level = int(level)
        self.parent = parent
        self.parent_triangle = (None if parent_triangle is None
                                else np.asarray(parent_triangle, dtype=np.int64))
        self._cache = {}

        edges, tri_edges, counts = _edge_tables(self.triangles)
        self.edges = edges                      # (ne, 2) sorted vertex pairs
        self.triangle_edges = tri_edges         # (nt, 3) edge ids
        self._edge_counts = counts
        bnd_edges = edges[counts == 1]
        self.boundary_edges = bnd_edges
        self.boundary_vertices = np.unique(bnd_edges)

        self._validate()
        for arr in (self.vertices, self.triangles, self.edges,
                    self.triangle_edges, self.boundary_edges,
                    self.boundary_vertices):
            arr.setflags(write=False)

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    @property
    def num_edges(self):
        return len(self.edges)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def area(self):
        x0, x1, y0, y1 = self.domain
        return (x1 - x0) * (y1 - y0)

    def _validate(self):
        if np.any(self.signed_areas() <= 0.0):
            raise MeshError("triangle with non-positive signed area")
        if np.any(self._edge_counts > 2):
            raise MeshError("non-conforming edge shared by > 2 triangles")
        # Taylor-Hood stability: at most one boundary edge per triangle
        on_bnd = self._edge_counts[self.triangle_edges] == 1
        if np.any(on_bnd.sum(axis=1) > 1):
            raise MeshError("triangle with more than one boundary edge")
        if self.parent is not None:
            nvp = self.parent.num_vertices
            if not np.array_equal(self.vertices[:nvp], self.parent.vertices):
                raise MeshError("parent vertices are not a prefix of the child's")

    def is_descendant_of(self, other):
        m = self
        while m is not None:
            if m is other:
                return True
            m = m.parent
        return False

    def __repr__(self):
        return (f"Mesh(level={self.level}, vertices={self.num_vertices}, "
                f"triangles={self.num_triangles}, h={self.h:.6g})")


def _edge_tables(triangles):
    """Unique sorted edges, per-triangle edge ids, and incidence counts."""
    raw = np.concatenate([triangles[:, [0, 1]],
                          triangles[:, [1, 2]],
                          triangles[:, [2, 0]]])
    raw = np.sort(raw, axis=1)
    edges, inverse, counts = np.unique(raw, axis=0, return_inverse=True,
                                       return_counts=True)
    nt = len(triangles)
    tri_edges = np.stack([inverse[:nt], inverse[nt:2 * nt], inverse[2 * nt:]],
                         axis=1)
    return edges, tri_edges, counts


def build_crossed_mesh(domain, n):
    """Crossed triangulation of the rectangle (x0,x1) x (y0,y1), n cells per side.

    Each of the n*n cells is split into 4 right isosceles triangles by both
    diagonals meeting at a center vertex: 4n^2 triangles, (n+1)^2 + n^2
    vertices.  Vertices are ordered lexicographically by (y, x).
    """
    x0, x1, y0, y1 = (float(v) for v in domain)
    n = int(n)
    if n < 1:
        raise MeshError(f"n must be >= 1, got {n}")
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate rectangle {domain}")

    dx = (x1 - x0) / n
    dy = (y1 - y0) / n
    band = 2 * n + 1  # vertices per (grid row + center row) band

    def grid(i, j):
        return j * band + i

    def center(i, j):
        return j * band + (n + 1) + i

    xs = x0 + dx * np.arange(n + 1)
    cxs = x0 + dx * (np.arange(n) + 0.5)
    verts = []
    for j in range(n + 1):
        row = np.column_stack([xs, np.full(n + 1, y0 + dy * j)])
        verts.append(row)
        if j < n:
            crow = np.column_stack([cxs, np.full(n, y0 + dy * (j + 0.5))])
            verts.append(crow)
    vertices = np.concatenate(verts)

    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    c00 = grid(ii, jj)
    c10 = grid(ii + 1, jj)
    c11 = grid(ii + 1, jj + 1)
    c01 = grid(ii, jj + 1)
    m = center(ii, jj)
    triangles = np.concatenate([
        np.stack([c00, c10, m], axis=1),
        np.stack([c10, c11, m], axis=1),
        np.stack([c11, c01, m], axis=1),
        np.stack([c01, c00, m], axis=1),
    ])

    h = 0.5 * float(np.hypot(dx, dy))
    return Mesh(vertices, triangles, h, (x0, x1, y0, y1))


def uniform_refine(mesh):
    """Quadrisect every triangle through its edge midpoints.

    Parent vertices keep their indices (a prefix of the child vertex list);
    the new midpoint vertices are appended sorted by (y, x).
    """
    nv = mesh.num_vertices
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    order = np.lexsort((mids[:, 0], mids[:, 1]))
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(len(order))
    vertices = np.concatenate([mesh.vertices, mids[order]])

    # global dof of each parent edge midpoint
    mid_id = nv + rank
    t = mesh.triangles
    m01 = mid_id[mesh.triangle_edges[:, 0]]
    m12 = mid_id[mesh.triangle_edges[:, 1]]
    m20 = mid_id[mesh.triangle_edges[:, 2]]
    children = np.concatenate([
        np.stack([t[:, 0], m01, m20], axis=1),
        np.stack([t[:, 1], m12, m01], axis=1),
        np.stack([t[:, 2], m20, m12], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ])
    parent_triangle = np.tile(np.arange(mesh.num_triangles), 4)

    return Mesh(vertices, children, mesh.h / 2.0, mesh.domain,
                level=mesh.level + 1, parent=mesh,
                parent_triangle=parent_triangle)
