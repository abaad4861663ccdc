"""Crossed meshes, refinement, and finite element spaces.

Builds the union-jack triangulation of the unit square, refines it, checks
the structural properties the Taylor-Hood element needs, and writes a VTK
file you can open in ParaView.
"""

import numpy as np

from chds import build_crossed_mesh, function_space, uniform_refine
from chds.io import write_vtk_mesh

mesh = build_crossed_mesh((0.0, 1.0, 0.0, 1.0), 4)
print(f"base mesh: {mesh}")
print(f"  area = {mesh.signed_areas().sum():.12f}")
print(f"  boundary vertices: {len(mesh.boundary_vertices)}")

# every triangle keeps at most one boundary edge -- the mesh condition the
# velocity/pressure pair requires; the constructor enforces it, so simply
# count boundary edges per triangle here
counts = np.zeros(mesh.num_edges, dtype=int)
for ids in mesh.triangle_edges:
    counts[ids] += 1
per_tri = (counts[mesh.triangle_edges] == 1).sum(axis=1)
print(f"  max boundary edges on a single triangle: {per_tri.max()}")

fine = uniform_refine(uniform_refine(mesh))
print(f"twice refined: {fine}")
print(f"  parent chain length: {fine.level}")

for family in ("p1", "p2", "p2v"):
    space = function_space(fine, family)
    print(f"space {family}: {space.dof_count} dofs, "
          f"{len(space.boundary_dofs)} boundary dofs")

path = write_vtk_mesh("mesh_demo.vtk", fine)
print(f"wrote {path}")
