"""Output writers: VTK legacy ASCII for meshes and field snapshots, and the
diagnostics CSV reader used for round-trips."""

import csv

__all__ = ["write_vtk_mesh", "write_vtk_state", "read_csv_rows"]


def _vtk_header(fh, title, mesh):
    fh.write("# vtk DataFile Version 3.0\n")
    fh.write(f"{title}\n")
    fh.write("ASCII\n")
    fh.write("DATASET UNSTRUCTURED_GRID\n")
    fh.write(f"POINTS {mesh.num_vertices} double\n")
    for x, y in mesh.vertices:
        fh.write(f"{x:.12e} {y:.12e} 0.0\n")
    nt = mesh.num_triangles
    fh.write(f"CELLS {nt} {4 * nt}\n")
    for a, b, c in mesh.triangles:
        fh.write(f"3 {a} {b} {c}\n")
    fh.write(f"CELL_TYPES {nt}\n")
    for _ in range(nt):
        fh.write("5\n")


def write_vtk_mesh(path, mesh, title="chds mesh"):
    """Mesh-only export (POINTS / CELLS, cell type 5)."""
    with open(path, "w", encoding="utf-8") as fh:
        _vtk_header(fh, title, mesh)
    return path


def write_vtk_state(path, state, title="chds state"):
    """Point-data export of one state: scalars phi, mu, xi, p and the
    2-component velocity vector u at the mesh vertices."""
    mesh = state.phi.space.mesh
    nv = mesh.num_vertices
    scalars = {
        "phi": state.phi.coefficients[:nv],
        "mu": state.mu.coefficients[:nv],
        "xi": state.xi.coefficients[:nv],
        "p": state.p.coefficients[:nv],
    }
    n2 = state.u.space.scalar_dof_count
    ux = state.u.coefficients[:n2][:nv]
    uy = state.u.coefficients[n2:][:nv]
    with open(path, "w", encoding="utf-8") as fh:
        _vtk_header(fh, title, mesh)
        fh.write(f"POINT_DATA {nv}\n")
        for name, values in scalars.items():
            fh.write(f"SCALARS {name} double 1\n")
            fh.write("LOOKUP_TABLE default\n")
            for v in values:
                fh.write(f"{v:.12e}\n")
        fh.write("VECTORS u double\n")
        for vx, vy in zip(ux, uy):
            fh.write(f"{vx:.12e} {vy:.12e} 0.0\n")
    return path


def read_csv_rows(path):
    """Read a diagnostics CSV back into (header, rows of floats/ints)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for rec in reader:
            vals = []
            for item in rec:
                try:
                    v = int(item)
                except ValueError:
                    v = float(item)
                vals.append(v)
            rows.append(vals)
    return header, rows
