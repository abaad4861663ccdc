"""Batch command line: ``chds run|converge|diagnose|mesh-info``.

Exit codes: 0 success, 2 configuration/usage error, 3 solver failure,
4 I/O failure, 1 unexpected error.
"""

import argparse
import os
import sys

from . import diagnostics, harness, scheme
from .config import Config, ConfigError, parse_config
from .io import write_vtk_mesh
from .linalg import SolverFailure
from .mesh import MeshError, build_crossed_mesh

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

DIAGNOSE_THRESHOLDS = {
    "mass_dev": 1e-10,
    "div_res": 1e-10,
    "mu_mean_res": 1e-9,
    "xi_mean_res": 1e-10,
    "p_mean_res": 1e-10,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="chds",
        description="Mixed finite element solver for a coupled "
                    "phase-field / Darcy-Stokes system.")
    parser.add_argument("command",
                        choices=["run", "converge", "diagnose", "mesh-info"])
    parser.add_argument("--config", default=None,
                        help="path to a key = value config file")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--snapshots", type=int, default=None,
                        help="VTK snapshot cadence in steps (0 = off)")
    parser.add_argument("--levels", type=int, default=None,
                        help="number of nested mesh levels for 'converge'")
    parser.add_argument("--finest", action="store_true",
                        help="add the optional finest level (n = 128 for the "
                             "default base mesh)")
    return parser


def _load_config(args):
    if args.config is None:
        cfg = Config()
    else:
        cfg = parse_config(args.config)
    updates = {}
    if args.out is not None:
        updates["out_dir"] = args.out
    if args.snapshots is not None:
        updates["snapshot_every"] = args.snapshots
    if args.levels is not None:
        updates["levels"] = args.levels
    if args.finest:
        updates["levels"] = (updates.get("levels", cfg.levels)) + 1
    if updates:
        cfg = cfg.with_updates(**updates)
    from .config import validate
    validate(cfg)
    return cfg


def cmd_run(cfg):
    summary = scheme.run(cfg, progress=True)
    print(f"completed {len(summary.rows)} steps; "
          f"E0 = {summary.energy_initial:.9e}, "
          f"E_final = {summary.rows[-1][2]:.9e}" if summary.rows else
          "completed 0 steps")
    print(f"energy monotone: {summary.energy_monotone}")
    print(f"max |mass deviation| = {summary.max_mass_dev:.3e}")
    print(f"max divergence residual = {summary.max_div_res:.3e}")
    print(f"max mu-mean residual = {summary.max_mu_mean_res:.3e}")
    if summary.csv_path:
        print(f"diagnostics: {summary.csv_path}")
    return EXIT_OK


def cmd_converge(cfg):
    report = harness.cauchy_convergence(cfg, progress=True)
    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, "convergence.csv")
    json_path = os.path.join(cfg.out_dir, "convergence.json")
    harness.write_convergence_csv(report, csv_path)
    harness.write_convergence_json(report, json_path)
    print("pair (n_c -> n_f)   |d_phi|_H1   |d_mu|_H1   |d_p|_H1   |d_u|_H1")
    for p in report.pairs:
        print(f"{p.n_coarse:4d} -> {p.n_fine:4d}     {p.dphi_h1:.6e} "
              f"{p.dmu_h1:.6e} {p.dp_h1:.6e} {p.du_h1:.6e}")
    for name, rates in (("phi", report.rates_phi), ("mu", report.rates_mu),
                        ("p", report.rates_p), ("u", report.rates_u)):
        if rates:
            print(f"rates {name}: " + ", ".join(f"{r:.3f}" for r in rates))
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


def cmd_diagnose(cfg):
    mesh = build_crossed_mesh((0.0, 1.0, 0.0, 1.0), cfg.n)
    spaces = scheme.build_spaces(mesh)
    stepper = scheme.Stepper(spaces, cfg.make_params())
    state = stepper.initialize(cfg.initial_field(), mode=cfg.init_mode)
    mon = diagnostics.Monitor(spaces, stepper.params)
    e0 = mon.energy(state)
    nxt, stats = stepper.step(state)
    e1 = mon.energy(nxt)
    inv = mon.invariant_residuals(nxt)
    law = mon.energy_law_residual(state, nxt, e_prev=e0, e_next=e1)
    print(f"initial energy = {e0.total:.9e}")
    print(f"one step: E = {e1.total:.9e}  (picard {stats.picard_iters}, "
          f"newton {stats.newton_iters})")
    print(f"energy-law residual = {law:.3e}")
    ok = abs(law) <= 1e-8 * max(1.0, e0.total)
    ok &= e1.total <= e0.total + 1e-10 * max(1.0, e0.total)
    for name, thresh in DIAGNOSE_THRESHOLDS.items():
        val = getattr(inv, name)
        good = val <= thresh
        ok &= good
        print(f"{name} = {val:.3e}  (threshold {thresh:.0e}) "
              f"{'ok' if good else 'FAIL'}")
    return EXIT_OK if ok else EXIT_SOLVER


def cmd_mesh_info(cfg):
    mesh = build_crossed_mesh((0.0, 1.0, 0.0, 1.0), cfg.n)
    spaces = scheme.build_spaces(mesh)
    print(f"crossed mesh on (0,1)^2 with n = {cfg.n}")
    print(f"{mesh.num_triangles} triangles, {mesh.num_vertices} vertices, "
          f"{mesh.num_edges} edges")
    print(f"h = {mesh.h:.9e}")
    print(f"boundary vertices: {len(mesh.boundary_vertices)}")
    print(f"P1 dofs: {spaces.p1.dof_count}")
    print(f"velocity dofs: {spaces.velocity.dof_count} "
          f"({len(spaces.velocity.boundary_dofs)} on the boundary)")
    if cfg.out_dir and cfg.out_dir != ".":
        os.makedirs(cfg.out_dir, exist_ok=True)
        path = write_vtk_mesh(os.path.join(cfg.out_dir, "mesh.vtk"), mesh)
        print(f"wrote {path}")
    return EXIT_OK


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "converge":
            return cmd_converge(cfg)
        if args.command == "diagnose":
            return cmd_diagnose(cfg)
        return cmd_mesh_info(cfg)
    except (ConfigError, MeshError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # pragma: no cover
        print(f"unexpected error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
