"""Nested-mesh Cauchy convergence study along the linear refinement path
tau proportional to h, mirroring the reference convergence table.

Each level solves the full trajectory on a mesh obtained by uniform
refinement of the base mesh; consecutive final fields are compared in the
fine space after exact prolongation, and rates come from the decay of the
difference norms.  Levels can run in separate processes (CHDS_THREADS).
"""

import json
import math
import os
from dataclasses import dataclass, field

from . import scheme
from .fem import fe_norm, prolongate
from .mesh import build_crossed_mesh, uniform_refine

__all__ = ["ConvergenceReport", "PairResult", "compute_rates",
           "cauchy_convergence", "write_convergence_csv",
           "write_convergence_json", "read_rates_csv"]


def compute_rates(norms, hs):
    """rate_i = log(norm_{i-1}/norm_i) / log(h_{i-1}/h_i)."""
    norms = [float(v) for v in norms]
    hs = [float(v) for v in hs]
    if len(norms) != len(hs) or len(norms) < 2:
        raise ValueError("need equal-length lists with at least two entries")
    if any(v <= 0 for v in norms) or any(v <= 0 for v in hs):
        raise ValueError("norms and mesh sizes must be positive")
    return [math.log(norms[i - 1] / norms[i]) / math.log(hs[i - 1] / hs[i])
            for i in range(1, len(norms))]


@dataclass
class PairResult:
    h_coarse: float
    h_fine: float
    n_coarse: int
    n_fine: int
    dphi_h1: float
    dmu_h1: float
    dp_h1: float
    du_h1: float


@dataclass
class ConvergenceReport:
    pairs: list
    rates_phi: list
    rates_mu: list
    rates_p: list
    rates_u: list
    config_echo: str
    wall_clocks: list = field(default_factory=list)
    level_ns: list = field(default_factory=list)


def _nominal_h(n):
    # Table-1 convention for right isosceles triangles on the unit square
    return math.sqrt(2.0) / n


def _level_config(config, n):
    tau = config.path_const * _nominal_h(n)
    # snap tau so that it divides T exactly in floating point
    m = max(1, round(config.T / tau))
    tau = config.T / m
    return config.with_updates(n=n, tau=tau, snapshot_every=0)


def _run_level(args):
    config, n = args
    cfg = _level_config(config, n)
    summary = scheme.run(cfg, out_dir=None, track_energy_law=False,
                         track_monitors=False)
    state = summary.final_state
    return {
        "n": n,
        "phi": state.phi.coefficients,
        "mu": state.mu.coefficients,
        "p": state.p.coefficients,
        "u": state.u.coefficients,
        "wall": summary.wall_clock,
        "monotone": summary.energy_monotone,
    }


def _max_workers():
    raw = os.environ.get("CHDS_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def cauchy_convergence(config, progress=False):
    """Run the solver on ``config.levels`` nested meshes starting at
    ``config.base_n`` and compute difference norms and rates for phi, mu, p
    (and the velocity, reported without a threshold).

    Returns a ConvergenceReport; any level failure propagates after
    completing no further levels.
    """
    from .config import serialize

    ns = [config.base_n * 2 ** k for k in range(config.levels)]
    for n in ns:
        cfg = _level_config(config, n)
        if abs(round(cfg.T / cfg.tau) * cfg.tau - cfg.T) > 1e-12 * max(1.0, cfg.T):
            raise ValueError(f"tau does not divide T at level n={n}")

    jobs = [(config, n) for n in ns]
    workers = min(_max_workers(), len(ns))
    results = []
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_level, jobs))
    else:
        for job in jobs:
            if progress:
                print(f"level n={job[1]} ...", flush=True)
            results.append(_run_level(job))
            if progress:
                print(f"  done in {results[-1]['wall']:.1f}s", flush=True)

    # rebuild the nested mesh chain for prolongation
    meshes = [build_crossed_mesh((0.0, 1.0, 0.0, 1.0), config.base_n)]
    for _ in range(config.levels - 1):
        meshes.append(uniform_refine(meshes[-1]))
    bundles = [scheme.build_spaces(m) for m in meshes]

    pairs = []
    for lvl in range(config.levels - 1):
        coarse, fine = results[lvl], results[lvl + 1]
        bc, bf = bundles[lvl], bundles[lvl + 1]
        diffs = {}
        for name, space_c, space_f in (
                ("phi", bc.p1, bf.p1), ("mu", bc.p1, bf.p1),
                ("p", bc.p1, bf.p1), ("u", bc.velocity, bf.velocity)):
            from .fem import FeFunction
            cfun = FeFunction(space_c, coarse[name])
            ffun = FeFunction(space_f, fine[name])
            pro = prolongate(cfun, space_f)
            diff = FeFunction(space_f, ffun.coefficients - pro.coefficients)
            diffs[name] = fe_norm(diff, "H1")
        pairs.append(PairResult(
            h_coarse=_nominal_h(coarse["n"]), h_fine=_nominal_h(fine["n"]),
            n_coarse=coarse["n"], n_fine=fine["n"],
            dphi_h1=diffs["phi"], dmu_h1=diffs["mu"], dp_h1=diffs["p"],
            du_h1=diffs["u"]))

    hs = [p.h_fine for p in pairs]
    report = ConvergenceReport(
        pairs=pairs,
        rates_phi=compute_rates([p.dphi_h1 for p in pairs], hs) if len(pairs) > 1 else [],
        rates_mu=compute_rates([p.dmu_h1 for p in pairs], hs) if len(pairs) > 1 else [],
        rates_p=compute_rates([p.dp_h1 for p in pairs], hs) if len(pairs) > 1 else [],
        rates_u=compute_rates([p.du_h1 for p in pairs], hs) if len(pairs) > 1 else [],
        config_echo=serialize(config),
        wall_clocks=[r["wall"] for r in results],
        level_ns=ns)
    return report


CSV_HEADER = ["h_coarse", "h_fine", "dphi_h1", "rate_phi", "dmu_h1",
              "rate_mu", "dp_h1", "rate_p", "du_h1", "rate_u"]


def write_convergence_csv(report, path):
    """Table-1-shaped CSV: one row per mesh pair, rates from the second row."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for i, p in enumerate(report.pairs):
            def rate(rates):
                return f"{rates[i - 1]:.12e}" if i > 0 else ""
            cells = [f"{p.h_coarse:.12e}", f"{p.h_fine:.12e}",
                     f"{p.dphi_h1:.12e}", rate(report.rates_phi),
                     f"{p.dmu_h1:.12e}", rate(report.rates_mu),
                     f"{p.dp_h1:.12e}", rate(report.rates_p),
                     f"{p.du_h1:.12e}", rate(report.rates_u)]
            fh.write(",".join(cells) + "\n")
    return path


def read_rates_csv(path):
    """Parse a convergence CSV back into columns of floats."""
    import csv as _csv
    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        cols = {name: [] for name in header}
        for rec in reader:
            for name, item in zip(header, rec):
                cols[name].append(float(item) if item else None)
    return cols


def write_convergence_json(report, path):
    data = {
        "levels": report.level_ns,
        "wall_clocks": report.wall_clocks,
        "pairs": [{
            "h_coarse": p.h_coarse, "h_fine": p.h_fine,
            "n_coarse": p.n_coarse, "n_fine": p.n_fine,
            "dphi_h1": p.dphi_h1, "dmu_h1": p.dmu_h1,
            "dp_h1": p.dp_h1, "du_h1": p.du_h1,
        } for p in report.pairs],
        "rates": {"phi": report.rates_phi, "mu": report.rates_mu,
                  "p": report.rates_p, "u": report.rates_u},
        "config": report.config_echo,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
    return path
