"""``rfis build|verify|render|dim --config <path> [--out <dir>]``.

Exit codes: 0 success, 2 validation error, 3 numerical non-convergence,
4 hypothesis / uniformity gate.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import Prepared, prepare_path
from .core import (
    check_collinearity_hypothesis,
    corner_mapping_residual,
    row_sums_exact,
    verify_matching,
)
from .dimension import dimension_bounds, empirical_dimension, scaling_matrices
from .errors import NotUniform, RfisError
from .grid import certify_uniform, tau_inverse
from .render import chaos_game, deterministic_render, variation_bound_check

log = logging.getLogger("rfis")


def _out_dir(prep: Prepared, config_path: Path, override: str | None) -> Path:
    out = Path(override) if override else config_path.parent / prep.cfg.outputs.dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _certificate(prep: Prepared):
    if not prep.uniform:
        raise NotUniform("grid spacing is not uniform")
    try:
        return certify_uniform(prep.grid, prep.system.layout)
    except RfisError as exc:
        raise NotUniform(str(exc)) from exc


def build_summary(prep: Prepared) -> dict:
    system = prep.system
    g = prep.grid
    try:
        a = _certificate(prep).a
    except NotUniform:
        a = None
    hyp, witness = check_collinearity_hypothesis(g, system.layout)
    return {
        "N": g.num_regions,
        "n": g.n,
        "m": g.m,
        "l": system.layout.l,
        "a": a,
        "uniform": prep.uniform and a is not None,
        "irreducible": system.irreducible,
        "forced": system.forced,
        "s_cap": system.scale.cap,
        "s_bounds": {f"{i},{j}": list(system.scale.bounds[(i, j)]) for i, j in g.regions()},
        "a_s": [int(np.count_nonzero(row)) for row in system.M],
        "hypothesis_ok": hyp,
        "hypothesis_witness": witness,
        "base": system.base.kind,
        "residual": system.residual,
        "planar_map": prep.planar.to_dict(),
        "fingerprint": system.fingerprint(),
        "warnings": sorted(set(prep.warnings) | set(system.warnings)),
    }


def cmd_build(prep: Prepared, out: Path) -> dict:
    summary = build_summary(prep)
    io.write_json(summary, out / "build.json")
    if prep.cfg.outputs.matrices:
        io.write_matrix_csv(prep.system.M, out / "M.csv")
        io.write_matrix_csv(prep.system.C, out / "C.csv")
    return summary


def verify_report(prep: Prepared) -> dict:
    system = prep.system
    vcfg = prep.cfg.verify
    checks = {}
    match = verify_matching(system, vcfg.samples_per_edge, vcfg.tol)
    checks["matching"] = {"passed": bool(match.passed), **match.to_dict()}
    row_err = float(np.max(np.abs(system.M.sum(axis=1) - 1.0)))
    checks["row_sums"] = {"passed": row_sums_exact(system.M), "max_float_error": row_err}
    support_ok = bool(np.array_equal(system.C, (system.M.T > 0).astype(system.C.dtype)))
    checks["connection_support"] = {"passed": support_ok}
    corner = corner_mapping_residual(system)
    checks["corner_mapping"] = {"passed": corner <= 1e-12,
                                "max_residual": corner if np.isfinite(corner) else None}
    checks["irreducible"] = {"passed": system.irreducible}
    try:
        cert = _certificate(prep)
    except NotUniform as exc:
        for name in ("interpolation", "boundary_consistency", "variation_bound"):
            checks[name] = {"passed": None, "skipped": str(exc)}
    else:
        sample = deterministic_render(system, vcfg.depth, prep.cfg.render.max_iters,
                                      prep.cfg.render.tol, cert)
        node_err = float(np.max(np.abs(sample.at_grid_nodes() - prep.grid.z)))
        checks["interpolation"] = {"passed": node_err <= 1e-9, "max_error": node_err,
                                   "depth": vcfg.depth}
        checks["boundary_consistency"] = {"passed": sample.boundary_discrepancy <= 1e-9,
                                          "max_discrepancy": sample.boundary_discrepancy}
        rows = variation_bound_check(system, sample)
        bad = [list(r.region) for r in rows if not r.ok]
        checks["variation_bound"] = {"passed": not bad, "failing_regions": bad,
                            "max_ratio": max(r.lhs / r.rhs if r.rhs > 0 else 0.0 for r in rows)}
    passed = all(c["passed"] is not False for c in checks.values())
    return {"passed": passed, "checks": checks, "fingerprint": system.fingerprint()}


def cmd_verify(prep: Prepared, out: Path) -> dict:
    report = verify_report(prep)
    io.write_json(report, out / "verify.json")
    return report


def cmd_render(prep: Prepared, out: Path, chaos: bool = False, seed: int | None = None) -> dict:
    cfg = prep.cfg
    system = prep.system
    meta = {"fingerprint": system.fingerprint(), "planar_map": prep.planar.to_dict()}
    do_chaos = chaos or cfg.chaos.enabled
    try:
        cert = _certificate(prep)
    except NotUniform:
        if not do_chaos:
            raise
        cert = None
    if cert is not None:
        sample = deterministic_render(system, cfg.render.depth, cfg.render.max_iters,
                                      cfg.render.tol, cert)
        meta["surface"] = {
            "depth": sample.depth,
            "shape": list(sample.shape),
            "iterations": sample.iterations,
            "final_delta": sample.final_delta,
            "boundary_discrepancy": sample.boundary_discrepancy,
            "min": float(sample.values.min()),
            "max": float(sample.values.max()),
        }
        with open(out / "convergence.csv", "w") as fh:
            fh.write("iteration,delta\n")
            for k, d in enumerate(sample.deltas, start=1):
                fh.write(f"{k},{d!r}\n")
        if cfg.outputs.surface_csv:
            io.write_surface_csv(sample, out / "surface.csv")
        if cfg.outputs.pgm:
            io.write_pgm(sample, out / "surface.pgm")
        if cfg.outputs.obj:
            io.write_obj_raster(sample, out / "surface.obj")
    if do_chaos:
        s = cfg.chaos.seed if seed is None else seed
        cloud = chaos_game(system, cfg.chaos.count, s, cfg.chaos.burn_in, cfg.chaos.chains)
        io.write_cloud_csv(cloud, out / "cloud.csv")
        io.write_obj_cloud(cloud, out / "cloud.obj")
        meta["chaos"] = {"count": len(cloud.points), "seed": s, "burn_in": cloud.burn_in,
                         "chains": cloud.chains}
    io.write_json(meta, out / "render.json")
    return meta


def cmd_dim(prep: Prepared, out: Path) -> dict:
    cfg = prep.cfg
    system = prep.system
    cert = _certificate(prep)
    report = dimension_bounds(system, scaling_matrices(system, cfg.dim.density), cert)
    depth = cfg.dim.depth if cfg.dim.depth is not None else cfg.render.depth
    sample = deterministic_render(system, depth, cfg.render.max_iters, cfg.render.tol, cert)
    report.empirical = empirical_dimension(sample, cfg.dim.r_min, cfg.dim.r_max,
                                           cfg.dim.min_oversample)
    data = report.to_dict()
    data["raster_depth"] = depth
    data["fingerprint"] = system.fingerprint()
    data["regions_tau_order"] = [list(tau_inverse(t, prep.grid.n))
                                 for t in range(1, prep.grid.num_regions + 1)]
    io.write_json(data, out / "dimension.json")
    io.write_counts_csv(report.empirical.counts, out / "counts.csv")
    if cfg.outputs.svg:
        e = report.empirical
        (out / "loglog.svg").write_text(io.loglog_svg(e.counts, e.slope, e.intercept, cert.a,
                                                      "box counts"))
    return data


COMMANDS = {"build": cmd_build, "verify": cmd_verify, "render": cmd_render, "dim": cmd_dim}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfis", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", help="output directory (default: outputs.dir of the config)")
        if name == "render":
            sp.add_argument("--chaos", action="store_true", help="also run the chaos game")
            sp.add_argument("--seed", type=int, help="override chaos.seed")
    return p


def run(argv=None) -> tuple[int, dict | None]:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config_path = Path(args.config)
    try:
        prep = prepare_path(config_path)
        for w in prep.warnings:
            log.warning(w)
        out = _out_dir(prep, config_path, args.out)
        if args.command == "render":
            result = cmd_render(prep, out, args.chaos, args.seed)
        else:
            result = COMMANDS[args.command](prep, out)
    except RfisError as exc:
        print(f"rfis {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code, None
    return 0, result


def main(argv=None) -> int:
    code, result = run(argv)
    if result is not None:
        print(json.dumps(result, indent=2, sort_keys=True, default=io._plain))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
