"""Command-line entry point.

    fraccontrol single      --s 0.2 --level 7 --scheme p1
    fraccontrol convergence --config study.cfg --out results/
    fraccontrol table1      --out results/
    fraccontrol mesh-dump   --level 3 --domain disk --out meshes/

Every subcommand accepts ``--config <file>`` (flat ``key = value`` lines)
followed by command-line overrides.  Failures print a single line
``error reason=<kind> message=<text>`` to stderr and exit with status 2.
"""

import argparse
from dataclasses import replace
import json
import logging
from pathlib import Path
import sys

from . import harness
from .assembly import write_matrix_market
from .mesh import write_mesh
from .solve import CylinderSolver


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key=value configuration file")
    common.add_argument("--s", type=float, action="append", help="fractional order (repeatable)")
    common.add_argument("--level", type=int, action="append", help="refinement level (repeatable)")
    common.add_argument("--scheme", choices=["p0", "p1"])
    common.add_argument("--domain", choices=["square", "disk"])
    common.add_argument("--mesh-family", choices=["table", "dyadic"])
    common.add_argument("--gamma-factor", type=float)
    common.add_argument("--trunc-c0", type=float)
    common.add_argument("--opt-tol", type=float)
    common.add_argument("--solver", choices=["tensor", "splu", "cg"])
    common.add_argument("--no-timing", action="store_true", help="write 0 in the seconds column")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fraccontrol", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("single", aliases=["run"], parents=[common], help="one optimization run per (s, level)")
    sub.add_parser("convergence", parents=[common], help="refinement study with fitted rates")
    sub.add_parser("table1", parents=[common], help="P0/P1 comparison against the published table")
    dump = sub.add_parser("mesh-dump", parents=[common], help="write mesh files (and optionally the matrix)")
    dump.add_argument("--matrix", action="store_true", help="also write the stiffness in Matrix Market format")
    return parser


def _config_from_args(args):
    config = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    overrides = {
        "s_values": args.s,
        "levels": args.level,
        "scheme": args.scheme,
        "domain": args.domain,
        "mesh_family": args.mesh_family,
        "gamma_factor": args.gamma_factor,
        "trunc_c0": args.trunc_c0,
        "opt_tol": args.opt_tol,
        "solver": args.solver,
        "out_dir": str(args.out) if args.out else None,
    }
    config = replace(config, **{k: v for k, v in overrides.items() if v is not None})
    if args.no_timing:
        config = replace(config, timing=False)
    return config.validate()


def _cmd_single(config):
    records = []
    for s in config.s_values:
        for lv in config.levels:
            rec = harness.run_single(config, s, lv).record
            records.append(rec)
            print(f"s={rec.s:g} scheme={rec.scheme} n_dofs={rec.n_dofs} E_z={rec.E_z:.9g} "
                  f"state_err={rec.state_err:.6g} iters={rec.iters}")
    path = harness.emit_csv(records, Path(config.out_dir) / "single.csv")
    print(f"wrote {path}")


def _cmd_convergence(config):
    out = Path(config.out_dir)
    all_records = []
    summary = {}
    for s in config.s_values:
        records, fit = harness.run_convergence(config, s)
        all_records += records
        summary[str(s)] = {"slope": fit.slope, "observed_target": fit.observed_target,
                           "predicted_slope": fit.predicted_slope, "monotone": fit.monotone}
        print(f"s={s:g} scheme={config.scheme} slope={fit.slope:.4f} "
              f"(observed -0.5, predicted {fit.predicted_slope:.4f}) monotone={fit.monotone}")
    harness.emit_csv(all_records, out / "convergence.csv")
    harness.emit_plotdata(all_records, out / "convergence.dat")
    (out / "rates.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"wrote {out / 'convergence.csv'}")


def _cmd_table1(config):
    rows = harness.reproduce_table1(config)
    report = harness.format_table1(rows)
    print(report)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "table1.txt").write_text(report + "\n")


def _cmd_mesh_dump(config, with_matrix):
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for s in config.s_values:
        for lv in config.levels:
            mesh = harness.build_mesh(config, s, lv)
            stem = out / f"{config.domain}_level{lv}_s{s:g}"
            write_mesh(mesh.base, stem)
            with open(stem.with_name(stem.name + ".y"), "w") as fh:
                fh.writelines(f"{k} {y:.17g}\n" for k, y in enumerate(mesh.partition.points))
            print(f"wrote {stem}.node/.ele/.y  (M={mesh.M}, free DOFs={mesh.n_dofs})")
            if with_matrix:
                from .spectral import FracParams

                params = FracParams(s, config.vartheta, config.a_bound, config.b_bound)
                solver = CylinderSolver(mesh, params, method="cg")
                path = stem.with_name(stem.name + ".mtx")
                write_matrix_market(solver.matrix, path)
                print(f"wrote {path}")


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _config_from_args(args)
        if args.command in ("single", "run"):
            _cmd_single(config)
        elif args.command == "convergence":
            _cmd_convergence(config)
        elif args.command == "table1":
            _cmd_table1(config)
        elif args.command == "mesh-dump":
            _cmd_mesh_dump(config, args.matrix)
    except Exception as exc:  # one machine-readable line, nonzero exit
        msg = str(exc).replace("\n", " ")
        print(f"error reason={type(exc).__name__} message={json.dumps(msg)}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
