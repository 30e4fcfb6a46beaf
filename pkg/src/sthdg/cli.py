"""Command line front end.

Four subcommands: ``run`` executes one simulation from a JSON config,
``convergence`` produces refinement tables, ``verify`` runs the sampled
verification suites, and ``mesh`` writes a deformed space-time slab to
VTK for visual inspection.  Errors raised by the library surface as a
single line on stderr and a nonzero exit code.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .errors import STHDGError
from .geometry import build_slab, uniform_grid, write_vtk


def _parse_int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _parse_float_list(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sthdg",
        description="space-time hybridized DG solver for advection-diffusion "
                    "on deforming meshes")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one simulation from a JSON config")
    p_run.add_argument("--config", required=True,
                       help="JSON file whose keys are RunConfig fields")
    p_run.add_argument("--out", default=None,
                       help="output directory (overrides out_dir in the config)")

    p_conv = sub.add_parser("convergence", help="simultaneous space-time refinement study")
    p_conv.add_argument("--degrees", type=_parse_int_list, default=(1, 2, 3),
                        help="comma-separated polynomial degrees (default 1,2,3)")
    p_conv.add_argument("--levels", type=int, default=3,
                        help="number of refinement levels (default 3)")
    p_conv.add_argument("--nu", type=_parse_float_list, default=(1e-2,),
                        help="comma-separated diffusion parameters (default 1e-2)")
    p_conv.add_argument("--problem", default="rotating-pulse",
                        help="built-in problem name (default rotating-pulse)")
    p_conv.add_argument("--base-cells", type=int, default=8,
                        help="cells per direction on the coarsest level (default 8)")
    p_conv.add_argument("--base-slabs", type=int, default=8,
                        help="slabs on the coarsest level (default 8)")
    p_conv.add_argument("--out", required=True, help="directory for CSV tables")
    p_conv.add_argument("--quiet", action="store_true",
                        help="suppress per-level progress lines")

    p_ver = sub.add_parser("verify", help="sampled verification suites")
    p_ver.add_argument("--suite", default="all",
                       help="one of " + ", ".join(harness.VERIFY_SUITES) + ", or all")
    p_ver.add_argument("--out", default=None, help="directory for CSV/JSON reports")
    p_ver.add_argument("--seed", type=int, default=42)

    p_mesh = sub.add_parser("mesh", help="write one deformed slab as VTK")
    p_mesh.add_argument("--grid", type=int, nargs=2, default=(8, 8),
                        metavar=("NX", "NY"))
    p_mesh.add_argument("--deform", type=float, default=0.1,
                        help="deformation amplitude (default 0.1)")
    p_mesh.add_argument("--time", type=float, default=0.0,
                        help="slab start time (default 0)")
    p_mesh.add_argument("--dt", type=float, default=0.125,
                        help="slab height (default 0.125)")
    p_mesh.add_argument("--vtk", required=True, help="output VTK path")
    return parser


def _cmd_run(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if args.out is not None:
        raw["out_dir"] = args.out
    cfg = harness.RunConfig.from_dict(raw)
    result = harness.run(cfg)
    norms = result.summary["norms"]
    kind = result.summary["norm_kind"]
    print(f"{cfg.problem}: {cfg.grid[0]}x{cfg.grid[1]} cells, {cfg.slabs} slabs, "
          f"degrees {cfg.degrees[0]}/{cfg.degrees[1]}")
    print(f"{kind} norm_s = {norms['norm_s']:.6e}   "
          f"max residual = {result.summary['max_residual']:.2e}")
    if cfg.out_dir:
        print(f"summary written to {cfg.out_dir}/summary.json")
    return 0


def _cmd_convergence(args) -> int:
    results = harness.convergence_study(
        degrees=args.degrees, levels=args.levels, nus=args.nu,
        out_dir=args.out, problem=args.problem, base_cells=args.base_cells,
        base_slabs=args.base_slabs, quiet=args.quiet)
    for key, table in results.items():
        rates = ", ".join(f"{r:.2f}" for r in table["rates"]) or "-"
        print(f"{key}: finest error {table['errors'][-1]:.6e}  rates [{rates}]")
    print(f"tables written to {args.out}")
    return 0


def _cmd_verify(args) -> int:
    results = harness.verify(args.suite, out_dir=args.out, seed=args.seed)
    for name, res in results.items():
        digest = []
        for key, val in sorted(res.items()):
            if isinstance(val, dict):
                for inner in ("c_c", "c_p", "c_B", "c_i", "max_drift"):
                    if inner in val:
                        digest.append(f"{key}.{inner}={_fmt(val[inner])}")
                        break
        print(f"{name}: " + ("  ".join(digest) if digest else "done"))
    if args.out:
        print(f"reports written to {args.out}")
    return 0


def _fmt(val) -> str:
    if isinstance(val, list):
        return "[" + ", ".join(f"{v:.3g}" for v in val) + "]"
    return f"{val:.3g}"


def _cmd_mesh(args) -> int:
    mesh = uniform_grid(args.grid[0], args.grid[1], lo=harness.DOMAIN_LO,
                        hi=harness.DOMAIN_HI, tag="N")
    slab = build_slab(mesh, harness.pulse_deformation(args.deform),
                      args.time, args.dt, index=0)
    write_vtk(args.vtk, slab)
    print(f"wrote {slab.n_elements} cells spanning t in "
          f"[{slab.t0:g}, {slab.t1:g}] to {args.vtk}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "convergence": _cmd_convergence,
    "verify": _cmd_verify,
    "mesh": _cmd_mesh,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except STHDGError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
