"""Command-line interface.

Subcommands: ``table``, ``solve``, ``bench {constant,rotational,external}``, ``fig2``.
Exit codes: 0 success, 2 usage/configuration, 3 numerical failure, 4 I/O.
Options may also come from a flat ``key=value`` file given with ``--config``;
command-line flags take precedence over the file, which takes precedence over
built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from typing import Optional, Sequence

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------ parser

def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("output")
    g.add_argument("--out", help="primary output file (default: standard output where applicable)")
    g.add_argument("--json", action="store_true", help="print machine-readable JSON to standard output")
    g.add_argument("--quiet", action="store_true", help="suppress human-readable summaries")
    g.add_argument("--config", help="key=value file supplying defaults for any long option")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectral-vms",
                                     description="Spectral VMS stabilized advection-diffusion solver")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("table", help="tabulate psi over a Peclet grid")
    t.add_argument("--pe-max", type=float, default=32.0, help="half-width of the square Peclet range")
    t.add_argument("--step", type=float, default=0.125, help="grid spacing in Pe1 and Pe2")
    t.add_argument("--modes", type=int, default=40, help="truncation M1 = M2")
    t.add_argument("--csv", help="also write the table as pe1,pe2,psi CSV to this path")
    _common(t)

    s = sub.add_parser("solve", help="solve one stabilized advection-diffusion problem")
    mesh = s.add_mutually_exclusive_group()
    mesh.add_argument("--N", type=int, help="structured unit square with N x N nodes")
    mesh.add_argument("--mesh", help="mesh file in the nodes/elements text format")
    mesh.add_argument("--rect", help="structured rectangle 'L1,L2,N1,N2'")
    s.add_argument("--mu", type=float, default=1.0, help="diffusivity")
    s.add_argument("--velocity", default="constant",
                   choices=["constant", "rotational", "file"], help="velocity kind")
    s.add_argument("--a", default="1,0", help="constant velocity 'a1,a2'")
    s.add_argument("--velocity-file", help="per-node velocity file (with --velocity file)")
    s.add_argument("--source", default="1",
                   help="source term: a number, or 'sincos' for sin(pi x) cos(pi y)")
    s.add_argument("--tau", default="spectral", choices=["spectral", "gen1d", "codina", "none"],
                   help="stabilization coefficient provider")
    s.add_argument("--table", help="psi table file for the spectral provider")
    s.add_argument("--direct-psi", action="store_true",
                   help="evaluate psi directly instead of from a table")
    s.add_argument("--modes", type=int, default=40, help="truncation for --direct-psi")
    s.add_argument("--vtk", help="also write the solution as legacy VTK")
    _common(s)

    b = sub.add_parser("bench", help="run a benchmark and report errors")
    b.add_argument("benchmark", choices=["constant", "rotational", "external"])
    b.add_argument("--N", type=int, help="grid parameter (constant: nodes per side, default 81; "
                                          "rotational: cells per unit height, default 100)")
    b.add_argument("--n-values", default="0,2,4,6,8,10,12,14,16,18",
                   help="constant: comma-separated direction indices n (alpha = n pi / 10)")
    b.add_argument("--reference-factor", type=int, help="refinement factor of the reference solve")
    b.add_argument("--table", help="psi table file (default: built in memory)")
    b.add_argument("--mesh", help="external: mesh file (default: bundled fixture)")
    b.add_argument("--velocity-file", help="external: per-node velocity file")
    b.add_argument("--reference-mesh", help="external: mesh of a user-supplied reference")
    b.add_argument("--reference-solution", help="external: x,y,u CSV of the reference")
    b.add_argument("--mu", type=float, help="external: diffusivity (default 1e-3)")
    b.add_argument("--timings", action="store_true", help="include wall-clock seconds in JSON")
    _common(b)

    f = sub.add_parser("fig2", help="emit the 1D vs 2D coefficient comparison curves")
    f.add_argument("--p-max", type=float, default=30.0, help="largest P")
    f.add_argument("--steps", type=int, default=300, help="number of P values (P = p_max k / steps)")
    f.add_argument("--modes", type=int, default=40, help="truncation M1 = M2")
    _common(f)
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def read_config(path: str) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, val = (p.strip() for p in line.split("=", 1))
            values[key.lstrip("-").replace("-", "_")] = val
    return values


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sp = _subparser(parser, args.command)
        known = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, raw in read_config(args.config).items():
            if key not in known or key in ("help", "config"):
                raise ConfigError(f"unknown configuration key {key!r} for '{args.command}'")
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                val = action.type(raw) if action.type else raw
                if action.choices and val not in action.choices:
                    raise ConfigError(f"invalid value {raw!r} for {key}")
                defaults[key] = val
        sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


# ------------------------------------------------------------ commands

def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


def cmd_table(args) -> int:
    from .coeff_table import save_table, build_table, export_csv

    if not args.step > 0:
        raise ConfigError("--step must be positive")
    if not args.pe_max >= 0:
        raise ConfigError("--pe-max must be non-negative")
    if args.modes < 1:
        raise ConfigError("--modes must be >= 1")
    if not args.out:
        raise ConfigError("table needs --out")
    t0 = time.perf_counter()
    table = build_table((-args.pe_max, args.pe_max), step=args.step, tr=(args.modes, args.modes))
    seconds = time.perf_counter() - t0
    crc = save_table(table, args.out)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            export_csv(table, fh)
    n1, n2 = table.shape
    summary = {"nodes": [n1, n2], "samples": n1 * n2, "seconds": round(seconds, 3),
               "crc32": f"{crc:08x}", "path": args.out}
    if args.json:
        print(json.dumps(summary))
    _say(args, f"table {n1}x{n2} = {n1 * n2} samples  seconds={seconds:.2f}  crc32={crc:08x}  -> {args.out}")
    return EXIT_OK


def _floats(text: str, count: int, name: str) -> list:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"{name} must be {count} comma-separated numbers") from None
    if len(vals) != count:
        raise ConfigError(f"{name} must be {count} comma-separated numbers")
    return vals


def cmd_solve(args) -> int:
    from .bench import constant_source, read_velocity
    from .coeff_table import load_table
    from .fem import Problem, TauProvider, VelocityField, solve_problem
    from .geometry import build_structured_mesh, read_mesh

    if args.mesh:
        mesh = read_mesh(args.mesh)
    elif args.rect:
        L1, L2, N1, N2 = _floats(args.rect, 4, "--rect")
        mesh = build_structured_mesh(L1, L2, int(N1), int(N2))
    else:
        mesh = build_structured_mesh(1.0, 1.0, args.N or 41, args.N or 41)

    if args.velocity == "constant":
        vel = VelocityField.constant(*_floats(args.a, 2, "--a"))
    elif args.velocity == "rotational":
        vel = VelocityField.rotational()
    else:
        if not args.velocity_file:
            raise ConfigError("--velocity file needs --velocity-file")
        vel = VelocityField.nodal(mesh, read_velocity(args.velocity_file, mesh.n_nodes))

    if args.source == "sincos":
        source = constant_source
    else:
        try:
            source = float(args.source)
        except ValueError:
            raise ConfigError("--source must be a number or 'sincos'") from None

    if args.tau == "spectral":
        if args.table:
            tau = TauProvider("spectral", load_table(args.table))
        elif args.direct_psi:
            tau = TauProvider("spectral", truncation=(args.modes, args.modes))
        else:
            raise ConfigError("the spectral provider needs --table or --direct-psi")
    else:
        tau = TauProvider(args.tau)

    sol = solve_problem(Problem(mesh, args.mu, vel, source, tau))
    pe = sol.info["peclets"]
    summary = {"nodes": mesh.n_nodes, "elements": mesh.n_elements, "tau_kind": tau.kind,
               "residual": sol.residual, "pe_max": float(pe[:, 2].max()),
               "pe1_range": [float(pe[:, 0].min()), float(pe[:, 0].max())],
               "pe2_range": [float(pe[:, 1].min()), float(pe[:, 1].max())],
               "u_min": float(sol.values.min()), "u_max": float(sol.values.max())}
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            sol.to_csv(fh)
    if args.vtk:
        with open(args.vtk, "w", encoding="utf-8") as fh:
            sol.to_vtk(fh)
    if args.json:
        print(json.dumps(summary))
    _say(args, (f"solved {mesh.n_nodes} unknowns with tau={tau.kind}: residual={sol.residual:.3e} "
                f"Pe-max={summary['pe_max']:.4g} Pe1 in [{summary['pe1_range'][0]:.4g}, "
                f"{summary['pe1_range'][1]:.4g}] Pe2 in [{summary['pe2_range'][0]:.4g}, "
                f"{summary['pe2_range'][1]:.4g}]"))
    return EXIT_OK


def cmd_bench(args) -> int:
    from . import bench
    from .coeff_table import load_table

    table = load_table(args.table) if args.table else None
    if args.benchmark == "constant":
        try:
            n_values = [int(v) for v in args.n_values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError("--n-values must be comma-separated integers") from None
        report = bench.bench_constant(n_values, N=args.N or 81,
                                      reference_factor=args.reference_factor or 8, table=table)
    elif args.benchmark == "rotational":
        report = bench.bench_rotational(args.N or 100, reference_factor=args.reference_factor or 8,
                                        table=table)
    else:
        report = bench.bench_external(args.mesh, args.velocity_file,
                                      mu=1e-3 if args.mu is None else args.mu,
                                      reference_factor=args.reference_factor or 4,
                                      reference_mesh_path=args.reference_mesh,
                                      reference_solution_path=args.reference_solution,
                                      table=table)
    text = report.to_json(timings=args.timings)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    if args.json or not args.out:
        print(text)
    _say(args, report.to_text().rstrip())
    return EXIT_OK


def cmd_fig2(args) -> int:
    from .stabilization import FIG2_HEADER, fig2_curves, write_fig2_csv

    if args.steps < 1 or not args.p_max > 0:
        raise ConfigError("--steps must be >= 1 and --p-max positive")
    grid = args.p_max * np.arange(1, args.steps + 1) / args.steps
    rows = fig2_curves(grid, (args.modes, args.modes))
    columns = FIG2_HEADER.split(",")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            write_fig2_csv(rows, fh)
        if args.json:
            print(json.dumps({"rows": len(rows), "columns": columns, "path": args.out}))
        _say(args, f"fig2: {len(rows)} rows -> {args.out}")
    elif args.json:
        print(json.dumps([dict(zip(columns, map(float, r))) for r in rows]))
    else:
        write_fig2_csv(rows, sys.stdout)
    return EXIT_OK


COMMANDS = {"table": cmd_table, "solve": cmd_solve, "bench": cmd_bench, "fig2": cmd_fig2}


def main(argv: Optional[Sequence[str]] = None) -> int:
    from .bench import VelocityFileError
    from .coeff_table import TableFormatError
    from .geometry import MeshError, MeshParseError

    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, TableFormatError, VelocityFileError, MeshParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MeshError as exc:
        print(f"error: invalid mesh: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        from .stabilization import OverflowGuardError
        if isinstance(exc, OverflowGuardError):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
