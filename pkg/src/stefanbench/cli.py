"""Command-line harness: run, sweep, bench, mesh and verify subcommands.

Exit codes: 0 success, 1 flagged non-convergence under --strict (or failed
verify properties), 2 configuration errors.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import ConfigError, load_config
from .experiments import bench, error_norms, sensitivity_sweep, write_records
from .mesh import FAMILY_TABLE, generate_mesh, load_mesh, save_mesh
from .noise import apply_noise, sample_increment
from .solvers import STRATEGIES
from .timestepper import RunContext, run_ensemble
from .verify import MODULES, run_suite


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stefanbench",
        description="Solvers and benchmarks for the (stochastic) Stefan problem",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one configuration file")
    run_p.add_argument("--config", required=True, help="key=value configuration file")
    run_p.add_argument("--strict", action="store_true",
                       help="exit 1 when any step fails to converge")
    run_p.add_argument("--audit", action="store_true",
                       help="dump per-(realisation, step) noise fields as CSV")

    sweep_p = sub.add_parser("sweep", help="sensitivity sweep over a parameter grid")
    sweep_p.add_argument("--strategies", default="newton,l_scheme,r_scheme")
    sweep_p.add_argument("--levels", default="1,2")
    sweep_p.add_argument("--steps", default="10,100")
    sweep_p.add_argument("--ctol", default="1,10,100,1000,10000")
    sweep_p.add_argument("--ceps", default="1")
    sweep_p.add_argument("--t-final", type=float, default=1.0)
    sweep_p.add_argument("--out", default="sweep.csv")

    bench_p = sub.add_parser("bench", help="min-of-repetitions timing ladder")
    bench_p.add_argument("--strategies", default="newton,l_scheme,r_scheme")
    bench_p.add_argument("--levels", default="1,2,3,4")
    bench_p.add_argument("--steps", default="10,100")
    bench_p.add_argument("--repetitions", type=int, default=10)
    bench_p.add_argument("--ctol", type=float, default=1.0)
    bench_p.add_argument("--out", default="bench.csv")

    mesh_p = sub.add_parser("mesh", help="generate, check or convert family meshes")
    mesh_p.add_argument("--level", type=int, required=True)
    mesh_p.add_argument("--check", action="store_true",
                        help="print 'cells edges vertices' and compare to the family table")
    mesh_p.add_argument("--dump", metavar="FILE", help="write the mesh text format")
    mesh_p.add_argument("--load", metavar="FILE", help="read back and re-verify a dump")

    verify_p = sub.add_parser("verify", help="run the property suite")
    verify_p.add_argument("--module", choices=MODULES, default=None)
    verify_p.add_argument("--seed", type=int, default=0)
    return parser


def _csv_field(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    spec = cfg.spec
    ctx = RunContext(spec)
    result = run_ensemble(spec, ctx)

    flagged = sum(t.flagged_steps for t in result.trajectories)
    iters = sum(t.total_iterations for t in result.trajectories)
    print(
        f"strategy={spec.solver.strategy} level={spec.mesh_level} "
        f"steps={spec.grid.steps} realisations={spec.realisations} "
        f"iterations={iters} flagged={flagged} "
        f"factorisations={result.counters.factorisation_count} "
        f"wall_ns={result.wall_ns}"
    )
    if spec.problem == "exact_dirichlet" and spec.zeta is None:
        ez, eg = error_norms(ctx.gd, result.mean_final, spec.grid.t_final)
        print(f"E_zeta={ez!r} E_grad_zeta={eg!r}")

    outdir = cfg.output_dir
    if outdir:
        os.makedirs(outdir, exist_ok=True)
        verts = ctx.mesh.vertices
        for r, trajectory in enumerate(result.trajectories):
            path = os.path.join(outdir, f"final_r{r}.csv")
            with open(path, "w") as fh:
                fh.write("vertex_index,x,y,value\n")
                for i, ((x, y), val) in enumerate(zip(verts, trajectory.final.values)):
                    fh.write(f"{i},{float(x)!r},{float(y)!r},{float(val)!r}\n")
            result.reports[r].write_csv(os.path.join(outdir, f"report_r{r}.csv"))
        if args.audit or cfg.audit:
            _dump_noise_audit(ctx, spec, outdir)
        print(f"wrote outputs to {outdir}")
    return 1 if (args.strict and flagged) else 0


def _dump_noise_audit(ctx, spec, outdir) -> None:
    # regenerate the per-(realisation, step) noise fields from their streams
    for r in range(spec.realisations):
        trajectory = ctx.run_realisation(r)
        state = trajectory.fields if not spec.lean else None
        for n in range(1, spec.grid.steps + 1):
            inc = sample_increment(ctx.model, spec.seed, r, n, ctx.dt)
            prev = state[n - 1].values if state else trajectory.initial.values
            field = apply_noise(ctx.op, ctx.model, prev, inc)
            path = os.path.join(outdir, f"noise_r{r}_step{n}.csv")
            with open(path, "w") as fh:
                fh.write("vertex_index,value\n")
                for i, val in enumerate(field.values):
                    fh.write(f"{i},{float(val)!r}\n")


def _parse_list(raw: str, cast):
    try:
        return [cast(tok) for tok in raw.split(",") if tok]
    except ValueError as exc:
        raise ConfigError(f"bad list {raw!r}") from exc


def _cmd_sweep(args) -> int:
    try:
        strategies = [s for s in args.strategies.split(",") if s]
        for s in strategies:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}")
        records = sensitivity_sweep(
            strategies,
            _parse_list(args.levels, int),
            _parse_list(args.steps, int),
            _parse_list(args.ctol, float),
            _parse_list(args.ceps, float),
            t_final=args.t_final,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    write_records(records, args.out)
    print(f"wrote {len(records)} sweep records to {args.out}")
    return 0


def _cmd_bench(args) -> int:
    try:
        strategies = [s for s in args.strategies.split(",") if s]
        for s in strategies:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}")
        levels = _parse_list(args.levels, int)
        steps = _parse_list(args.steps, int)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    os.environ["STEFAN_THREADS"] = "1"  # timing fidelity
    records = bench(strategies, levels, steps,
                    repetitions=args.repetitions, C_tol=args.ctol)
    write_records(records, args.out)
    for strategy in strategies:
        total = max(r.cpu_ns_cumulative for r in records if r.strategy == strategy)
        print(f"{strategy}: cumulative {total / 1e9:.3f} s")
    print(f"wrote {len(records)} bench records to {args.out}")
    return 0


def _cmd_mesh(args) -> int:
    try:
        mesh = generate_mesh(args.level)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.dump:
        save_mesh(mesh, args.dump)
        print(f"wrote level {args.level} mesh to {args.dump}")
    if args.load:
        loaded = load_mesh(args.load)
        same = (
            np.array_equal(loaded.triangles, mesh.triangles)
            and np.allclose(loaded.vertices, mesh.vertices)
        )
        print(f"reloaded mesh matches: {same}")
        if not same:
            return 1
    if args.check:
        cells, edges, verts = mesh.counts()
        print(f"{cells} {edges} {verts}")
        _, ec, ee, ev = FAMILY_TABLE[args.level]
        if (cells, edges, verts) != (ec, ee, ev):
            print(f"expected {ec} {ee} {ev}", file=sys.stderr)
            return 1
    return 0


def _cmd_verify(args) -> int:
    results = run_suite(args.module, args.seed)
    failed = 0
    for name, passed, detail in results:
        status = "pass" if passed else "FAIL"
        suffix = f"  ({detail})" if detail else ""
        print(f"[{status}] {name}{suffix}")
        failed += not passed
    print(f"{len(results) - failed}/{len(results)} properties passed")
    return 1 if failed else 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "bench": _cmd_bench,
        "mesh": _cmd_mesh,
        "verify": _cmd_verify,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
