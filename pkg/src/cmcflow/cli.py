"""Command-line entry point: ``cmcflow <command> [options]``.

Every command writes its outputs and a ``run_record.json`` into the output
directory (``--out``, overridden by ``$CMCFLOW_OUT``) and prints one summary line.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .causal import classify_boundary, completeness_test, null_fan, observer_horizon_test
from .comparison import barrier_pair_select
from .errors import (DomainError, GeometryError, ModelError, NoBarrierError, NotApplicableError,
                     NumericError)
from .estimates import flow_inequality_monitor, select_epsilons
from .flow import FlowConfig, Verdict, flow_run, load_run, run_to_dict, write_series_csv
from .hypersurface import GraphSurface, PeriodicGrid, read_surface_csv, write_surface_csv
from .spacetime import (check_energy_condition, fd_ricci_diagonal, load_model, model_to_dict,
                        ricci_diagonal)
from .stability import principal_eigen

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_BARRIER, EXIT_SPACELIKE, EXIT_MAXSTEPS, EXIT_VERIFY = range(7)

VERDICT_EXIT = {
    Verdict.CONVERGED: EXIT_OK,
    Verdict.BARRIER: EXIT_BARRIER,
    Verdict.SPACELIKE: EXIT_SPACELIKE,
    Verdict.MAX_STEPS: EXIT_MAXSTEPS,
    Verdict.COMPLETED: EXIT_OK,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# argument helpers


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def parse_samples(text: str) -> np.ndarray:
    """'a:b:N' for N evenly spaced values, or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"sample range must be a:b:N, got {text!r}")
        try:
            a, b, N = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise UsageError(f"bad sample range {text!r}") from None
        if N < 1:
            raise UsageError("sample count must be positive")
        return np.linspace(a, b, N)
    return np.array(_floats(text))


def parse_grid(text: str) -> tuple:
    try:
        shape = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"grid must be N or N1,N2[,N3], got {text!r}") from None
    return shape


def initial_surface(M, spec: str, grid_shape) -> GraphSurface:
    """const:T, sine:T,A,k (u = T + A sin(k pi x^1 / b_1)) or file:PATH."""
    kind, _, rest = spec.partition(":")
    if kind == "file":
        S = read_surface_csv(rest)
        if S.grid.periods != PeriodicGrid.for_model(M, S.grid.shape).periods:
            raise UsageError("surface file periods do not match the model")
        return S
    grid = PeriodicGrid.for_model(M, grid_shape)
    if kind == "const":
        vals = _floats(rest)
        if len(vals) != 1:
            raise UsageError("const takes one value: const:T")
        return GraphSurface(grid, np.full(grid.shape, vals[0]))
    if kind == "sine":
        vals = _floats(rest)
        if len(vals) != 3:
            raise UsageError("sine takes three values: sine:T,A,k")
        T, A, k = vals
        x1 = grid.mesh()[0]
        return GraphSurface(grid, T + A * np.sin(k * np.pi * x1 / grid.periods[0]))
    raise UsageError(f"unknown --u0 form {spec!r}; use const:T, sine:T,A,k or file:PATH")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return None if math.isnan(v) else v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (frozenset, set)):
        return sorted(obj)
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# --------------------------------------------------------------------------
# commands; each returns (exit_code, summary line, outputs dict)


def cmd_check_energy(args, out: Path):
    M = load_model(args.model)
    lam = M.lam if args.lam is None else args.lam
    rep = check_energy_condition(M, lam, parse_samples(args.t))
    write_json(out / "energy.json", rep.to_dict())
    code = EXIT_OK if rep.passed else EXIT_VERIFY
    verdict = "pass" if rep.passed else "FAIL"
    return code, f"energy condition {verdict}: worst margin {rep.worst_margin:.6g} at t={rep.worst_t:g} ({rep.worst_kind})", rep.to_dict()


def cmd_ricci(args, out: Path):
    M = load_model(args.model)
    ts = parse_samples(args.t)
    m = len(M.fibers)
    header = ["t", "r0"] + [f"r{i + 1}" for i in range(m)] + ["r0_fd"] + [f"r{i + 1}_fd" for i in range(m)] + ["max_rel_diff"]
    rows, worst = [], 0.0
    for t in ts:
        exact = ricci_diagonal(M, t)
        fd = fd_ricci_diagonal(M, t)
        a = np.array((exact.r0, *exact.r))
        b = np.array((fd.r0, *fd.r))
        rel = float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)))
        worst = max(worst, rel)
        rows.append([float(t), *a.tolist(), *b.tolist(), rel])
    _write_rows(out / "ricci.csv", header, rows)
    summary = {"samples": len(rows), "max_rel_diff_fd": worst}
    write_json(out / "ricci.json", summary)
    return EXIT_OK, f"ricci at {len(rows)} times, max relative difference to finite differences {worst:.3e}", summary


def _auto_barriers(M, c, u0):
    t_ref = float(u0.min()) - 0.1
    if not t_ref > M.t_min:
        t_ref = 0.5 * (M.t_min + float(u0.min()))
    t1, cert = barrier_pair_select(M, c, t_ref)
    return t1, cert.t_slice, cert


def cmd_flow(args, out: Path):
    M = load_model(args.model)
    S0 = initial_surface(M, args.u0, parse_grid(args.grid))
    t1, t2, cert = args.t1, args.t2, None
    if args.auto_barriers:
        t1, t2, cert = _auto_barriers(M, args.c, S0.u)
        if not S0.u.max() < t2:
            raise DomainError(f"initial surface reaches above the selected upper barrier t2 = {t2:.6g}")
    cfg = FlowConfig(c=args.c, cfl=args.cfl, ds_max=args.ds_max, tol_H=args.tol_H,
                     max_steps=args.max_steps, barrier_lower=t1, barrier_upper=t2,
                     sample_every=args.sample_every, snapshot_every=args.snapshot_every,
                     scheme=args.scheme, s_end=args.s_end,
                     snapshot_stride=args.snapshot_stride)
    res = flow_run(M, S0, cfg)
    S = res.final.surface
    write_surface_csv(out / "surface.csv", S.grid, S.u)
    write_series_csv(out / "series.csv", res.series)
    record = run_to_dict(M, cfg, res)
    if cert is not None:
        record["barrier_certificate"] = cert.to_dict(t1)
    write_json(out / "flow_run.json", record)
    summary = {k: record[k] for k in ("verdict", "steps", "s", "residual", "message")}
    summary.update(minu=float(S.u.min()), maxu=float(S.u.max()), t1=t1, t2=t2)
    line = (f"{res.verdict.value} after {res.final.step} steps (s={res.final.s:.6g}): "
            f"max|H-c|={summary['residual']:.3e}, u in [{summary['minu']:.9g}, {summary['maxu']:.9g}]")
    return VERDICT_EXIT[res.verdict], line, summary


def cmd_barrier(args, out: Path):
    M = load_model(args.model)
    t1, cert = barrier_pair_select(M, args.c, args.t_ref)
    data = cert.to_dict(t1)
    write_json(out / "barrier.json", data)
    print(json.dumps(_jsonable({k: data[k] for k in ("t1", "t2", "tau", "bound")}), sort_keys=True))
    return EXIT_OK, f"barriers t1={t1:.6g}, t2={cert.t_slice:.6g} (tau={cert.tau:.6g}, bound={cert.bound:.6g})", data


def cmd_geodesics(args, out: Path):
    M = load_model(args.model)
    start = _floats(args.start)
    if len(start) != M.n + 1:
        raise UsageError(f"--start needs {M.n + 1} values t0,x1..x{M.n}")
    if args.random:
        rng = np.random.default_rng(args.seed)
        P = rng.normal(size=(args.random, M.n))
    else:
        if args.momenta is None:
            raise UsageError("give --momenta or --random K")
        P = np.array([_floats(args.momenta)])
        if P.shape[1] != M.n:
            raise UsageError(f"--momenta needs {M.n} values")
    geos = null_fan(M, start, P, args.t_stop, args.orientation, num=args.num)
    n = M.n
    if len(geos) == 1:
        g = geos[0]
        _write_rows(out / "geodesic.csv", ["t"] + [f"x{k + 1}" for k in range(n)],
                    [[float(t), *x.tolist()] for t, x in zip(g.t, g.x)])
        check = g.affine_check(M)
        summary = {"displacement": g.displacement.tolist(), "truncated": g.truncated, **check}
    else:
        disp = np.array([g.displacement for g in geos])
        _write_rows(out / "fan.csv", [f"p{k + 1}" for k in range(n)] + [f"dx{k + 1}" for k in range(n)],
                    [[*p.tolist(), *d.tolist()] for p, d in zip(P, disp)])
        summary = {"count": len(geos), "max_abs_displacement": np.max(np.abs(disp), axis=0).tolist(),
                   "truncated": any(g.truncated for g in geos)}
    write_json(out / "geodesics.json", summary)
    ext = ", ".join(f"{v:.10g}" for v in (summary.get("displacement") or summary["max_abs_displacement"]))
    return EXIT_OK, f"{len(geos)} null geodesic(s) to t={geos[0].t[-1]:g}; |dx| = ({ext})", summary


def cmd_horizon(args, out: Path):
    M = load_model(args.model)
    rep = observer_horizon_test(M, _floats(args.xi), args.t1, fan=args.fan, t_cap=args.t_cap, jobs=args.jobs)
    data = rep.to_dict()
    write_json(out / "horizon.json", data)
    axes = [k + 1 for k, ok in enumerate(rep.covers_axis) if not ok]
    line = "past of the observer covers the slice" if rep.covers_slice else f"observer horizon along axes {axes}"
    return EXIT_OK, line, data


def cmd_boundary(args, out: Path):
    M = load_model(args.model)
    bc = classify_boundary(M)
    comp = completeness_test(M)
    data = {**bc.to_dict(), "completeness": comp.to_dict()}
    write_json(out / "boundary.json", data)
    return EXIT_OK, f"future boundary: {bc.boundary_shape}; completeness criterion {comp.overall}", data


def cmd_eigen(args, out: Path):
    M = load_model(args.model)
    S = read_surface_csv(args.surface)
    eig = principal_eigen(M, S)
    data = {"lambda1": eig.lambda1, "residual": eig.residual, "iters": eig.iterations,
            "rayleigh_min": eig.rayleigh_min, "shift": eig.shift}
    write_json(out / "eigen.json", data)
    write_surface_csv(out / "phi1.csv", S.grid, eig.phi1)
    print(json.dumps(_jsonable({k: data[k] for k in ("lambda1", "residual", "iters")}), sort_keys=True))
    return EXIT_OK, f"lambda1 = {eig.lambda1:.12g} after {eig.iterations} iterations", data


def cmd_verify_estimates(args, out: Path):
    M, grid, rec = load_run(args.run)
    if not rec["snapshots"]:
        raise UsageError("run record has no snapshots; rerun flow with --snapshot-every K")
    lam = M.lam if args.lam is None else args.lam
    c = rec["config"]["c"] if args.c is None else args.c
    eps = select_epsilons(M.n, lam)
    rep = flow_inequality_monitor(M, grid, rec["snapshots"], eps, c)
    data = {**rep.to_dict(), "eps": [eps.eps1, eps.eps2, eps.eps3], "lambda": lam, "c": c,
            "coefficient_ok": eps.satisfied()}
    write_json(out / "estimates.json", data)
    code = EXIT_OK if rep.ok and eps.satisfied() else EXIT_VERIFY
    return code, (f"estimates {'hold' if code == EXIT_OK else 'VIOLATED'}: identity residual "
                  f"{rep.identity_residual:.3e}, min margin {rep.inequality_margin_min:.6g}, slack {rep.slack:.3e}"), data


COMMANDS = {
    "check-energy": cmd_check_energy,
    "ricci": cmd_ricci,
    "flow": cmd_flow,
    "barrier": cmd_barrier,
    "geodesics": cmd_geodesics,
    "horizon": cmd_horizon,
    "boundary": cmd_boundary,
    "eigen": cmd_eigen,
    "verify-estimates": cmd_verify_estimates,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cmcflow", description="Forced mean curvature flow toward CMC slices in warped cosmologies.")
    p.add_argument("--version", action="version", version=f"cmcflow {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default ./out; $CMCFLOW_OUT wins)")
    common.add_argument("--seed", type=int, default=42)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common])

    q = add("check-energy", "check Ric(X,X) >= -n*lambda on timelike X")
    q.add_argument("--model", required=True)
    q.add_argument("--lambda", dest="lam", type=float, default=None, help="defaults to the model's lambda")
    q.add_argument("--t", required=True, help="a:b:N or comma list")

    q = add("ricci", "frame Ricci eigenvalues, closed form and finite differences")
    q.add_argument("--model", required=True)
    q.add_argument("--t", required=True, help="a:b:N or comma list")

    q = add("flow", "run the forced mean curvature flow")
    q.add_argument("--model", required=True)
    q.add_argument("--c", type=float, required=True)
    q.add_argument("--u0", required=True, help="const:T | sine:T,A,k | file:PATH")
    q.add_argument("--grid", default="256", help="N or N1,N2[,N3] (ignored for file:)")
    q.add_argument("--auto-barriers", action="store_true")
    q.add_argument("--t1", type=float, default=None, help="lower barrier slice")
    q.add_argument("--t2", type=float, default=None, help="upper barrier slice")
    q.add_argument("--tol-H", dest="tol_H", type=float, default=1e-6)
    q.add_argument("--ds-max", dest="ds_max", type=float, default=0.05)
    q.add_argument("--cfl", type=float, default=None)
    q.add_argument("--max-steps", dest="max_steps", type=int, default=500_000)
    q.add_argument("--sample-every", dest="sample_every", type=int, default=100)
    q.add_argument("--snapshot-every", dest="snapshot_every", type=int, default=0)
    q.add_argument("--snapshot-stride", dest="snapshot_stride", type=int, default=1)
    q.add_argument("--scheme", choices=("rk2", "euler"), default="rk2")
    q.add_argument("--s-end", dest="s_end", type=float, default=None,
                   help="integrate to this flow time instead of to convergence")

    q = add("barrier", "select a barrier pair t1 < t2 for forcing c")
    q.add_argument("--model", required=True)
    q.add_argument("--c", type=float, required=True)
    q.add_argument("--t-ref", dest="t_ref", type=float, required=True)

    q = add("geodesics", "integrate null geodesics")
    q.add_argument("--model", required=True)
    q.add_argument("--start", required=True, help="t0,x1,...,xn")
    q.add_argument("--momenta", help="p1,...,pn")
    q.add_argument("--random", type=int, default=0, help="shoot K random momenta instead")
    q.add_argument("--t-stop", dest="t_stop", type=float, required=True)
    q.add_argument("--orientation", choices=("past", "future"), default="past")
    q.add_argument("--num", type=int, default=200, help="trajectory samples")

    q = add("horizon", "observer-horizon test for a t-line")
    q.add_argument("--model", required=True)
    q.add_argument("--t1", type=float, required=True)
    q.add_argument("--xi", default="0", help="base point x1,...,xn (a single value is broadcast)")
    q.add_argument("--fan", type=int, default=4)
    q.add_argument("--t-cap", dest="t_cap", type=float, default=1e6)
    q.add_argument("--jobs", type=int, default=1)

    q = add("boundary", "classify the future causal boundary")
    q.add_argument("--model", required=True)

    q = add("eigen", "principal eigenpair of the stability operator")
    q.add_argument("--model", required=True)
    q.add_argument("--surface", required=True)

    q = add("verify-estimates", "check the evolution estimates on a flow run")
    q.add_argument("--run", required=True, help="flow_run.json written by `flow --snapshot-every K`")
    q.add_argument("--lambda", dest="lam", type=float, default=None)
    q.add_argument("--c", type=float, default=None)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = Path(os.environ.get("CMCFLOW_OUT") or args.out)
    start = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        code, line, outputs = COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"cmcflow: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, DomainError, NoBarrierError, NotApplicableError) as exc:
        print(f"cmcflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except GeometryError as exc:
        print(f"cmcflow: surface not spacelike: {exc}", file=sys.stderr)
        return EXIT_SPACELIKE
    except NumericError as exc:
        print(f"cmcflow: numeric failure: {exc}", file=sys.stderr)
        return EXIT_MAXSTEPS
    except (OSError, ValueError) as exc:
        print(f"cmcflow: {exc}", file=sys.stderr)
        return EXIT_USAGE
    model = None
    if getattr(args, "model", None):
        model = model_to_dict(load_model(args.model))
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "out")}
    record = {"tool": "cmcflow", "version": __version__, "command": args.command, "flags": flags,
              "seed": args.seed, "model": model, "exit_code": code, "outputs": outputs,
              "wall_time_s": time.perf_counter() - start}
    write_json(out / "run_record.json", record)
    print(line)
    return code


if __name__ == "__main__":
    sys.exit(main())
