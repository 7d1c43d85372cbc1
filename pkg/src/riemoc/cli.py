"""Command-line entry point: ``riemoc <command> [--scenario FILE | --builtin NAME] ...``.

Exit codes: 0 the command ran, 2 the scenario is invalid, 3 a numerical stage failed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .conditions import (
    SecondOrderContext,
    basis_adjoints,
    certify_not_weak_pareto,
    check_first_order,
    free_time_first_order_residual,
    free_time_rows,
    restrict_family,
    second_order_sets,
    solve_multiplier_cone,
    verify_singular_direction,
)
from .geometry import christoffel_at, metric_at, sectional_curvature_at
from .problem import check_admissibility
from .report import make_report, write_csv, write_report
from .scenario import BUILTINS, Scenario, ScenarioError, builtin_scenario, load_scenario

COMMANDS = ("geometry-probe", "simulate", "multipliers", "check1", "singular", "check2", "check2-free", "certify", "exg")
EXIT_OK, EXIT_SCENARIO, EXIT_NUMERIC = 0, 2, 3


class NumericalFailure(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        self.stage = stage
        super().__init__(f"{stage}: {type(exc).__name__}: {exc}")


@contextmanager
def stage(name: str):
    try:
        yield
    except ScenarioError:
        raise
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        if isinstance(exc, NumericalFailure):
            raise
        raise NumericalFailure(name, exc) from exc


@dataclass
class Options:
    T: float | None = None
    steps: int | None = None
    tol: float | None = None
    margin_tol: float | None = None
    samples: int | None = None
    seed: int | None = None
    point: str | None = None


@dataclass
class Outcome:
    verdict: str | None
    results: dict
    columns: dict | None = None


# ---------------------------------------------------------------------------
# helpers


def _tols(sc: Scenario, opts: Options) -> tuple[float, float, float]:
    nm = sc.numerics
    fo = opts.tol if opts.tol is not None else nm.first_order_tol
    sg = opts.tol if opts.tol is not None else nm.singular_tol
    mg = opts.margin_tol if opts.margin_tol is not None else nm.margin_tol
    return fo, sg, mg


def _base_columns(sc: Scenario, traj) -> dict:
    cols = {"t": traj.times}
    for i in range(traj.states.shape[1]):
        cols[f"x{i + 1}"] = traj.states[:, i]
    for i in range(traj.controls.shape[1]):
        cols[f"u{i + 1}"] = traj.controls[:, i]
    return cols


def _with_curvature(sc: Scenario, traj, cols: dict) -> dict:
    K = np.asarray(sectional_curvature_at(sc.problem.manifold, traj.states)) * np.ones(traj.N + 1)
    cols["K"] = K
    return cols


def _trajectory(sc: Scenario):
    with stage("state integration"):
        traj = sc.problem.candidate()
    with stage("admissibility"):
        adm = check_admissibility(sc.problem, traj)
    M = sc.problem.manifold
    summary = {
        "T": traj.T,
        "N": traj.N,
        "horizon": sc.problem.horizon,
        "x0": traj.states[0],
        "xT": traj.states[-1],
        "embedded_xT": M.embed(traj.states[-1]),
        "admissibility": {
            "ok": adm.ok,
            "control_ok": adm.control_ok,
            "first_bad_node": adm.first_bad_node,
            "phi_values": adm.phi_values,
            "psi_values": adm.psi_values,
        },
    }
    return traj, adm, summary


def _family(sc: Scenario, traj, free: bool):
    p = sc.problem
    with stage("adjoint"):
        basis = basis_adjoints(p.system, p.manifold, traj, p.endpoints)
        extra = free_time_rows(p.system, p.manifold, traj, basis[0]) if free else None
    with stage("multiplier cone"):
        fam = solve_multiplier_cone(p.system, p.manifold, traj, p.endpoints, extra_rows=extra, basis=basis)
    return fam


def _family_summary(fam) -> dict:
    gens = fam.generators()
    defect = float(np.max(np.abs(fam.A @ gens.T))) if gens.shape[0] else 0.0
    return {
        "labels": fam.labels,
        "A": fam.A,
        "sign_idx": fam.sign_idx,
        "zero_idx": fam.zero_idx,
        "rays": fam.rays,
        "lineality": fam.lineality,
        "empty": fam.empty,
        "method": fam.method,
        "transversality_defect": defect,
    }


def _singular_summary(rep) -> dict:
    return {
        "singular": rep.singular,
        "cone_ok": rep.cone_ok,
        "first_bad_node": rep.first_bad_node,
        "active": rep.active,
        "endpoint_terms": {str(k): v for k, v in rep.endpoint_terms.items()},
        "psi_terms": rep.psi_terms,
        "inequalities_ok": rep.inequalities_ok,
        "equalities_ok": rep.equalities_ok,
        "refined": rep.refined,
        "degeneracy": rep.degeneracy,
        "max_degeneracy": rep.max_degeneracy,
        "distance_ratio": rep.distance_ratio,
        "X_T": rep.X[-1],
    }


def _need_direction(sc: Scenario):
    if sc.v is None:
        raise ScenarioError("this command needs a singular direction", "/singular_direction")


def _second_order_columns(sc, traj, cols, ctx, ell, p_series, X):
    n = traj.states.shape[1]
    for i in range(n):
        cols[f"p{i + 1}"] = p_series[:, i]
    for i in range(n):
        cols[f"X{i + 1}"] = X[:, i]
    for name, arr in ctx.integrands.items():
        cols[name] = arr @ ell
    return _with_curvature(sc, traj, cols)


# ---------------------------------------------------------------------------
# commands


def _geometry_probe(sc: Scenario, opts: Options) -> Outcome:
    M = sc.problem.manifold
    if opts.point is None:
        raise ScenarioError("geometry-probe needs --point x1,x2,...")
    try:
        q = np.array([float(s) for s in opts.point.split(",")])
    except ValueError as exc:
        raise ScenarioError(f"bad --point: {exc}") from exc
    if q.shape != (M.dim,):
        raise ScenarioError(f"--point needs {M.dim} coordinates")
    with stage("geometry"):
        info = metric_at(M, q)
        gam = christoffel_at(M, q)
        K = float(sectional_curvature_at(M, q))
    return Outcome(None, {
        "point": q,
        "manifold": M.kind,
        "metric": info.G,
        "metric_inverse": info.Ginv,
        "metric_eigenvalues": np.linalg.eigvalsh(info.G),
        "christoffel": gam,
        "curvature": K,
    })


def _simulate(sc: Scenario, opts: Options) -> Outcome:
    traj, adm, summary = _trajectory(sc)
    verdict = None if adm.ok else "admissibility-failed"
    return Outcome(verdict, {"trajectory": summary}, _with_curvature(sc, traj, _base_columns(sc, traj)))


def _multipliers(sc: Scenario, opts: Options) -> Outcome:
    traj, adm, summary = _trajectory(sc)
    fam = _family(sc, traj, sc.problem.horizon == "free")
    verdict = "infeasible-first-order" if fam.empty else None
    return Outcome(verdict, {"trajectory": summary, "family": _family_summary(fam)},
                   _with_curvature(sc, traj, _base_columns(sc, traj)))


def _check1(sc: Scenario, opts: Options) -> Outcome:
    p = sc.problem
    fo_tol, _, _ = _tols(sc, opts)
    traj, adm, summary = _trajectory(sc)
    free = p.horizon == "free"
    fam = _family(sc, traj, free)
    rows = []
    with stage("first-order check"):
        for ell in fam.generators():
            adj = fam.adjoint(ell)
            prof = check_first_order(p.system, p.manifold, traj, ell, p.control_set, p=adj, tol=fo_tol)
            row = {"ell": ell, "max_violation": prof.max_violation, "passes": prof.passes}
            if free:
                row["free_time_residual"] = free_time_first_order_residual(p.system, p.manifold, traj, adj).max_abs
            rows.append(row)
    verdict = "infeasible-first-order" if fam.empty or not any(r["passes"] for r in rows) else None
    return Outcome(verdict, {"trajectory": summary, "family": _family_summary(fam), "first_order": rows},
                   _with_curvature(sc, traj, _base_columns(sc, traj)))


def _singular(sc: Scenario, opts: Options, free: bool | None = None) -> tuple:
    p = sc.problem
    _need_direction(sc)
    _, sg_tol, _ = _tols(sc, opts)
    traj, adm, summary = _trajectory(sc)
    free = (p.horizon == "free") if free is None else free
    fam = _family(sc, traj, free)
    xi = (sc.xi if sc.xi is not None else 0.0) if free else None
    with stage("singular direction"):
        rep = verify_singular_direction(p.system, p.manifold, traj, p.control_set, p.endpoints, sc.v,
                                        X0=sc.X0, family=fam, xi=xi, T_bar=traj.T if free else None, tol=sg_tol)
    return traj, summary, fam, rep, xi


def _singular_cmd(sc: Scenario, opts: Options) -> Outcome:
    traj, summary, fam, rep, _ = _singular(sc, opts)
    cols = _base_columns(sc, traj)
    for i in range(rep.X.shape[1]):
        cols[f"X{i + 1}"] = rep.X[:, i]
    return Outcome(None, {"trajectory": summary, "family": _family_summary(fam), "singular": _singular_summary(rep)},
                   _with_curvature(sc, traj, cols))


def _check2(sc: Scenario, opts: Options, free: bool) -> Outcome:
    p = sc.problem
    traj, summary, fam, rep, xi = _singular(sc, opts, free=free)
    results = {"trajectory": summary, "family": _family_summary(fam), "singular": _singular_summary(rep)}
    if fam.empty:
        return Outcome("infeasible-first-order", results, _with_curvature(sc, traj, _base_columns(sc, traj)))
    with stage("multiplier cone"):
        restricted = restrict_family(fam, p.system, p.manifold, traj, p.endpoints, rep.refined)
    results["restricted_family"] = _family_summary(restricted)
    if restricted.empty:
        return Outcome("infeasible-first-order", results, _with_curvature(sc, traj, _base_columns(sc, traj)))
    with stage("second-order evaluation"):
        ctx = SecondOrderContext(p.system, p.manifold, traj, p.endpoints, sc.v, rep.X, xi=xi,
                                 adjoints=fam.adjoints)
        sets = second_order_sets(p.control_set, traj, sc.v)
        gens = restricted.generators()
        sups = ctx.sup(gens, sets)
        rows = []
        for ell, s in zip(gens, sups):
            b = ctx.breakdown(ell, sc.sigma)
            rows.append({"ell": ell, "breakdown": b.as_dict(), "sup": float(s)})
    results["rays"] = rows
    results["sigma_given"] = sc.sigma is not None
    k = int(np.argmin(sups))
    ell = gens[k]
    cols = _second_order_columns(sc, traj, _base_columns(sc, traj), ctx, ell, restricted.adjoint(ell), rep.X)
    return Outcome(None, results, cols)


def _certify(sc: Scenario, opts: Options) -> Outcome:
    p = sc.problem
    _need_direction(sc)
    fo_tol, sg_tol, mg_tol = _tols(sc, opts)
    samples = opts.samples if opts.samples is not None else sc.numerics.samples
    seed = opts.seed if opts.seed is not None else sc.numerics.seed
    _, _, summary = _trajectory(sc)
    with stage("certification"):
        cert = certify_not_weak_pareto(p, sc.v, xi=sc.xi, X0=sc.X0, samples=samples, seed=seed,
                                       margin_tol=mg_tol, first_order_tol=fo_tol, singular_tol=sg_tol)
    traj = cert.trajectory
    results = {"trajectory": summary, "reason": cert.reason}
    if cert.family is not None:
        results["family"] = _family_summary(cert.family)
    if cert.singular is not None:
        results["singular"] = _singular_summary(cert.singular)
    if cert.restricted is not None:
        results["restricted_family"] = _family_summary(cert.restricted)
    cols = _base_columns(sc, traj)
    if cert.context is not None:
        ctx = cert.context
        results["rays"] = [
            {
                "ell": r.ell,
                "sup": r.sup,
                "fixed_part": r.fixed_part,
                "first_order_violation": r.first_order_violation,
                "degeneracy": r.degeneracy,
                "breakdown": ctx.breakdown(r.ell).as_dict(),
            }
            for r in cert.rays
        ]
        results["samples"] = cert.samples
        results["min_margin"] = cert.margin
        results["argmin"] = cert.argmin
        results["argmin_breakdown"] = ctx.breakdown(cert.argmin).as_dict()
        if cert.free_time_residual is not None:
            results["free_time_residual"] = cert.free_time_residual
        cols = _second_order_columns(sc, traj, cols, ctx, cert.argmin, cert.restricted.adjoint(cert.argmin),
                                     cert.singular.X)
    else:
        cols = _with_curvature(sc, traj, cols)
    return Outcome(cert.verdict, results, cols)


def run_command(cmd: str, sc: Scenario, opts: Options | None = None) -> Outcome:
    opts = opts or Options()
    if cmd == "geometry-probe":
        return _geometry_probe(sc, opts)
    if cmd == "simulate":
        return _simulate(sc, opts)
    if cmd == "multipliers":
        return _multipliers(sc, opts)
    if cmd == "check1":
        return _check1(sc, opts)
    if cmd == "singular":
        return _singular_cmd(sc, opts)
    if cmd == "check2":
        return _check2(sc, opts, free=False)
    if cmd == "check2-free":
        return _check2(sc, opts, free=True)
    if cmd in ("certify", "exg"):
        return _certify(sc, opts)
    raise ValueError(f"unknown command {cmd!r}")


# ---------------------------------------------------------------------------
# driver


def _load(args) -> Scenario:
    if args.command == "exg" and args.scenario is None:
        return builtin_scenario("example-exg", T=args.T, steps=args.steps)
    if args.builtin:
        return builtin_scenario(args.builtin, T=args.T, steps=args.steps)
    if args.scenario:
        return load_scenario(args.scenario, T=args.T, steps=args.steps)
    raise ScenarioError("give --scenario FILE or --builtin NAME")


def _options(args) -> Options:
    return Options(T=args.T, steps=args.steps, tol=args.tol, margin_tol=args.margin_tol,
                   samples=args.samples, seed=args.seed, point=args.point)


def execute(args) -> tuple[int, dict | None, str]:
    """Run one scenario; returns (exit code, report or None, message)."""
    start = time.perf_counter()
    try:
        sc = _load(args)
        out = run_command(args.command, sc, _options(args))
    except ScenarioError as exc:
        return EXIT_SCENARIO, None, f"invalid scenario: {exc}"
    except NumericalFailure as exc:
        return EXIT_NUMERIC, None, f"numerical failure in {exc}"
    rep = make_report(args.command, sc.name, sc.raw, out.results, verdict=out.verdict,
                      seconds=round(time.perf_counter() - start, 6))
    try:
        if args.report:
            write_report(rep, args.report)
        if args.csv and out.columns is not None:
            write_csv(args.csv, out.columns)
    except OSError as exc:
        return EXIT_NUMERIC, rep, f"cannot write output: {exc}"
    return EXIT_OK, rep, f"{args.command} {sc.name}: verdict={out.verdict}"


def _batch_one(args_dict: dict) -> tuple[str, int, str]:
    args = argparse.Namespace(**args_dict)
    code, _, msg = execute(args)
    return args.scenario, code, msg


def run_batch(args) -> int:
    src = Path(args.batch)
    files = sorted(src.glob("*.json"))
    if not files:
        print(f"no scenarios in {src}", file=sys.stderr)
        return EXIT_SCENARIO
    out_dir = Path(args.report) if args.report else src
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    for f in files:
        d = dict(vars(args))
        d.update(scenario=str(f), builtin=None, batch=None,
                 report=str(out_dir / f"{f.stem}.{args.command}.json"),
                 csv=str(out_dir / f"{f.stem}.{args.command}.csv") if args.csv else None)
        jobs.append(d)
    worst = EXIT_OK
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        for name, code, msg in pool.map(_batch_one, jobs):
            print(f"[{code}] {name}: {msg}")
            worst = max(worst, code)
    return worst


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="riemoc", description="Check necessary optimality conditions for "
                                 "multi-objective control problems on surfaces and certify non-optimality.")
    ap.add_argument("command", choices=COMMANDS)
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--scenario", help="scenario JSON file")
    src.add_argument("--builtin", choices=sorted(BUILTINS), help="built-in scenario")
    src.add_argument("--batch", help="directory of scenario files, run concurrently")
    ap.add_argument("--T", type=float, help="override the horizon")
    ap.add_argument("--steps", type=int, help="total number of grid steps (even)")
    ap.add_argument("--report", help="write the JSON report here (a directory with --batch)")
    ap.add_argument("--csv", help="write the per-node series here")
    ap.add_argument("--tol", type=float, help="first-order and singular-direction tolerance")
    ap.add_argument("--margin-tol", type=float, help="certification margin")
    ap.add_argument("--samples", type=int, help="cross-section samples for certification")
    ap.add_argument("--seed", type=int, help="sampling seed")
    ap.add_argument("--point", help="chart point for geometry-probe, e.g. 0,-1")
    ap.add_argument("--workers", type=int, default=None, help="processes for --batch")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.batch:
        return run_batch(args)
    code, rep, msg = execute(args)
    print(msg, file=sys.stderr)
    if code == EXIT_OK and not args.report:
        print(json.dumps(rep, indent=2))
    return code


if __name__ == "__main__":
    sys.exit(main())
