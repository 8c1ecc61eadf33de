"""Command-line front end: ``obsv <command> --scenario <path> [--out DIR] [--seed N] [--delta PATH]``.

Exit codes: 0 when the check passes, 1 for a negative result, 2 for usage
or parse errors. Every command writes a JSON report (sorted keys) and CSV
tables (``.17g`` floats) into the output directory and nothing elsewhere.
"""
import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import config
from .errors import (BlowUpError, HypothesisNotMet, InfeasibleGeometry, ObsvError, OrderCapError,
                     UnobservableForAllInputs)
from .identities import run_suite
from .jets import default_kmax, main_eq_check
from .matpoly import p_sequence
from .parallel import ordered_map
from .perturb import dumps_delta, loads_delta, norm_k_K, search_delta
from .scenario import ScenarioError, build, load_scenario
from .simulate import (deviation_bound, eta0_report, gramian, integrate_coupled, near_target_radius,
                       write_trajectory_csv)
from .state import CoupledState
from .systems import observability_matrix, singular_input_scan

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad arguments or inputs; maps to exit code 2."""


# output helpers ------------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


class Output:
    """Single writer for one output directory."""

    def __init__(self, root):
        self.root = Path(root)
        self.written = []

    def _path(self, name):
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / name
        self.written.append(name)
        return path

    def json(self, name, obj):
        text = json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"
        self._path(name).write_text(text)

    def text(self, name, text):
        self._path(name).write_text(text)

    def csv(self, name, header, rows):
        with open(self._path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _table(header, rows):
    cells = [[str(h) for h in header]] + [[c if isinstance(c, str) else f"{c:.6g}" for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _say(*parts):
    print(*parts, flush=True)


# context ---------------------------------------------------------------------------

def _experiment(args):
    if args.scenario is None:
        raise UsageError("--scenario is required")
    sc = load_scenario(args.scenario)
    return build(sc, seed=args.seed)


def _output(args, exp):
    out = args.out if args.out is not None else exp.scenario.output_dir
    return Output(out)


def _delta(args, n):
    if args.delta is None:
        return None
    try:
        return loads_delta(Path(args.delta).read_text(), n)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot load perturbation {args.delta}: {exc}") from None


def _seed(args, exp):
    return exp.scenario.seed if args.seed is None else args.seed


# commands ----------------------------------------------------------------------------

def cmd_check_pairs(args):
    exp = _experiment(args)
    out = _output(args, exp)
    sysm = exp.system
    report = {}
    rows = []
    for name, M in (("A", sysm.A), ("B", sysm.B)):
        om = observability_matrix(sysm.C, M)
        observable = om.rank == sysm.n
        report[f"C,{name}"] = {"rank": om.rank, "n": sysm.n, "observable": observable,
                               "smallest_singular_value": om.smallest_singular_value,
                               "singular_values": om.singular_values}
        rows.append([f"(C,{name})", str(om.rank), om.smallest_singular_value, "yes" if observable else "NO"])
    ok = all(r["observable"] for r in report.values())
    report["passed"] = ok
    out.json("check_pairs.json", report)
    _say(_table(["pair", "rank", "sigma_min", "observable"], rows))
    return EXIT_OK if ok else EXIT_NEGATIVE


def cmd_scan_singular(args):
    exp = _experiment(args)
    out = _output(args, exp)
    sysm = exp.system
    method = args.method or ("symbolic-determinant" if sysm.m == 1 else "grid")
    if method == "symbolic-determinant" and sysm.m != 1:
        raise UsageError("the determinant method needs a single output row; use --method grid")
    T = exp.scenario.T
    report = {"method": method, "T": T}
    try:
        found = singular_input_scan(sysm, method=method)
    except UnobservableForAllInputs as exc:
        report.update(unobservable_for_all_inputs=True, singular_inputs=[], message=str(exc))
        out.json("singular_inputs.json", report)
        out.csv("singular_inputs.csv", ["u", "sigma_min", "gramian_lambda_min", "gramian_tol_obs"], [])
        _say(f"unobservable for every constant input: {exc}")
        return EXIT_NEGATIVE
    rows = []
    items = []
    for s in found:
        g = gramian(sysm, s.u, T)
        rows.append([s.u + 0.0, s.sigma_min, g.lambda_min, g.tol_obs])
        items.append({"u": s.u + 0.0, "sigma_min": s.sigma_min, "gramian_lambda_min": g.lambda_min,
                      "gramian_tol_obs": g.tol_obs, "gramian_observable": g.observable})
    report.update(unobservable_for_all_inputs=False, singular_inputs=items)
    out.json("singular_inputs.json", report)
    out.csv("singular_inputs.csv", ["u", "sigma_min", "gramian_lambda_min", "gramian_tol_obs"], rows)
    if rows:
        _say(_table(["u*", "sigma_min", "lambda_min(W)", "tol_obs"], rows))
    else:
        _say("no singular constant inputs")
    return EXIT_OK


def _simulate_one(exp, delta, kmax, item):
    idx, init = item
    sc = exp.scenario
    tol = sc.tolerances
    try:
        traj = integrate_coupled(exp.system, exp.observer, exp.feedback, delta, init, sc.T,
                                 rtol=tol.rtol, atol=tol.atol)
    except BlowUpError as exc:
        return idx, init, None, None, None, str(exc)
    rep = traj.gramian_report(rel_tol=tol.obs_rel)
    w0 = init.omega
    if abs(np.linalg.norm(w0) - 1.0) > 1e-9:
        w0 = rep.weakest_direction
    probe = CoupledState(init.xhat, init.eps, init.xi, w0)
    k0 = main_eq_check(exp.system, exp.observer, exp.feedback, delta, probe, kmax=kmax).order
    return idx, init, traj, rep, k0, None


def cmd_simulate(args):
    exp = _experiment(args)
    out = _output(args, exp)
    delta = _delta(args, exp.n)
    sc = exp.scenario
    kmax = sc.tolerances.jet_kmax if sc.tolerances.jet_kmax is not None else default_kmax(exp.n)
    results = ordered_map(lambda item: _simulate_one(exp, delta, kmax, item), list(enumerate(exp.grid)))
    header = (["index"] + [f"xhat0_{i + 1}" for i in range(exp.n)] + [f"eps0_{i + 1}" for i in range(exp.n)]
              + ["lambda_min", "tol_obs", "margin", "observable", "k0", "blowup"])
    rows = []
    points = []
    for idx, init, traj, rep, k0, err in results:
        name = f"trajectory_{idx:03d}.csv"
        if traj is not None:
            write_trajectory_csv(traj, out._path(name), sc.grids.output_samples)
            lam, tol_obs, margin, obs = rep.lambda_min, rep.tol_obs, rep.margin, rep.observable
        else:
            lam = tol_obs = margin = 0.0
            obs = False
        rows.append([str(idx), *init.xhat, *init.eps, lam, tol_obs, margin, "yes" if obs else "no",
                     "none" if k0 is None else str(k0), "yes" if err else "no"])
        points.append({"index": idx, "xhat0": init.xhat, "eps0": init.eps, "lambda_min": lam, "tol_obs": tol_obs,
                       "margin": margin, "observable": obs, "k0": k0, "blowup": err,
                       "csv": name if traj is not None else None})
    ok = all(p["observable"] for p in points)
    out.csv("summary.csv", header, rows)
    out.json("simulate.json", {"T": sc.T, "perturbed": delta is not None, "kmax": kmax, "observable": ok,
                               "worst_margin": min(p["margin"] for p in points), "points": points})
    _say(_table(["#", "lambda_min", "tol_obs", "observable", "k0"],
                [[r[0], r[-6], r[-5], r[-3], r[-2]] for r in rows]))
    return EXIT_OK if ok else EXIT_NEGATIVE


def cmd_verify_identities(args):
    if args.random is not None:
        n_max, kmax, seed = args.random
        if n_max < 1 or kmax < 0 or seed < 0:
            raise UsageError("--random needs n >= 1, kmax >= 0 and seed >= 0")
        if kmax > config.KMAX_LIMIT:
            raise UsageError(f"kmax={kmax} exceeds the limit {config.KMAX_LIMIT}")
        params = dict(systems=10, n_max=n_max, imax=4, kmax=kmax, jet_samples=50, jet_kmax=kmax, seed=seed)
        out = Output(args.out if args.out is not None else "out")
        exp = None
    else:
        exp = _experiment(args)
        out = _output(args, exp)
        ident = exp.scenario.identities
        params = ident.model_dump()
        params["seed"] = _seed(args, exp)
        if max(params["kmax"], params["imax"], params["jet_kmax"]) > config.KMAX_LIMIT:
            raise UsageError(f"orders exceed the limit {config.KMAX_LIMIT}")
    results, ok = run_suite(fault=args.inject_fault, **params)
    report = {"parameters": params, "passed": ok,
              "results": [{"name": r.name, "passed": r.passed, "required": r.required, "checked": r.checked,
                           "worst": r.worst, "detail": r.detail} for r in results]}
    if exp is not None:
        seq = p_sequence(exp.system.A, exp.system.B, 3)
        report["scenario_polynomials"] = {f"P_{k}": P.pretty() for k, P in enumerate(seq)}
    out.json("identities.json", report)
    out.csv("identities.csv", ["name", "passed", "required", "checked", "worst"],
            [[r.name, "yes" if r.passed else "no", "yes" if r.required else "no", str(r.checked), r.worst]
             for r in results])
    _say(_table(["identity", "checked", "worst", "result"],
                [[r.name, str(r.checked), r.worst,
                  ("pass" if r.passed else "FAIL") + ("" if r.required else " (informational)")] for r in results]))
    if not ok:
        _say("identity suite FAILED")
    return EXIT_OK if ok else EXIT_NEGATIVE


def _radius_and_budget(exp):
    """``(R, eta, report)``: scenario values, falling back to the near-target construction."""
    sc = exp.scenario
    if sc.R is not None and sc.eta is not None:
        return sc.R, sc.eta, None
    rep = near_target_radius(exp.system, exp.feedback, sc.T, region=exp.K1,
                             sphere_resolution=sc.grids.sphere_resolution, time_grid=sc.grids.time_grid)
    R = sc.R if sc.R is not None else rep.R
    eta = sc.eta if sc.eta is not None else rep.eta1
    return R, eta, rep


def cmd_search_delta(args):
    exp = _experiment(args)
    out = _output(args, exp)
    sc = exp.scenario
    s = sc.search
    R, eta, _ = _radius_and_budget(exp)
    seed = _seed(args, exp)
    res = search_delta(exp.system, exp.observer, exp.feedback, exp.grid, sc.T, R, exp.K1, eta, exp.k,
                       s.budget, seed, atoms=s.atoms, rel_tol=sc.tolerances.obs_rel,
                       radius_range=tuple(s.radius_range), resolution=s.norm_resolution)
    norm = norm_k_K(res.delta, exp.k, exp.K1, s.norm_resolution).value
    report = res.to_dict()
    report.update(R=R, eta=eta, k=exp.k, budget=s.budget, seed=seed, rel_tol=sc.tolerances.obs_rel,
                  baseline_margin=res.trace[0].margin, delta_norm=norm,
                  vanishes_on_ball=res.delta.vanishes_on_ball(R), norm_below_eta=norm <= eta)
    out.text("delta.json", dumps_delta(res.delta))
    out.json("search.json", report)
    out.csv("search_trace.csv", ["index", "margin", "norm", "observable"],
            [[str(r.index), r.margin, r.norm, "yes" if r.observable else "no"] for r in res.trace])
    for w in res.warnings:
        _say(f"warning: {w}")
    _say(f"baseline margin (delta = 0): {res.trace[0].margin:.6g}")
    if res.accepted:
        _say(f"accepted candidate after {res.tried} tries, margin {res.margin:.6g} >= {sc.tolerances.obs_rel:g}")
        return EXIT_OK
    _say(f"budget of {s.budget} exhausted; best margin {res.margin:.6g} written to delta.json")
    return EXIT_NEGATIVE


def _sample_traces(rng, count, scale, T):
    """Half constant, half quadratic-in-time input traces with coefficients in ``[-scale, scale]``."""
    traces = []
    for i in range(count):
        if i % 2 == 0:
            c = float(rng.uniform(-scale, scale))
            traces.append((f"constant {c:.6g}", [c]))
        else:
            c = rng.uniform(-scale, scale, size=3) / np.array([1.0, T, T * T])
            traces.append(("quadratic", [float(v) for v in c]))
    return traces


def cmd_bounds(args):
    exp = _experiment(args)
    out = _output(args, exp)
    sc = exp.scenario
    sysm = exp.system
    try:
        nt = near_target_radius(sysm, exp.feedback, sc.T, region=exp.K1,
                                sphere_resolution=sc.grids.sphere_resolution, time_grid=sc.grids.time_grid)
    except HypothesisNotMet as exc:
        out.json("bounds.json", {"passed": False, "message": str(exc)})
        _say(f"hypothesis not met: {exc}")
        return EXIT_NEGATIVE
    e0 = eta0_report(sysm, sc.T, sc.grids.sphere_resolution, sc.grids.time_grid)
    rng = np.random.default_rng(np.random.SeedSequence([_seed(args, exp), 2]))
    rows = []
    samples = []
    for label, coef in _sample_traces(rng, 10, 1.0, sc.T):
        poly = np.polynomial.Polynomial(coef)
        rep = deviation_bound(sysm, sc.T, poly if len(coef) > 1 else coef[0], samples=sc.grids.time_grid)
        rows.append([label.split()[0], *(coef + [0.0] * (3 - len(coef))), rep.u_M, rep.lhs, rep.rhs,
                     "yes" if rep.holds else "NO"])
        samples.append({"coefficients": coef, "u_M": rep.u_M, "lhs": rep.lhs, "rhs": rep.rhs, "holds": rep.holds})
    ok = nt.R > 0 and nt.eta1 > 0 and all(s["holds"] for s in samples)
    report = {"T": sc.T, "eta0": nt.eta0, "eta0_direction": e0.direction, "M": nt.M, "K": nt.K,
              "eta_star": nt.eta_star, "eta1": nt.eta1, "R": nt.R, "u_M_on_ball": nt.u_M, "C_norm": nt.C_norm,
              "deviation_samples": samples, "passed": ok}
    out.json("bounds.json", report)
    out.csv("deviation.csv", ["kind", "c0", "c1", "c2", "u_M", "lhs", "rhs", "holds"], rows)
    _say(_table(["eta0", "M", "K", "eta1", "R"], [[nt.eta0, nt.M, nt.K, nt.eta1, nt.R]]))
    _say(f"deviation bound holds on {sum(s['holds'] for s in samples)}/{len(samples)} sampled inputs")
    return EXIT_OK if ok else EXIT_NEGATIVE


COMMANDS = {
    "check-pairs": (cmd_check_pairs, "rank report for (C, A) and (C, B)"),
    "scan-singular": (cmd_scan_singular, "constant inputs that destroy observability"),
    "simulate": (cmd_simulate, "closed-loop trajectories with Gramian and derivative verdicts"),
    "verify-identities": (cmd_verify_identities, "exact matrix-polynomial identity suite"),
    "search-delta": (cmd_search_delta, "random search for an observability-restoring perturbation"),
    "bounds": (cmd_bounds, "near-target constants and deviation-bound samples"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def make_parser():
    p = _Parser(prog="obsv", description="Observability experiments for bilinear systems under output feedback.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_) in COMMANDS.items():
        c = sub.add_parser(name, help=help_, description=help_)
        c.add_argument("--scenario", help="scenario JSON file")
        c.add_argument("--out", help="output directory (default: the scenario's output_dir)")
        c.add_argument("--seed", type=_u64, help="override the scenario seed")
        c.add_argument("--delta", help="perturbation JSON written by search-delta")
        if name == "scan-singular":
            c.add_argument("--method", choices=["symbolic-determinant", "grid"])
        if name == "verify-identities":
            c.add_argument("--random", nargs=3, type=int, metavar=("N", "KMAX", "SEED"),
                           help="random systems up to size N, orders up to KMAX")
            c.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return p


def main(argv=None):
    try:
        args = make_parser().parse_args(argv)
        fn = COMMANDS[args.command][0]
        return fn(args)
    except (UsageError, ScenarioError, OrderCapError) as exc:
        print(f"obsv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HypothesisNotMet, InfeasibleGeometry) as exc:
        print(f"obsv: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE
    except ObsvError as exc:
        print(f"obsv: error: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE


if __name__ == "__main__":
    sys.exit(main())
