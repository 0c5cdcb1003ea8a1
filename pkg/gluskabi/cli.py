"""
Command line: ``gluskabi <command> --in problem.json --out-dir DIR``.

Commands
--------
signal     solve a raccordation between two members of a type
dynamical  solve a raccordation along the trajectories of P(D)y = N(D)u
el         print the Euler-Lagrange (or latent) equation and its roots
member     equation error of a supplied trajectory
check      controllability / coprimeness report of (P, N)

Exit codes: 0 success, 2 schema violation, 3 solver failure, 4 infeasible problem.
"""
import argparse
import json
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pandas as pd

from . import conversions
from .archive import RunArchive, RunRecord
from .behavior_types import (SobolevNorm, equation_error, make_builtin_type, make_signal,
                             membership_report, sobolev_norm)
from .exceptions import GluskabiError, SchemaError
from .odesolve import BVP_RESIDUAL_TOL, COLLOCATION_NODES, GRID_POINTS, Trajectory, char_roots
from .polyops import controllability_report, is_proper, unimodular_completion
from .raccord_dynamical import (DynamicalProblem, build_eta_system, rc_circuit,
                                solve_dynamical_oracle, solve_dynamical_raccordation)
from .raccord_signal import (SignalProblem, derive_el, gluskabi_map, solve_signal_oracle,
                             solve_signal_raccordation)

SCHEMA = "gluskabi/1"
COMMANDS = ("signal", "dynamical", "el", "member", "check")
MODES = {"signal": ("signal",), "dynamical": ("dynamical",), "el": ("signal", "dynamical"),
         "member": ("membership",), "check": ("check", "dynamical")}


""" Problem files """
def load_problem(fn):
    try:
        with open(fn, 'r', encoding='utf-8') as fp:
            problem = json.load(fp)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{fn} is not valid JSON: {exc}")
    if not isinstance(problem, dict):
        raise SchemaError(f"{fn} must hold a JSON object")
    if problem.get("schema") != SCHEMA:
        raise SchemaError(f"unsupported schema {problem.get('schema')!r}, expected {SCHEMA!r}")
    return problem


def _require(problem, key):
    if key not in problem:
        raise SchemaError(f"missing field {key!r}")
    return problem[key]


def parse_interval(problem):
    iv = _require(problem, "interval")
    if not isinstance(iv, list) or len(iv) != 2:
        raise SchemaError("interval must be [a, b]")
    a, b = (float(conversions.as_rational(x)) for x in iv)
    if not a < b:
        raise SchemaError(f"empty interval [{a}, {b}]")
    return a, b


def parse_type(entry):
    if not isinstance(entry, dict) or "kind" not in entry:
        raise SchemaError("type must be {\"kind\": ..., \"params\": {...}}")
    return make_builtin_type(entry["kind"], **entry.get("params", {}))


def parse_norm(entry, interval):
    if not isinstance(entry, dict):
        raise SchemaError("a norm is {\"weights\": [...]}, {\"sobolev\": k} or {\"zero\": true}")
    if entry.get("zero"):
        return SobolevNorm.zero(interval)
    if "sobolev" in entry:
        return sobolev_norm(int(entry["sobolev"]), interval)
    return SobolevNorm(tuple(_require(entry, "weights")), interval)


def parse_plant(entry):
    if not isinstance(entry, dict):
        raise SchemaError("plant must be {\"P\": ..., \"N\": ...} or {\"rc\": {\"R\": ..., \"C\": ...}}")
    if "rc" in entry:
        return rc_circuit(_require(entry["rc"], "R"), _require(entry["rc"], "C"))
    return (conversions.polymatrix_from_json(_require(entry, "P")),
            conversions.polymatrix_from_json(_require(entry, "N")))


def build_signal_problem(problem):
    a, b = parse_interval(problem)
    T = parse_type(_require(problem, "type"))
    Q = parse_norm(problem.get("norm", {"weights": [1]}), (a, b))
    w1 = make_signal(_require(problem, "w1"), at=a)
    w2 = make_signal(_require(problem, "w2"), at=b)
    return SignalProblem.from_signals(T, Q, w1, w2), w1, w2


def build_dynamical_problem(problem):
    a, b = parse_interval(problem)
    T = parse_type(_require(problem, "type"))
    P, N = parse_plant(_require(problem, "plant"))
    Qu = parse_norm(problem.get("norm_u", {"weights": [1]}), (a, b))
    Qy = parse_norm(problem.get("norm_y", {"weights": [1]}), (a, b))

    def signal(key, at):
        return make_signal(problem[key], at=at) if problem.get(key) is not None else None

    return DynamicalProblem.from_signals(P, N, T, Qu, Qy, signal("u1", a), signal("y1", a),
                                         signal("u2", b), signal("y2", b))


""" Commands """
def _options(problem, args):
    opts = dict(problem.get("options", {}))
    for key in ("grid", "tol", "pad", "el_form", "nodes"):
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    if getattr(args, "oracle", False):
        opts["oracle"] = True
    return opts


def run_signal(problem, opts, verbose):
    sp, w1, w2 = build_signal_problem(problem)
    w = solve_signal_raccordation(sp, el_form=opts.get("el_form", "derived"),
                                  n_grid=int(opts.get("grid", GRID_POINTS)),
                                  n_nodes=int(opts.get("nodes", COLLOCATION_NODES)),
                                  tol=float(opts.get("tol", BVP_RESIDUAL_TOL)), verbose=verbose)
    e = equation_error(sp.type, w)
    frame = w.to_frame()
    for j in range(e.ncomp):
        frame["e" if e.ncomp == 1 else f"e{j + 1}"] = e.samples[:, j]
    meta = {key: w.report[key] for key in w.report}
    if opts.get("oracle"):
        oracle = solve_signal_oracle(sp, verbose=verbose)
        meta["oracle_cost"] = oracle.report["cost"]
    tables = {"trajectory": frame}
    pad = float(opts.get("pad", 0.0))
    if pad > 0:
        tables["map"] = gluskabi_map(sp, w, w1, w2, pad)
    return tables, meta


def run_dynamical(problem, opts, verbose):
    dp = build_dynamical_problem(problem)
    u, y = solve_dynamical_raccordation(dp, n_grid=int(opts.get("grid", GRID_POINTS)),
                                        tol=float(opts.get("tol", BVP_RESIDUAL_TOL)), verbose=verbose)
    frame = u.to_frame()
    for j, label in enumerate(y.labels):
        frame[label] = y.samples[:, j]
    meta = dict(u.report)
    if opts.get("oracle"):
        oracle = solve_dynamical_oracle(dp, unweighted=u.report["unweighted_conditions"], verbose=verbose)
        meta["oracle_cost"] = oracle.report["cost"]
    return {"trajectory": frame}, meta


def run_el(problem, opts, verbose):
    a, b = parse_interval(problem)
    T = parse_type(_require(problem, "type"))
    if problem.get("mode") == "dynamical":
        P, N = parse_plant(_require(problem, "plant"))
        Qu = parse_norm(problem.get("norm_u", {"weights": [1]}), (a, b))
        Qy = parse_norm(problem.get("norm_y", {"weights": [1]}), (a, b))
        eta = build_eta_system(P, N, T, Qu, Qy, verbose=verbose)
        out = eta.to_dict()
        charpoly = eta.charpoly
        out["text"] = f"({eta.canonical}) η = 0"
    else:
        Q = parse_norm(problem.get("norm", {"weights": [1]}), (a, b))
        el = derive_el(T, Q, opts.get("el_form", "derived"))
        out = el.to_dict()
        out["text"] = str(el)
        charpoly = el.poly if el.kind == "linear" else None
    if charpoly is not None:
        out["roots"] = [[z.real, z.imag, m] for z, m in char_roots(charpoly)]
    sys.stdout.write(out["text"] + "\n")
    return {}, out


def run_member(problem, opts, verbose):
    a, b = parse_interval(problem)
    T = parse_type(_require(problem, "type"))
    entry = _require(problem, "trajectory")
    n = int(opts.get("grid", GRID_POINTS))
    if "generator" in entry:
        w = make_signal(entry["generator"], at=a).trajectory((a, b), n)
    elif "samples" in entry:
        t = np.asarray(_require(entry["samples"], "t"), dtype=float)
        values = np.asarray(_require(entry["samples"], "values"), dtype=float)
        w = Trajectory.from_samples(t, values)
    else:
        raise SchemaError("trajectory needs a \"generator\" or \"samples\"")
    report = membership_report(T, w)
    tol = float(opts.get("tol", 1e-6))
    report["member"] = bool(report["relative"] <= tol)
    report["tolerance"] = tol
    e = equation_error(T, w)
    frame = pd.DataFrame({"t": w.grid})
    for j in range(e.ncomp):
        frame["e" if e.ncomp == 1 else f"e{j + 1}"] = e.samples[:, j]
    sys.stdout.write(f"max |Op w| = {report['max_residual']:.6g} (relative {report['relative']:.3g})\n")
    return {"error": frame}, report


def run_check(problem, opts, verbose):
    P, N = parse_plant(_require(problem, "plant"))
    report = controllability_report(P, N)
    out = {"minors": [str(m) for m in report["minors"]], "gcd": str(report["gcd"]),
           "controllable": bool(report["controllable"]), "proper": bool(is_proper(P, N)),
           "det_P": str(P.det())}
    if report["controllable"]:
        out["completion"] = conversions.polymatrix_to_json(unimodular_completion(N, P, verbose=verbose))
    sys.stdout.write(f"controllable: {out['controllable']}, gcd of minors: {out['gcd']}\n")
    return {}, out


RUNNERS = {"signal": run_signal, "dynamical": run_dynamical, "el": run_el,
           "member": run_member, "check": run_check}
SUFFIXES = {"signal": "", "dynamical": "", "el": "_el", "member": "_member", "check": "_check"}


""" Output """
def write_outputs(stem, out_dir, command, problem, tables, meta, elapsed, archive=False, verbose=False):
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, stem)
    written = []
    for name, frame in tables.items():
        csv = f"{base}_{name}.csv"
        conversions.write_atomic(csv, lambda tmp, df=frame: conversions._dataframe_to_csv(df, tmp))
        written.append(csv)
        if name == "trajectory":
            fea = f"{base}_{name}.feather"
            conversions.write_atomic(fea, lambda tmp, df=frame: conversions._dataframe_to_feather(df, tmp))
            written.append(fea)
    suffix = SUFFIXES[command] or "_meta"
    doc = {"schema": SCHEMA, "command": command, "problem": problem, "result": meta}
    conversions.json_dump_atomic(doc, f"{base}{suffix}.json")
    conversions.json_dump_atomic({"command": command, "seconds": elapsed}, f"{base}_timing.json")
    written += [f"{base}{suffix}.json", f"{base}_timing.json"]
    if archive:
        record = RunRecord(meta=json.loads(json.dumps(meta, default=conversions._json_default)), **tables)
        archive = RunArchive(record, name=base)
        written.append(archive.save(verbose=verbose))
        archive.cleanup()
    if verbose:
        for f in written:
            sys.stdout.write(f"\tWrote {f}\n")
    return written


def run_file(fn, command, args):
    """One problem file end to end; returns the exit code."""
    verbose = not args.quiet
    stem = os.path.splitext(os.path.basename(fn))[0]
    try:
        problem = load_problem(fn)
        mode = problem.get("mode")
        if mode not in MODES[command]:
            raise SchemaError(f"command {command!r} does not apply to mode {mode!r}")
        opts = _options(problem, args)
        if verbose:
            sys.stdout.write(f"\t{command}: {fn}\n")
        start = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            tables, meta = RUNNERS[command](problem, opts, verbose)
        if caught:
            meta = dict(meta, warnings=sorted({f"{w.category.__name__}: {w.message}" for w in caught}))
            for w in caught:
                sys.stderr.write(f"warning: {w.category.__name__}: {w.message}\n")
        elapsed = time.perf_counter() - start
        write_outputs(stem, args.out_dir, command, problem, tables, meta, elapsed,
                      archive=args.archive, verbose=verbose)
        return 0
    except GluskabiError as err:
        diag = dict(err.to_dict(), file=fn, command=command)
        sys.stderr.write(json.dumps(diag, sort_keys=True) + "\n")
        return err.exit_code
    except (OSError, KeyError, TypeError, ValueError) as err:
        diag = {"error": "SchemaError", "message": str(err), "file": fn, "command": command, "details": {}}
        sys.stderr.write(json.dumps(diag, sort_keys=True) + "\n")
        return SchemaError.exit_code


def build_parser():
    parser = argparse.ArgumentParser(prog="gluskabi", description="Maximally persistent transitions (raccordations).")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="FILE",
                        help="problem file(s) (JSON, schema gluskabi/1)")
    parser.add_argument("--out-dir", required=True, help="folder for the output files")
    parser.add_argument("--grid", type=int, default=None, help="output samples on [a, b]")
    parser.add_argument("--nodes", type=int, default=None, help="collocation nodes (nonlinear types)")
    parser.add_argument("--tol", type=float, default=None, help="solver residual tolerance")
    parser.add_argument("--pad", type=float, default=None, help="extend plot data by the members on both sides")
    parser.add_argument("--el-form", dest="el_form", choices=("derived", "printed"), default=None)
    parser.add_argument("--oracle", action="store_true", help="also run the direct-minimization oracle")
    parser.add_argument("--archive", action="store_true", help="bundle the outputs as <stem>.tar.gz")
    parser.add_argument("--batch", action="store_true", help="solve the input files in parallel")
    parser.add_argument("--workers", type=int, default=None, help="worker processes for --batch")
    parser.add_argument("--quiet", action="store_true", help="no progress output")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.batch and len(args.inputs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            codes = list(pool.map(run_file, args.inputs, [args.command] * len(args.inputs),
                                  [args] * len(args.inputs)))
    else:
        codes = [run_file(fn, args.command, args) for fn in args.inputs]
    return max(codes, default=0)


if __name__ == "__main__":
    sys.exit(main())
