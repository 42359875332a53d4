"""Command line front end.

Subcommands
-----------
balance    reweight one group (from a CSV or a simulation) and write an
           estimate report, the weights, and a run manifest.
replicate  estimate-error table across methods and regularization values
           on a simulation, as plot-ready CSV.
coverage   empirical certificate coverage on the exactly linear
           generative process.

Every run writes exactly one ``manifest.json`` next to its results.  All
outputs are byte-deterministic given the same arguments and seeds;
wall-clock timings are recorded only with ``--record-timings``.

Exit codes: 0 success, 2 usage, 3 data, 4 solver.  On failure a
machine-readable error object is printed to stdout.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import weighted_estimate
from .divergence import DivergenceSpec
from .errors import DataError, FlexbalError, SolverFailure, UsageError, ValidationError
from .experiments import (
    DEFAULT_BUDGET_GRID,
    DEFAULT_LAMBDA_GRID,
    METHOD_DIVERGENCES,
    coverage_run,
    replicate_run,
)
from .fbal import FbalConfig
from .inference import (
    fbal_asymmetric_report,
    fbal_report,
    plain_report,
    select_k,
)
from .ingest import CsvSchema, RffConfig, load_csv, rff_expand, split_problems, standardize
from .plain_balance import PlainBalanceConfig, solve_plain
from .simgen import SimKind, SimSpec, generate

SCHEMA_VERSION = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="flexbal", description=__doc__, add_help=True)
    parser.add_argument(
        "--out",
        default=os.environ.get("FLEXBAL_OUT", "flexbal_out"),
        help="output directory (env FLEXBAL_OUT)",
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--record-timings",
        action="store_true",
        help="include wall-clock timings in the manifest (breaks byte determinism)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("balance", help="reweight one group and report an estimate")
    b.add_argument("--sim", choices=[k.value for k in SimKind])
    b.add_argument("--n", type=int, default=400)
    b.add_argument("--d", type=int, default=20)
    b.add_argument("--data", help="CSV path (alternative to --sim)")
    b.add_argument("--covariates", help="comma-separated covariate column names")
    b.add_argument("--outcome", help="outcome column name")
    b.add_argument("--treatment", help="treatment column name")
    b.add_argument("--rff", type=int, help="expand this many random Fourier features")
    b.add_argument("--bandwidth", default="median", help="RFF bandwidth or 'median'")
    b.add_argument(
        "--method", choices=["ebal", "sbw", "ncbps", "fbal"], default="fbal"
    )
    b.add_argument(
        "--lambda",
        dest="lam",
        type=float,
        default=None,
        help="regularization weight for ebal/sbw/ncbps (default 1.0, the "
        "customary entropy-balancing tolerance mapped onto the penalized form)",
    )
    b.add_argument(
        "--allow-fixed-lambda",
        action="store_true",
        help="permit --lambda together with --method fbal (pins lambda)",
    )
    b.add_argument("--divergence", choices=["kl", "chi_squared", "cbps"], default="kl")
    b.add_argument("--side", choices=["treated", "control"], default="treated")
    b.add_argument("--alpha", type=float, default=0.05)
    b.add_argument("--k", type=float, help="l1 outcome budget (default: residual bend)")
    b.add_argument("--asymmetric", action="store_true", help="two one-sided solves")
    b.add_argument("--max-iters", type=int, default=5000)

    r = sub.add_parser("replicate", help="method x lambda error table on a simulation")
    r.add_argument("--sim", required=True, choices=["subgroup", "celebrity"])
    r.add_argument("--n", type=int, default=1000)
    r.add_argument("--d", type=int, default=3000)
    r.add_argument("--reps", type=int, default=20)
    r.add_argument(
        "--lambda-grid",
        default=",".join(repr(x) for x in DEFAULT_LAMBDA_GRID),
        help="comma-separated regularization grid for the baselines",
    )
    r.add_argument("--methods", default="ebal,sbw,ncbps")
    r.add_argument("--no-fbal", action="store_true")
    r.add_argument("--plain-iters", type=int, default=3000)
    r.add_argument("--fbal-iters", type=int, default=3000)

    c = sub.add_parser("coverage", help="certificate coverage on linear-sparse data")
    c.add_argument("--n", type=int, default=300)
    c.add_argument("--d", type=int, default=100)
    c.add_argument("--k-true", type=float, default=3.0)
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--reps", type=int, default=500)
    c.add_argument("--fbal-iters", type=int, default=2000)
    return parser


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"
    )


def _manifest(args, parser_args: dict, extra: dict, started: float) -> dict:
    manifest = {
        "command": args.command,
        "config": parser_args,
        "seed": args.seed,
        "artifact_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "input_digests": extra.get("input_digests", {}),
        "timings": None,
    }
    if args.record_timings:
        manifest["timings"] = {"wall_seconds": time.time() - started}
    return manifest


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolved_config(args) -> dict:
    skip = {"record_timings"}
    return {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in skip and not key.startswith("_")
    }


def _load_problem(args):
    digests = {}
    if args.data:
        if not (args.covariates and args.outcome and args.treatment):
            raise UsageError("--data requires --covariates, --outcome, --treatment")
        digests[args.data] = _digest(args.data)
        schema = CsvSchema(
            covariates=tuple(s.strip() for s in args.covariates.split(",")),
            outcome=args.outcome,
            treatment=args.treatment,
        )
        ds = load_csv(args.data, schema)
        ds, _ = standardize(ds)
        if args.rff:
            bw = args.bandwidth if args.bandwidth == "median" else float(args.bandwidth)
            ds, _ = rff_expand(ds, RffConfig(out_dim=args.rff, bandwidth=bw, seed=args.seed))
        if args.k is not None:
            k = args.k
        else:
            mask = ds.t == (1 if args.side == "treated" else 0)
            k = select_k(ds.X[mask], ds.y[mask], DEFAULT_BUDGET_GRID).k
        treated, control = split_problems(ds, k=k, alpha=args.alpha)
        problem = treated if args.side == "treated" else control
        return problem, digests
    if not args.sim:
        raise UsageError("provide --sim or --data")
    sim = generate(
        SimSpec(kind=SimKind(args.sim), n=args.n, d=args.d, seed=args.seed,
                alpha=args.alpha)
    )
    problem = sim.treated if args.side == "treated" else sim.control
    if args.k is not None:
        from .core import BalanceProblem

        problem = BalanceProblem(
            X=problem.X, Y=problem.Y, target=problem.target,
            conc_radius=problem.conc_radius, k=args.k, alpha=problem.alpha,
        )
    else:
        k = select_k(problem.X, problem.Y, DEFAULT_BUDGET_GRID).k
        from .core import BalanceProblem

        problem = BalanceProblem(
            X=problem.X, Y=problem.Y, target=problem.target,
            conc_radius=problem.conc_radius, k=k, alpha=problem.alpha,
        )
    return problem, digests


def _write_weights(path: Path, weights: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "weight"])
        for i, w in enumerate(weights):
            writer.writerow([i, repr(float(w))])


def _cmd_balance(args, out: Path, started: float) -> int:
    if args.method == "fbal" and args.lam is not None and not args.allow_fixed_lambda:
        raise UsageError(
            "--lambda with --method fbal pins the regularization; pass "
            "--allow-fixed-lambda to confirm"
        )
    problem, digests = _load_problem(args)
    if args.method == "fbal":
        config = FbalConfig(
            divergence={
                "kl": DivergenceSpec.kl,
                "chi_squared": DivergenceSpec.chi_squared,
                "cbps": DivergenceSpec.cbps,
            }[args.divergence](),
            max_iters=args.max_iters,
            fixed_lambda=args.lam,
        )
        if args.asymmetric:
            from .fbal import asymmetric_interval

            interval = asymmetric_interval(problem, config)
            report = fbal_asymmetric_report(problem, config, interval=interval)
            weights = interval.weights_plus.w
        else:
            from .fbal import solve_fbal

            sol = solve_fbal(problem, config)
            report = fbal_report(problem, config, solution=sol)
            weights = sol.weights.w
    else:
        lam = 1.0 if args.lam is None else args.lam
        cfg = PlainBalanceConfig(
            divergence=METHOD_DIVERGENCES[args.method](),
            lam=lam,
            max_iters=args.max_iters,
        )
        result = solve_plain(problem, cfg)
        report = plain_report(problem, result, lam)
        weights = result.weights.w

    _write_json(out / "report.json", report.to_json_dict())
    _write_weights(out / "weights.csv", weights)
    _write_json(
        out / "manifest.json",
        _manifest(args, _resolved_config(args), {"input_digests": digests}, started),
    )
    return 0


def _cmd_replicate(args, out: Path, started: float) -> int:
    lambda_grid = [float(s) for s in args.lambda_grid.split(",") if s.strip()]
    methods = [s.strip() for s in args.methods.split(",") if s.strip()]
    rows = replicate_run(
        sim_kind=args.sim,
        n=args.n,
        d=args.d,
        reps=args.reps,
        seed=args.seed,
        lambda_grid=lambda_grid,
        methods=methods,
        include_fbal=not args.no_fbal,
        plain_max_iters=args.plain_iters,
        fbal_max_iters=args.fbal_iters,
    )
    with open(out / "replicate.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "lambda", "rep", "estimate", "abs_error"])
        for row in rows:
            writer.writerow(
                [
                    row["method"],
                    "" if row["lambda"] is None else repr(row["lambda"]),
                    row["rep"],
                    repr(row["estimate"]),
                    repr(row["abs_error"]),
                ]
            )
    _write_json(
        out / "manifest.json",
        _manifest(args, _resolved_config(args), {}, started),
    )
    return 0


def _cmd_coverage(args, out: Path, started: float) -> int:
    summary = coverage_run(
        n=args.n,
        d=args.d,
        k_true=args.k_true,
        alpha=args.alpha,
        reps=args.reps,
        seed=args.seed,
        fbal_max_iters=args.fbal_iters,
    )
    _write_json(out / "coverage.json", summary)
    _write_json(
        out / "manifest.json",
        _manifest(args, _resolved_config(args), {}, started),
    )
    return 0


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"error": {"type": kind, "message": message}}, sort_keys=True))
    return code


def main(argv=None) -> int:
    parser = _build_parser()
    started = time.time()
    try:
        args = parser.parse_args(argv)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "balance":
            return _cmd_balance(args, out, started)
        if args.command == "replicate":
            return _cmd_replicate(args, out, started)
        return _cmd_coverage(args, out, started)
    except UsageError as exc:
        return _fail(2, "usage", str(exc))
    except (DataError, FileNotFoundError) as exc:
        return _fail(3, "data", str(exc))
    except SolverFailure as exc:
        return _fail(4, "solver", str(exc))
    except ValidationError as exc:
        return _fail(3, "validation", str(exc))
    except FlexbalError as exc:
        return _fail(1, "error", str(exc))


if __name__ == "__main__":
    sys.exit(main())
