"""Command-line interface: ``kroncov {generate,estimate,experiment,verify}``.

Exit codes
----------
0  success
1  ``verify`` found a failing check
2  bad command line (unknown flag, conflicting options)
3  malformed or unreadable input file
4  the computation was rejected (shape mismatch, violated precondition,
   numerical failure)
"""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import (
    default_lam0,
    estimate,
    lambda_grid,
    select_lambda,
)
from .exceptions import ContractError, NumericalError, ShapeError
from .experiment import (
    calibrate_omega,
    records_to_csv,
    run_experiment,
    summarize,
)
from .io import (
    FormatError,
    file_sha256,
    load_experiment_spec,
    load_model,
    matrix_to_csv,
    read_data_csv,
    read_matrix_csv,
    write_matrix_csv,
)
from .model import assemble_sigma, factorize_for_sampling, sample_matrix_model
from .rearrangement import BlockShape
from .verify import run_checks

logger = logging.getLogger("kroncov")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_FORMAT, EXIT_COMPUTE = 0, 1, 2, 3, 4

METHOD_ALIASES = {
    "sample": "sample",
    "pls": "pls_soft",
    "pls_soft": "pls_soft",
    "pca": "pca_hard",
    "pca_hard": "pca_hard",
    "hard": "pca_hard",
    "rank_one": "rank_one",
    "rank-one": "rank_one",
}


class UsageError(Exception):
    pass


def _out_dir(args):
    path = Path(args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_generate(args):
    model, sampling = load_model(args.model)
    n = args.n if args.n is not None else sampling.get("n")
    seed = args.seed if args.seed is not None else sampling.get("seed", 0)
    if n is None:
        raise UsageError("sample size missing: pass --n or set sampling.n in the model file")
    out = _out_dir(args)
    sigma = assemble_sigma(model)
    data = sample_matrix_model(factorize_for_sampling(model), int(n), seed=int(seed))
    write_matrix_csv(out / "sigma.csv", sigma)
    write_matrix_csv(out / "data.csv", data.vectors)
    provenance = {
        "seed": int(seed),
        "n": int(n),
        "d": model.shape.d,
        "p": model.shape.p,
        "q": model.shape.q,
        "k": model.k,
        "model_file": str(args.model),
        "model_sha256": file_sha256(args.model),
        "kroncov_version": __version__,
    }
    (out / "provenance.json").write_text(json.dumps(provenance, indent=2) + "\n")
    print(f"wrote {out / 'sigma.csv'}, {out / 'data.csv'}, {out / 'provenance.json'}")
    return EXIT_OK


def _parse_grid(text, data, shape, halvings):
    if text == "auto":
        return lambda_grid(default_lam0(data, shape), halvings)
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--lambda-grid: {exc}") from exc
    return np.array(sorted(values, reverse=True))


def cmd_estimate(args):
    method = METHOD_ALIASES.get(args.method)
    if method is None:
        raise UsageError(f"unknown method {args.method!r}")
    if args.lam is not None and args.lambda_grid is not None:
        raise UsageError("--lambda and --lambda-grid are mutually exclusive")
    if method != "pls_soft" and (args.lam is not None or args.lambda_grid is not None):
        raise UsageError("--lambda/--lambda-grid only apply to --method pls")
    if method == "pls_soft" and args.lam is None and args.lambda_grid is None:
        raise UsageError("--method pls needs --lambda or --lambda-grid")
    if method == "pca_hard" and args.k is None:
        raise UsageError("--method pca needs --k")
    shape = BlockShape(args.p, args.q)
    data = read_data_csv(args.data, pre_center=args.pre_center)
    truth = read_matrix_csv(args.truth) if args.truth else None
    lam, scores, grid = args.lam, None, None
    if method == "pls_soft" and args.lambda_grid is not None:
        grid = _parse_grid(args.lambda_grid, data, shape, args.halvings)
        lam, scores = select_lambda(
            data,
            shape,
            grid,
            split_fraction=args.split,
            repetitions=args.repetitions,
            seed=args.seed,
        )
    report = estimate(data, shape, method, lam=lam, k=args.k, truth=truth)
    text = matrix_to_csv(report.estimate)
    if args.output:
        Path(args.output).write_text(text)
    else:
        (_out_dir(args) / "estimate.csv").write_text(text)
    doc = report.to_dict()
    if grid is not None:
        doc["lambda_grid"] = [float(g) for g in grid]
        doc["lambda_scores"] = [float(s) for s in scores]
    json.dump(doc, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_experiment(args):
    spec, calibration = load_experiment_spec(args.spec)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.delta is not None:
        overrides["delta"] = args.delta
    if args.trials is not None:
        overrides["trials"] = args.trials
    policy = spec.lambda_policy
    if args.omega is not None:
        if policy.kind == "theorem1":
            policy = dataclasses.replace(policy, omega=args.omega)
            calibration = None
        else:
            overrides["omega"] = args.omega
    try:
        spec = dataclasses.replace(spec, lambda_policy=policy, **overrides)
    except ContractError as exc:
        raise UsageError(str(exc)) from exc
    if calibration is not None:
        omega = calibrate_omega(
            spec,
            reference_n=int(calibration["reference_n"]),
            pilot_trials=int(calibration["pilot_trials"]),
        )
        spec = dataclasses.replace(spec, lambda_policy=dataclasses.replace(policy, omega=omega))
    records = run_experiment(spec, threads=args.threads)
    out = _out_dir(args)
    (out / "records.csv").write_text(records_to_csv(records))
    timing = ["trial,estimator,n,wall_time\n"] + [
        f"{r.trial},{r.estimator},{r.n},{r.wall_time!r}\n" for r in records
    ]
    (out / "timings.csv").write_text("".join(timing))
    summary = summarize(spec, records)
    summary["spec"] = spec.to_dict()
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write_medians(out / "medians.csv", summary)
    if args.plot:
        _plot(out / "error_vs_n.svg", summary)
    print(json.dumps({k: summary[k] for k in summary if k != "spec"}, indent=2))
    return EXIT_OK


def _write_medians(path, summary):
    lines = ["estimator,n,median_frobenius_error\n"]
    for name, entry in summary["estimators"].items():
        for n, m in zip(entry["n"], entry["median_frobenius_error"]):
            lines.append(f"{name},{n},{m!r}\n")
    path.write_text("".join(lines))


def _plot(path, summary):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for name, entry in summary["estimators"].items():
        ax.loglog(entry["n"], entry["median_frobenius_error"], marker="o", label=name)
    ax.set_xlabel("n")
    ax.set_ylabel("median Frobenius error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_verify(args):
    failed = 0
    results = run_checks(seed=args.seed, trials=args.trials)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failed += not r.passed
        print(f"{status}  {r.name:<40s} residual={r.residual:.3e}  tol={r.tolerance:.0e}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kroncov", description="Kronecker-structured covariance estimation."
    )
    parser.add_argument("--version", action="version", version=f"kroncov {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="sample data from a model file")
    gen.add_argument("model", help="model file (YAML/JSON)")
    gen.add_argument("--n", type=int, help="sample size (overrides the model file)")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--out-dir", default=".")
    gen.set_defaults(func=cmd_generate)

    est = sub.add_parser("estimate", help="estimate a covariance from a data CSV")
    est.add_argument("data", help="data CSV, one observation per row")
    est.add_argument("--p", type=int, required=True)
    est.add_argument("--q", type=int, required=True)
    est.add_argument("--method", default="pls", help="sample | pls | pca | rank_one")
    est.add_argument("--lambda", dest="lam", type=float)
    est.add_argument(
        "--lambda-grid",
        help="comma-separated penalties, or 'auto' for 2*sigma_1 * 2**-j, j=0..--halvings",
    )
    est.add_argument("--halvings", type=int, default=16)
    est.add_argument("--split", type=float, default=0.5)
    est.add_argument("--repetitions", type=int, default=5)
    est.add_argument("--k", type=int, help="components kept by --method pca")
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--truth", help="matrix CSV of the true covariance, for error norms")
    est.add_argument("--pre-center", action="store_true", help="subtract the column means first")
    est.add_argument("--out-dir", default=".")
    est.add_argument("-o", "--output", help="estimate CSV path (default OUT_DIR/estimate.csv)")
    est.set_defaults(func=cmd_estimate)

    exp = sub.add_parser("experiment", help="run a Monte Carlo experiment spec")
    exp.add_argument("spec", help="experiment spec file (YAML/JSON)")
    exp.add_argument("--seed", type=int)
    exp.add_argument("--threads", type=int, default=1)
    exp.add_argument("--delta", type=float)
    exp.add_argument("--omega", type=float)
    exp.add_argument("--trials", type=int)
    exp.add_argument("--out-dir", default=".")
    exp.add_argument("--plot", action="store_true", help="also write error_vs_n.svg")
    exp.set_defaults(func=cmd_experiment)

    ver = sub.add_parser("verify", help="run the identity/property check battery")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--trials", type=int, default=100)
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"kroncov {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"kroncov {args.command}: bad input: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ShapeError, ContractError, NumericalError, ValueError) as exc:
        print(f"kroncov {args.command}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
