"""Command-line front end.

Exit codes: 0 success, 1 I/O or numerical failure, 2 usage error,
3 non-convergence (partial output is still written when available).
"""

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__, baselines, evaluation, ot, uwax, wax
from .dataset import DataMatrix, load_csv, standardize
from .errors import NotConvergedError, WaxError

EXIT_OK, EXIT_FAILURE, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _exponent(text):
    try:
        value = ot.parse_exponent(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value >= 1:
        raise argparse.ArgumentTypeError(f"exponent must be >= 1 or 'inf', got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return values


def _add_common(parser, paired=True):
    if paired:
        parser.add_argument("source", help="source CSV file")
        parser.add_argument("target", help="target CSV file")
    parser.add_argument("--p", type=_exponent, default=2.0, help="outer exponent (default 2)")
    parser.add_argument("--q", type=_exponent, default=2.0, help="ground Minkowski exponent or 'inf'")
    parser.add_argument("--coupling", choices=ot.MODES, default="exact")
    parser.add_argument("--epsilon", type=_positive_float, default=None,
                        help="entropic regularization for --coupling sinkhorn")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None, help="write output here instead of stdout")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    parser.add_argument("--no-standardize", action="store_true",
                        help="skip pooled z-scoring of the inputs")
    parser.add_argument("--delimiter", default=",")
    parser.add_argument("--no-header", action="store_true", help="input files have no header row")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="waxplain", description="Explain Wasserstein distances between two datasets."
    )
    parser.add_argument("--version", action="version", version=f"waxplain {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distance", help="compute W_p between two datasets")
    _add_common(p)

    p = sub.add_parser("explain", help="attribute W_p to instance pairs and features")
    _add_common(p)
    p.add_argument("--alpha", type=_positive_float, default=None, help="override alpha (default p)")
    p.add_argument("--beta", type=_positive_float, default=None,
                   help="override beta (default min(p + 2, q))")

    p = sub.add_parser("subspaces", help="learn concept subspaces and attribute W_2 to them")
    _add_common(p)
    p.add_argument("--concepts", type=int, default=1)
    p.add_argument("--dims", type=_int_list, default=[1],
                   help="block size, or one comma-separated size per concept")
    p.add_argument("--r", type=float, default=2.0, help="tailedness exponent (>= 2)")
    p.add_argument("--step-size", type=_positive_float, default=0.5)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--objective-tol", type=_positive_float, default=1e-8)
    p.add_argument("--top-pairs", type=int, default=10)

    p = sub.add_parser("evaluate", help="score explanation methods (SRG or ground-truth cosine)")
    p.add_argument("inputs", nargs="+",
                   help="source and target CSV (srg) or one hourly series CSV (characterize)")
    _add_common(p, paired=False)
    p.add_argument("--metric", choices=("srg", "characterize"), default="srg")
    p.add_argument("--methods", default="wax,meanshift,occlusion,coupling")
    p.add_argument("--t", type=int, default=None, help="source hour within the period")
    p.add_argument("--dt", type=int, default=None, help="hours between source and target")
    p.add_argument("--period", type=int, default=24)
    p.add_argument("--clusters", type=int, default=3)

    p = sub.add_parser("baseline", help="run one comparison attribution method")
    _add_common(p)
    p.add_argument("--method", required=True, choices=evaluation.METHODS)
    p.add_argument("--clusters", type=int, default=3)
    return parser


def _spec(args):
    try:
        return ot.WassersteinSpec(args.p, args.q, args.coupling, args.epsilon)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(path, args):
    return load_csv(path, has_header=not args.no_header, delimiter=args.delimiter)


def _load_pair(args):
    source, target = _load(args.source, args), _load(args.target, args)
    if not args.no_standardize:
        source, target, _ = standardize(source, target)
    return source, target


def _config(args):
    skip = {"out", "format"}
    config = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        if isinstance(value, float) and math.isinf(value):
            value = "inf"
        config[key] = value
    config["standardize"] = not args.no_standardize
    return config


def _envelope(args, payload):
    return {"tool": {"name": "waxplain", "version": __version__}, "config": _config(args), **payload}


def _csv_table(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _feature_rows(names, values):
    return [[name, repr(float(v))] for name, v in zip(names, values)]


def _emit(args, payload, table=None):
    if args.format == "csv":
        if table is None:
            raise UsageError(f"--format csv is not available for '{args.command}'")
        text = table
    else:
        text = json.dumps(_envelope(args, payload), indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_distance(args):
    spec = _spec(args)
    source, target = _load_pair(args)
    z = ot.pair_distances(source, target, spec.q)
    status = EXIT_OK
    try:
        coupling = ot.solve(z, spec)
    except NotConvergedError as exc:
        coupling, status = exc.result, EXIT_NOT_CONVERGED
    distance = ot.wasserstein_distance(coupling, z, spec.p)
    payload = {
        "distance": distance,
        **spec.as_dict(),
        "coupling_support_size": coupling.support_size,
        "converged": status == EXIT_OK,
    }
    _emit(args, payload, _csv_table(["distance"], [[repr(distance)]]))
    return status


def _explain(source, target, spec, hp):
    """Run explain, falling back to the last Sinkhorn iterate if it stalls."""
    try:
        return wax.explain(source, target, spec, hp), EXIT_OK
    except NotConvergedError as exc:
        if exc.result is None:
            raise
        z = ot.pair_distances(source, target, spec.q)
        distance, pair_rel = wax.attribute_pairs(exc.result, z, spec.p, hp.alpha)
        features = wax.attribute_features(exc.result, pair_rel, source, target, hp.beta)
        return wax.Attribution(distance, exc.result, pair_rel, features, hp), EXIT_NOT_CONVERGED


def cmd_explain(args):
    spec = _spec(args)
    default = wax.default_hyperparams(spec.p, spec.q)
    try:
        hp = wax.WaxHyperparams(
            args.alpha if args.alpha is not None else default.alpha,
            args.beta if args.beta is not None else default.beta,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    source, target = _load_pair(args)
    attribution, status = _explain(source, target, spec, hp)
    residual = attribution.conservation_residuals()
    payload = {
        **attribution.to_json(),
        "feature_names": list(source.feature_names),
        **spec.as_dict(),
        "alpha": hp.alpha,
        "beta": hp.beta,
        "diagnostics": {
            "conservation_residual_pairs": residual["pairs"],
            "conservation_residual_features": residual["features"],
            "coupling_support_size": attribution.coupling.support_size,
            "converged": status == EXIT_OK,
        },
    }
    table = _csv_table(
        ["feature", "relevance"], _feature_rows(source.feature_names, attribution.feature_relevances)
    )
    _emit(args, payload, table)
    return status


def cmd_subspaces(args):
    spec = _spec(args)
    if spec.p != 2 or spec.q != 2:
        raise UsageError("subspace attribution is defined for --p 2 --q 2 only")
    if args.concepts < 1:
        raise UsageError("--concepts must be >= 1")
    dims = args.dims * args.concepts if len(args.dims) == 1 else args.dims
    if len(dims) != args.concepts:
        raise UsageError(f"--dims lists {len(dims)} sizes for {args.concepts} concepts")
    try:
        config = uwax.SubspaceOptConfig(
            tuple(dims), args.r, args.step_size, args.max_iters, args.seed, args.objective_tol
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    source, target = _load_pair(args)
    if sum(dims) > source.n_features:
        raise UsageError(f"--dims {dims} exceed the {source.n_features} available features")
    z = ot.pair_distances(source, target, 2.0)
    coupling = ot.solve(z, spec)
    status = EXIT_OK
    try:
        fit = uwax.learn_subspaces(source, target, coupling, config)
    except NotConvergedError as exc:
        fit, status = exc.result, EXIT_NOT_CONVERGED
    attribution = uwax.explain_subspaces(source, target, fit.basis, coupling)
    residual = attribution.conservation_residuals()
    payload = {
        "basis": fit.basis.to_json(),
        "objective": fit.objective,
        "iterations": fit.iterations,
        "converged": fit.converged,
        **attribution.to_json(top_pairs=args.top_pairs),
        "feature_names": list(source.feature_names),
        "diagnostics": {f"conservation_residual_{k}": v for k, v in residual.items()},
    }
    labels = [f"concept{c}" for c in range(len(dims))] + ["complement"]
    order = attribution.concept_order() + [len(dims)]
    table = _csv_table(
        ["concept", "relevance"],
        [[labels[c], repr(float(attribution.concept_relevances[c]))] for c in order],
    )
    _emit(args, payload, table)
    return status


def _methods(text):
    methods = [m.strip() for m in text.split(",") if m.strip()]
    unknown = [m for m in methods if m not in evaluation.METHODS]
    if unknown or not methods:
        raise UsageError(f"unknown method(s) {unknown}; choose from {', '.join(evaluation.METHODS)}")
    return methods


def cmd_evaluate(args):
    spec = _spec(args)
    methods = _methods(args.methods)
    if args.metric == "srg":
        if len(args.inputs) != 2:
            raise UsageError("--metric srg takes a source and a target CSV")
        args.source, args.target = args.inputs
        source, target = _load_pair(args)
        report = evaluation.srg_benchmark(source, target, methods, spec, args.seed, args.clusters)
    else:
        if len(args.inputs) != 1:
            raise UsageError("--metric characterize takes one series CSV")
        if args.t is None or args.dt is None:
            raise UsageError("--metric characterize needs --t and --dt")
        series = _load(args.inputs[0], args)
        if not args.no_standardize:
            values = series.values
            std = np.maximum(values.std(axis=0), 1e-12)
            series = DataMatrix((values - values.mean(axis=0)) / std, series.feature_names)
        report = evaluation.characterization_benchmark(
            series, args.t, args.dt, args.period, methods, spec, args.seed, args.clusters
        )
    _emit(args, report.to_json(), report.to_csv())
    return EXIT_OK


def cmd_baseline(args):
    spec = _spec(args)
    source, target = _load_pair(args)
    rel = evaluation.method_relevances(args.method, source, target, spec, args.seed, args.clusters)
    payload = {
        "method": args.method,
        "feature_relevances": [float(r) for r in rel],
        "feature_names": list(source.feature_names),
    }
    _emit(args, payload, _csv_table(["feature", "relevance"], _feature_rows(source.feature_names, rel)))
    return EXIT_OK


COMMANDS = {
    "distance": cmd_distance,
    "explain": cmd_explain,
    "subspaces": cmd_subspaces,
    "evaluate": cmd_evaluate,
    "baseline": cmd_baseline,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except NotConvergedError as exc:
        print(f"waxplain: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (WaxError, OSError, ValueError) as exc:
        print(f"waxplain: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
