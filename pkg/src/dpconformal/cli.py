"""Command-line entry point.

Subcommands: ``experiment`` (run a sweep plan to CSV), ``predict`` (one
interval on a dataset), ``check-feasibility`` (level arithmetic report).
Exit codes: 0 success, 1 I/O failure, 2 usage error, 3 infeasible parameters.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .conformal import (
    DifferentialConformalRegressor,
    DpcpRegressor,
    InvalidLevelError,
    PscpRegressor,
    SplitConformalRegressor,
)
from .datagen import SyntheticSpec, gen_synthetic, load_csv
from .harness import ALL_METHODS, PRESETS, ExperimentPlan, derive_seed, run_plan
from .quantile import InfeasibleLevelError

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3

_INT_KEYS = {"n", "repetitions", "seed", "test_size", "grid_bins"}
_FLOAT_KEYS = {
    "epsilon", "alpha", "delta", "epsilon1", "sigma_eps", "b",
    "score_bound", "ridge", "feature_bound",
}
_LIST_KEYS = {"grid", "methods", "feature_columns"}
_PLAN_KEYS = {f.name for f in fields(ExperimentPlan)}


class UsageError(ValueError):
    pass


def _parse_plan_value(key: str, raw: str):
    if key not in _PLAN_KEYS:
        raise UsageError(f"unknown plan key {key!r}; valid keys: {sorted(_PLAN_KEYS)}")
    raw = raw.strip()
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return None if raw.lower() == "none" else float(raw)
    if key == "grid":
        values = [float(tok) for tok in raw.split(",") if tok.strip()]
        return tuple(int(v) if v == int(v) else v for v in values)
    if key in _LIST_KEYS:
        return tuple(tok.strip() for tok in raw.split(",") if tok.strip())
    return raw


def parse_plan_file(path: str) -> dict:
    settings = {}
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{line_no}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        settings[key.strip()] = _parse_plan_value(key.strip(), raw)
    return settings


def _apply_overrides(settings: dict, overrides: list[str]) -> dict:
    for item in overrides or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        settings[key.strip()] = _parse_plan_value(key.strip(), raw)
    return settings


def _build_plan(args) -> ExperimentPlan:
    if (args.preset is None) == (args.plan is None):
        raise UsageError("exactly one of --preset or --plan is required")
    if args.preset is not None:
        if args.preset not in PRESETS:
            raise UsageError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        base = PRESETS[args.preset](seed=args.seed if args.seed is not None else 0)
        settings = {f.name: getattr(base, f.name) for f in fields(ExperimentPlan)}
    else:
        plan_path = Path(args.plan)
        if not plan_path.exists():
            raise UsageError(f"plan file not found: {plan_path}")
        settings = parse_plan_file(args.plan)
    if args.seed is not None:
        settings["seed"] = args.seed
    _apply_overrides(settings, args.set)
    try:
        return ExperimentPlan(**settings)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid plan: {exc}") from exc


def cmd_experiment(args) -> int:
    plan = _build_plan(args)
    out_dir = Path(args.out)
    results_path = out_dir / "results.csv"
    try:
        results, summary = run_plan(plan, out=results_path, jobs=args.jobs)
    except OSError as exc:
        print(f"error: failed writing results: {exc}", file=sys.stderr)
        return EXIT_IO
    infeasible = sum(r.infeasible for r in results)
    print(f"wrote {len(results)} trial rows to {results_path}")
    print(f"wrote summary to {results_path.with_suffix('.summary.csv')}")
    if infeasible:
        print(f"note: {infeasible} trials were infeasible and fell back to the whole line")
    return EXIT_OK


def _predict_dataset(args):
    if args.csv is not None:
        if not args.response or not args.features:
            raise UsageError("--csv needs --response and --features")
        train, _ = load_csv(
            args.csv,
            args.response,
            [c.strip() for c in args.features.split(",")],
            split=(0.0, args.seed),
        )
        return train
    spec = SyntheticSpec(sigma_eps=args.sigma_eps)
    rng = np.random.default_rng(derive_seed(args.seed, "predict-data"))
    return gen_synthetic(spec, args.synthetic_n, rng)


def _predict_estimator(args, train):
    from .erm import LaplaceLocationRegressor, LipschitzErmRegressor, LocationRegressor, PrivateErmRegressor

    location = train.metadata.get("process") == "synthetic-location"
    baseline = LocationRegressor() if location else LipschitzErmRegressor()
    if location:
        private = LaplaceLocationRegressor(sigma_eps=args.sigma_eps, epsilon=1.0)
        bound = 3.0 * args.sigma_eps
    else:
        private = PrivateErmRegressor(epsilon=1.0, delta=args.delta)
        from .datagen import robust_score_bound

        bound = robust_score_bound(train.responses)
    if args.method == "oracle":
        # No test label exists at prediction time, so the full-data reference
        # here is the non-private no-split constructor at the plain level.
        return DifferentialConformalRegressor(trainer=baseline, alpha=args.alpha)
    if args.method == "split":
        return SplitConformalRegressor(trainer=baseline, alpha=args.alpha)
    if args.method == "differential":
        private.set_params(epsilon=args.epsilon)
        return DifferentialConformalRegressor(
            trainer=private, alpha=args.alpha, epsilon=args.epsilon, delta=args.delta
        )
    if args.method == "dpcp":
        return DpcpRegressor(
            trainer=private, alpha=args.alpha, epsilon=args.epsilon, delta=args.delta,
            score_bound=bound,
        )
    if args.method == "pscp":
        return PscpRegressor(
            trainer=private, alpha=args.alpha, epsilon=args.epsilon, delta=args.delta,
            level_rule=args.level_rule, score_bound=bound,
        )
    raise UsageError(f"unknown method {args.method!r}; choose from {ALL_METHODS}")


def cmd_predict(args) -> int:
    train = _predict_dataset(args)
    estimator = _predict_estimator(args, train)
    x_row = np.array([[float(tok) for tok in args.x.split(",")]])
    if x_row.shape[1] != train.features.shape[1]:
        raise UsageError(
            f"--x has {x_row.shape[1]} values but the data has {train.features.shape[1]} features"
        )
    rng = np.random.default_rng(derive_seed(args.seed, "predict", args.method))
    try:
        estimator.fit(train.features, train.responses, rng=rng)
    except InfeasibleLevelError as exc:
        print(
            f"method={args.method} feasible=no reason=infeasible-level "
            f"min_n={exc.min_n} min_epsilon={exc.min_epsilon:.6g}"
        )
        return EXIT_INFEASIBLE
    except InvalidLevelError as exc:
        print(f"method={args.method} feasible=no reason=invalid-level detail={exc}")
        return EXIT_INFEASIBLE
    interval = estimator.interval_at(x_row[0])
    record = estimator.record_
    print(
        f"method={args.method} "
        f"center={interval.center:.6g} lower={interval.lower:.6g} upper={interval.upper:.6g} "
        f"radius={interval.radius:.6g} level_used={record.level_used:.6g} "
        f"epsilon_spent={record.epsilon_spent.epsilon:.6g} delta_spent={record.epsilon_spent.delta:.6g} "
        f"private_release={'yes' if record.private_release else 'no'} "
        f"whole_line={'yes' if interval.is_whole_line else 'no'} seed={args.seed}"
    )
    return EXIT_OK


def cmd_check_feasibility(args) -> int:
    epsilon1 = args.epsilon * args.train_fraction
    epsilon2 = args.epsilon - epsilon1
    if args.alpha <= args.delta:
        print(f"alpha={args.alpha} delta={args.delta} status=fail reason=alpha<=delta")
        return EXIT_OK
    alpha1 = math.exp(-epsilon1) * (args.alpha - args.delta)
    bound = 2.0 / (args.n * epsilon2) if epsilon2 > 0 else math.inf
    margin = alpha1 - bound
    status = "pass" if margin > 0 else "fail"
    print(
        f"n={args.n} epsilon={args.epsilon} alpha={args.alpha} delta={args.delta} "
        f"epsilon1={epsilon1:.6g} epsilon2={epsilon2:.6g} alpha1={alpha1:.6g} "
        f"margin={margin:.6g} status={status}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpconformal",
        description="Differentially private conformal prediction experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    experiment = sub.add_parser("experiment", help="run a sweep plan and write results CSV")
    experiment.add_argument("--preset", choices=sorted(PRESETS), default=None)
    experiment.add_argument("--plan", default=None, help="key=value plan file")
    experiment.add_argument("--out", default="results", help="output directory")
    experiment.add_argument("--seed", type=int, default=None)
    experiment.add_argument("--jobs", type=int, default=1)
    experiment.add_argument("--set", action="append", metavar="KEY=VALUE")
    experiment.set_defaults(func=cmd_experiment)

    predict = sub.add_parser("predict", help="print one prediction interval")
    predict.add_argument("--method", required=True)
    predict.add_argument("--csv", default=None)
    predict.add_argument("--response", default=None)
    predict.add_argument("--features", default=None)
    predict.add_argument("--synthetic-n", type=int, default=2000)
    predict.add_argument("--sigma-eps", type=float, default=5.0)
    predict.add_argument("--x", required=True, help="comma-separated covariate row")
    predict.add_argument("--alpha", type=float, default=0.1)
    predict.add_argument("--epsilon", type=float, default=0.1)
    predict.add_argument("--delta", type=float, default=1e-5)
    predict.add_argument("--level-rule", default="identity")
    predict.add_argument("--seed", type=int, default=0)
    predict.set_defaults(func=cmd_predict)

    check = sub.add_parser("check-feasibility", help="report the level arithmetic")
    check.add_argument("--n", type=int, required=True)
    check.add_argument("--epsilon", type=float, required=True)
    check.add_argument("--alpha", type=float, default=0.1)
    check.add_argument("--delta", type=float, default=1e-5)
    check.add_argument("--train-fraction", type=float, default=0.5)
    check.set_defaults(func=cmd_check_feasibility)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleLevelError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
