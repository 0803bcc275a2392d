"""Experiment orchestration: seeded sweeps, coverage/length metrics, CSV output.

Every trial derives its random streams from a stable hash of (master seed,
stream name, sweep value, repetition), so all methods inside one cell see the
same dataset and a rerun of the same plan is byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .budget import PrivacyBudget
from .conformal import (
    METHOD_DIFFERENTIAL,
    METHOD_DPCP,
    METHOD_ORACLE,
    METHOD_PSCP,
    METHOD_SPLIT,
    DifferentialConformalRegressor,
    DpcpRegressor,
    PredictionInterval,
    PscpRegressor,
    SplitConformalRegressor,
    oracle_interval,
)
from .datagen import SyntheticSpec, TabularDataset, gen_synthetic, load_csv, robust_score_bound
from .erm import LaplaceLocationRegressor, LipschitzErmRegressor, LocationRegressor, PrivateErmRegressor
from .quantile import InfeasibleLevelError, conformal_index
from .validation import require_count, require_unit_open

RESULT_COLUMNS = [
    "method",
    "sweep_name",
    "sweep_value",
    "repetition",
    "n",
    "epsilon",
    "epsilon1",
    "epsilon2",
    "alpha",
    "delta",
    "coverage",
    "mean_length",
    "threshold",
    "infeasible_flag",
    "data_hash",
    "seed",
]

SWEEPS = ("sample-size", "privacy-budget", "miscoverage")
ALL_METHODS = (METHOD_ORACLE, METHOD_SPLIT, METHOD_DIFFERENTIAL, METHOD_DPCP, METHOD_PSCP)


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 64-bit stream seed from the master seed and labeling parts."""
    token = "|".join([str(int(master_seed)), *map(str, parts)])
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class ExperimentPlan:
    """One sweep: vary a single knob, hold the others fixed, repeat."""

    sweep: str = "sample-size"
    grid: tuple = (500, 1000, 2000, 4000, 8000)
    n: int = 2000
    epsilon: float = 0.1
    alpha: float = 0.1
    delta: float = 1e-5
    repetitions: int = 100
    methods: tuple = ALL_METHODS
    seed: int = 0
    test_size: int = 500
    epsilon1: float | None = None
    level_rule: str = "identity"
    grid_bins: int = 1000
    score_bound: float | None = None
    data: str = "synthetic"
    response_column: str = ""
    feature_columns: tuple = ()
    model: str = "location"
    sigma_eps: float = 5.0
    b: float = 5.0
    ridge: float = 1.0
    feature_bound: float = 1.0

    def __post_init__(self):
        if self.sweep not in SWEEPS:
            raise ValueError(f"sweep must be one of {SWEEPS}, got {self.sweep!r}")
        if not self.grid:
            raise ValueError("sweep grid must be nonempty")
        # Sample sizes are counts, the other sweeps are real-valued; normalize
        # here so plan files and presets produce identical CSV tokens.
        if self.sweep == "sample-size":
            object.__setattr__(self, "grid", tuple(int(v) for v in self.grid))
        else:
            object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))
        require_count(self.repetitions, "repetitions")
        require_count(self.test_size, "test_size")
        unknown = [m for m in self.methods if m not in ALL_METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {ALL_METHODS}")
        if self.model not in ("location", "erm"):
            raise ValueError(f"model must be 'location' or 'erm', got {self.model!r}")

    def cell_params(self, sweep_value) -> dict:
        params = {"n": self.n, "epsilon": self.epsilon, "alpha": self.alpha}
        key = {"sample-size": "n", "privacy-budget": "epsilon", "miscoverage": "alpha"}[self.sweep]
        params[key] = sweep_value
        if self.sweep == "sample-size":
            params["n"] = int(sweep_value)
        return params


def fig1_plan(seed: int = 0, repetitions: int = 100) -> ExperimentPlan:
    """Coverage and length versus sample size at alpha=0.1, epsilon=0.1."""
    return ExperimentPlan(
        sweep="sample-size",
        grid=(200, 500, 1000, 2000, 4000, 8000),
        epsilon=0.1,
        alpha=0.1,
        delta=1e-5,
        repetitions=repetitions,
        seed=seed,
    )


def fig2_plan(seed: int = 0, repetitions: int = 100) -> ExperimentPlan:
    """Coverage and length versus total budget; training share fixed at 0.05."""
    return ExperimentPlan(
        sweep="privacy-budget",
        grid=(0.1, 0.2, 0.3, 0.5, 0.75, 1.0),
        n=2000,
        alpha=0.1,
        delta=1e-5,
        repetitions=repetitions,
        epsilon1=0.05,
        seed=seed,
    )


def fig3_plan(seed: int = 0, repetitions: int = 100) -> ExperimentPlan:
    """Coverage and length versus target miscoverage at epsilon=0.1, n=2000."""
    return ExperimentPlan(
        sweep="miscoverage",
        grid=(0.05, 0.1, 0.15, 0.2, 0.25, 0.3),
        n=2000,
        epsilon=0.1,
        delta=1e-5,
        repetitions=repetitions,
        seed=seed,
    )


PRESETS = {"fig1": fig1_plan, "fig2": fig2_plan, "fig3": fig3_plan}


@dataclass
class TrialResult:
    method: str
    sweep_name: str
    sweep_value: float
    repetition: int
    n: int
    epsilon: float
    epsilon1: float
    epsilon2: float
    alpha: float
    delta: float
    coverage: float
    mean_length: float
    threshold: float
    infeasible: bool
    data_hash: str
    seed: int


def coverage_of(intervals, y_test) -> float:
    """Fraction of test responses inside their interval.

    ``intervals`` is an (n, 2) array of [lower, upper]; whole-line rows have
    infinite bounds and therefore count as covered.
    """
    intervals = np.asarray(intervals, dtype=float)
    y_test = np.asarray(y_test, dtype=float)
    if y_test.size == 0:
        raise ValueError("test set must be nonempty")
    covered = (intervals[:, 0] <= y_test) & (y_test <= intervals[:, 1])
    return float(covered.mean())


def symmetric_difference_length(a: PredictionInterval, b: PredictionInterval) -> float:
    """Lebesgue measure of the symmetric difference of two intervals.

    If exactly one interval is the whole line the difference has infinite
    measure; if both are, it is empty.
    """
    if a.is_whole_line and b.is_whole_line:
        return 0.0
    if a.is_whole_line or b.is_whole_line:
        return float("inf")
    intersection = max(0.0, min(a.upper, b.upper) - max(a.lower, b.lower))
    return a.length + b.length - 2.0 * intersection


def mean_interval_length(intervals) -> float:
    intervals = np.asarray(intervals, dtype=float)
    lengths = intervals[:, 1] - intervals[:, 0]
    return float(lengths.mean())


def oracle_location_metrics(train: TabularDataset, test: TabularDataset, alpha: float):
    """Vectorized per-test-point oracle metrics for the location model.

    For each test pair the oracle refits the mean residual on the augmented
    dataset; that refit is an O(1) incremental-mean update, so the whole test
    set is evaluated with one (test x train) score matrix.
    """
    residuals = train.responses - train.features[:, 0]
    test_residuals = test.responses - test.features[:, 0]
    n = residuals.size
    centers_shift = (residuals.sum() + test_residuals) / (n + 1)
    scores = np.abs(residuals[None, :] - centers_shift[:, None])
    own = np.abs(test_residuals - centers_shift)
    all_scores = np.hstack([scores, own[:, None]])
    k = conformal_index(alpha, n)
    radii = np.partition(all_scores, k - 1, axis=1)[:, k - 1]
    covered = own <= radii
    return float(covered.mean()), float(2.0 * radii.mean()), float(radii.mean())


def _whole_line_result(base: dict) -> tuple[float, float, float]:
    return 1.0, float("inf"), float("inf")


class _TrialContext:
    """Resolved per-cell configuration shared by all methods."""

    def __init__(self, plan: ExperimentPlan, sweep_value, repetition: int):
        self.plan = plan
        self.sweep_value = sweep_value
        self.repetition = repetition
        params = plan.cell_params(sweep_value)
        self.alpha = float(params["alpha"])
        self.epsilon = float(params["epsilon"])
        self.n = int(params["n"])
        require_unit_open(self.alpha, "alpha")
        if plan.epsilon1 is not None:
            if not (0.0 < plan.epsilon1 < self.epsilon):
                raise ValueError(
                    f"fixed epsilon1={plan.epsilon1} must lie strictly inside "
                    f"(0, epsilon={self.epsilon})"
                )
            self.train_fraction = plan.epsilon1 / self.epsilon
        else:
            self.train_fraction = 0.5
        self.epsilon1 = self.epsilon * self.train_fraction
        self.epsilon2 = self.epsilon - self.epsilon1

    def rng_for(self, stream: str) -> np.random.Generator:
        return np.random.default_rng(
            derive_seed(self.plan.seed, stream, self.plan.sweep, self.sweep_value, self.repetition)
        )

    def datasets(self) -> tuple[TabularDataset, TabularDataset]:
        plan = self.plan
        if plan.data == "synthetic":
            rng = self.rng_for("data")
            spec = SyntheticSpec(b=plan.b, sigma_eps=plan.sigma_eps)
            train = gen_synthetic(spec, self.n, rng)
            test = gen_synthetic(spec, plan.test_size, rng)
            return train, test
        split_seed = derive_seed(plan.seed, "data", plan.sweep, self.sweep_value, self.repetition)
        train, test = load_csv(
            plan.data,
            plan.response_column,
            list(plan.feature_columns),
            split=(0.5, split_seed),
        )
        if self.n < train.n:
            train = TabularDataset(
                features=train.features[: self.n],
                responses=train.responses[: self.n],
                column_names=train.column_names,
                metadata=train.metadata,
            )
        return train, test

    def score_bound(self, train: TabularDataset) -> float:
        if self.plan.score_bound is not None:
            return float(self.plan.score_bound)
        if self.plan.data == "synthetic":
            # The generator's noise support is public: |y - x - b| <= 3 sigma.
            return 3.0 * float(self.plan.sigma_eps)
        return robust_score_bound(train.responses)

    def baseline_trainer(self):
        if self.plan.model == "location":
            return LocationRegressor()
        return LipschitzErmRegressor(ridge=self.plan.ridge, feature_bound=self.plan.feature_bound)

    def private_trainer(self):
        if self.plan.model == "location":
            return LaplaceLocationRegressor(sigma_eps=self.plan.sigma_eps, epsilon=1.0)
        return PrivateErmRegressor(
            ridge=self.plan.ridge, feature_bound=self.plan.feature_bound, epsilon=1.0, delta=self.plan.delta
        )


def run_trial(plan: ExperimentPlan, method: str, sweep_value, repetition: int) -> TrialResult:
    ctx = _TrialContext(plan, sweep_value, repetition)
    train, test = ctx.datasets()
    rng = ctx.rng_for(method)
    alpha, epsilon, delta = ctx.alpha, ctx.epsilon, float(plan.delta)
    epsilon1 = epsilon2 = 0.0
    infeasible = False

    try:
        if method == METHOD_ORACLE:
            if plan.model == "location":
                coverage, mean_length, threshold = oracle_location_metrics(train, test, alpha)
            else:
                intervals = [
                    oracle_interval(
                        ctx.baseline_trainer(), train.features, train.responses,
                        test.features[i], test.responses[i], alpha,
                    )
                    for i in range(test.n)
                ]
                bounds = np.array([[iv.lower, iv.upper] for iv in intervals])
                coverage = coverage_of(bounds, test.responses)
                mean_length = mean_interval_length(bounds)
                threshold = float(np.mean([iv.radius for iv in intervals]))
        else:
            estimator = _build_estimator(ctx, method, train)
            estimator.fit(train.features, train.responses, rng=rng)
            bounds = estimator.predict_interval(test.features)
            coverage = coverage_of(bounds, test.responses)
            mean_length = mean_interval_length(bounds)
            threshold = float(estimator.threshold_)
            epsilon1, epsilon2 = _budget_columns(ctx, method)
    except InfeasibleLevelError:
        coverage, mean_length, threshold = _whole_line_result({})
        infeasible = True
        epsilon1, epsilon2 = _budget_columns(ctx, method)

    if method in (METHOD_ORACLE, METHOD_SPLIT):
        epsilon, delta = 0.0, 0.0

    return TrialResult(
        method=method,
        sweep_name=plan.sweep,
        sweep_value=sweep_value,
        repetition=repetition,
        n=ctx.n,
        epsilon=epsilon,
        epsilon1=epsilon1,
        epsilon2=epsilon2,
        alpha=alpha,
        delta=delta,
        coverage=coverage,
        mean_length=mean_length,
        threshold=threshold,
        infeasible=infeasible,
        data_hash=train.content_hash(),
        seed=plan.seed,
    )


def _budget_columns(ctx: _TrialContext, method: str) -> tuple[float, float]:
    if method == METHOD_DPCP:
        return ctx.epsilon1, ctx.epsilon2
    if method == METHOD_PSCP:
        return ctx.epsilon / 2.0, ctx.epsilon / 2.0
    if method == METHOD_DIFFERENTIAL:
        return ctx.epsilon, 0.0
    return 0.0, 0.0


def _build_estimator(ctx: _TrialContext, method: str, train: TabularDataset):
    plan = ctx.plan
    if method == METHOD_SPLIT:
        return SplitConformalRegressor(trainer=ctx.baseline_trainer(), alpha=ctx.alpha)
    if method == METHOD_DIFFERENTIAL:
        trainer = ctx.private_trainer().set_params(epsilon=ctx.epsilon)
        return DifferentialConformalRegressor(
            trainer=trainer, alpha=ctx.alpha, epsilon=ctx.epsilon, delta=plan.delta
        )
    if method == METHOD_DPCP:
        return DpcpRegressor(
            trainer=ctx.private_trainer(),
            alpha=ctx.alpha,
            epsilon=ctx.epsilon,
            delta=plan.delta,
            train_fraction_of_epsilon=ctx.train_fraction,
            score_bound=ctx.score_bound(train),
            grid=None if plan.grid_bins == 1000 else _grid_from_bins(plan.grid_bins),
        )
    if method == METHOD_PSCP:
        return PscpRegressor(
            trainer=ctx.private_trainer(),
            alpha=ctx.alpha,
            epsilon=ctx.epsilon,
            delta=plan.delta,
            level_rule=plan.level_rule,
            score_bound=ctx.score_bound(train),
            grid=None if plan.grid_bins == 1000 else _grid_from_bins(plan.grid_bins),
        )
    raise ValueError(f"unknown method {method!r}")


def _grid_from_bins(bins: int):
    from .quantile import uniform_grid

    return uniform_grid(bins)


def _format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        # Cast first: numpy scalar reprs are not round-trippable CSV tokens.
        value = float(value)
        if math.isinf(value):
            return "inf"
        return repr(value)
    return str(value)


def result_row(result: TrialResult) -> list[str]:
    values = [
        result.method,
        result.sweep_name,
        result.sweep_value,
        result.repetition,
        result.n,
        result.epsilon,
        result.epsilon1,
        result.epsilon2,
        result.alpha,
        result.delta,
        result.coverage,
        result.mean_length,
        result.threshold,
        result.infeasible,
        result.data_hash,
        result.seed,
    ]
    return [_format_value(v) for v in values]


def run_plan(plan: ExperimentPlan, out=None, jobs: int = 1) -> tuple[list[TrialResult], dict]:
    """Run every (sweep value, method, repetition) trial of the plan.

    Writes one CSV row per trial (column order fixed by ``RESULT_COLUMNS``)
    plus a summary CSV next to it, and returns the in-memory rows and summary.
    A write failure leaves a ``<out>.partial`` marker before re-raising.
    """
    tasks = [
        (method, value, rep)
        for value in plan.grid
        for method in plan.methods
        for rep in range(plan.repetitions)
    ]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda t: run_trial(plan, *t), tasks))
    else:
        results = [run_trial(plan, *task) for task in tasks]

    summary = summarize(results)
    if out is not None:
        out = Path(out)
        try:
            _write_results(out, results)
            _write_summary(out.with_suffix(".summary.csv"), summary)
        except OSError:
            marker = out.with_suffix(out.suffix + ".partial")
            try:
                marker.touch()
            except OSError:
                pass
            raise
    return results, summary


def _write_results(path: Path, results: list[TrialResult]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for result in results:
            writer.writerow(result_row(result))


SUMMARY_COLUMNS = [
    "method",
    "sweep_name",
    "sweep_value",
    "trials",
    "coverage_mean",
    "coverage_std",
    "length_mean",
    "length_std",
    "finite_length_trials",
    "infeasible_count",
]


def summarize(results: list[TrialResult]) -> dict:
    """Per (method, sweep value) means and population stds of the raw rows.

    Length statistics are computed over trials with finite length; the count
    of such trials and of infeasible trials is reported alongside.
    """
    cells: dict = {}
    for result in results:
        cells.setdefault((result.method, result.sweep_name, result.sweep_value), []).append(result)
    summary = {}
    for key in cells:
        rows = cells[key]
        coverages = np.array([r.coverage for r in rows])
        lengths = np.array([r.mean_length for r in rows])
        finite = lengths[np.isfinite(lengths)]
        summary[key] = {
            "trials": len(rows),
            "coverage_mean": float(coverages.mean()),
            "coverage_std": float(coverages.std()),
            "length_mean": float(finite.mean()) if finite.size else float("inf"),
            "length_std": float(finite.std()) if finite.size else float("inf"),
            "finite_length_trials": int(finite.size),
            "infeasible_count": int(sum(r.infeasible for r in rows)),
        }
    return summary


def _write_summary(path: Path, summary: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for (method, sweep_name, sweep_value), stats in summary.items():
            writer.writerow(
                [
                    method,
                    sweep_name,
                    _format_value(sweep_value),
                    stats["trials"],
                    *(
                        _format_value(stats[k])
                        for k in (
                            "coverage_mean",
                            "coverage_std",
                            "length_mean",
                            "length_std",
                            "finite_length_trials",
                            "infeasible_count",
                        )
                    ),
                ]
            )
