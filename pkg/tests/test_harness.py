import csv

import numpy as np
import pytest

from dpconformal import (
    PredictionInterval,
    coverage_of,
    oracle_interval,
    symmetric_difference_length,
)
from dpconformal.datagen import SyntheticSpec, gen_synthetic
from dpconformal.erm import LocationRegressor
from dpconformal.harness import (
    RESULT_COLUMNS,
    ExperimentPlan,
    derive_seed,
    fig1_plan,
    fig2_plan,
    fig3_plan,
    oracle_location_metrics,
    result_row,
    run_plan,
    run_trial,
    summarize,
)


class TestCoverage:
    def test_hand_built_three_point_case(self):
        intervals = np.array([[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]])
        assert coverage_of(intervals, np.array([0.5, 0.9, 1.5])) == pytest.approx(2 / 3)

    def test_whole_line_counts_as_covered(self):
        intervals = np.array([[-np.inf, np.inf]])
        assert coverage_of(intervals, np.array([1e12])) == 1.0

    def test_point_interval_with_continuous_responses(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=1000)
        intervals = np.column_stack([np.full(1000, 0.123), np.full(1000, 0.123)])
        assert coverage_of(intervals, y) == 0.0

    def test_empty_test_set_rejected(self):
        with pytest.raises(ValueError):
            coverage_of(np.zeros((0, 2)), np.array([]))


class TestSymmetricDifference:
    def test_identical_intervals(self):
        a = PredictionInterval(0.5, 0.5)
        assert symmetric_difference_length(a, a) == 0.0

    def test_overlapping(self):
        a = PredictionInterval(0.5, 0.5)   # [0, 1]
        b = PredictionInterval(1.0, 0.5)   # [0.5, 1.5]
        assert symmetric_difference_length(a, b) == pytest.approx(1.0)

    def test_disjoint(self):
        a = PredictionInterval(0.5, 0.5)   # [0, 1]
        b = PredictionInterval(2.5, 0.5)   # [2, 3]
        assert symmetric_difference_length(a, b) == pytest.approx(2.0)

    def test_nested(self):
        outer = PredictionInterval(0.0, 2.0)
        inner = PredictionInterval(0.0, 1.0)
        assert symmetric_difference_length(outer, inner) == pytest.approx(2.0)

    def test_whole_line_flags(self):
        finite = PredictionInterval(0.0, 1.0)
        whole = PredictionInterval(0.0, float("inf"))
        assert symmetric_difference_length(finite, whole) == float("inf")
        assert symmetric_difference_length(whole, whole) == 0.0


class TestSeeding:
    def test_derive_seed_is_stable(self):
        assert derive_seed(1, "data", 500, 3) == derive_seed(1, "data", 500, 3)
        assert derive_seed(1, "data", 500, 3) != derive_seed(1, "dpcp", 500, 3)
        assert derive_seed(1, "data", 500, 3) != derive_seed(2, "data", 500, 3)


class TestOracleVectorization:
    def test_matches_per_point_oracle(self):
        rng = np.random.default_rng(1)
        spec = SyntheticSpec()
        train = gen_synthetic(spec, 60, rng)
        test = gen_synthetic(spec, 12, rng)
        coverage, mean_length, mean_radius = oracle_location_metrics(train, test, alpha=0.2)
        intervals = [
            oracle_interval(
                LocationRegressor(), train.features, train.responses,
                test.features[i], test.responses[i], 0.2,
            )
            for i in range(test.n)
        ]
        bounds = np.array([[iv.lower, iv.upper] for iv in intervals])
        assert coverage == pytest.approx(coverage_of(bounds, test.responses))
        assert mean_length == pytest.approx(np.mean(bounds[:, 1] - bounds[:, 0]))
        assert mean_radius == pytest.approx(np.mean([iv.radius for iv in intervals]))


def tiny_plan(**overrides):
    settings = dict(
        sweep="sample-size",
        grid=(400,),
        epsilon=0.2,
        alpha=0.1,
        delta=1e-5,
        repetitions=2,
        methods=("oracle", "split", "differential", "dpcp", "pscp"),
        seed=11,
        test_size=50,
        grid_bins=200,
    )
    settings.update(overrides)
    return ExperimentPlan(**settings)


class TestRunPlan:
    def test_single_cell_single_method_one_row(self, tmp_path):
        plan = tiny_plan(methods=("split",), repetitions=1)
        results, summary = run_plan(plan)
        assert len(results) == 1
        assert summary[("split", "sample-size", 400)]["trials"] == 1

    def test_row_count_and_column_order(self, tmp_path):
        plan = tiny_plan()
        out = tmp_path / "results.csv"
        results, _ = run_plan(plan, out=out)
        assert len(results) == 5 * 2
        with open(out) as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == RESULT_COLUMNS
        assert len(rows) == 1 + len(results)

    def test_methods_share_datasets_within_cell(self):
        results, _ = run_plan(tiny_plan())
        by_rep = {}
        for r in results:
            by_rep.setdefault(r.repetition, set()).add(r.data_hash)
        for hashes in by_rep.values():
            assert len(hashes) == 1

    def test_byte_identical_rerun(self, tmp_path):
        plan = tiny_plan()
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        run_plan(plan, out=first)
        run_plan(plan, out=second)
        assert first.read_bytes() == second.read_bytes()

    def test_jobs_do_not_change_output(self, tmp_path):
        plan = tiny_plan()
        serial, parallel = tmp_path / "s.csv", tmp_path / "p.csv"
        run_plan(plan, out=serial, jobs=1)
        run_plan(plan, out=parallel, jobs=4)
        assert serial.read_bytes() == parallel.read_bytes()

    def test_infeasible_cell_recorded_not_fatal(self):
        # n=100 at epsilon=0.1 leaves 2/(n*eps2)=0.4 above the adjusted level.
        plan = tiny_plan(grid=(100,), epsilon=0.1, methods=("dpcp", "pscp"))
        results, summary = run_plan(plan)
        assert all(r.infeasible for r in results)
        assert all(r.coverage == 1.0 and np.isinf(r.mean_length) for r in results)
        stats = summary[("dpcp", "sample-size", 100)]
        assert stats["infeasible_count"] == 2
        assert stats["finite_length_trials"] == 0

    def test_summary_matches_brute_force_recomputation(self):
        results, summary = run_plan(tiny_plan())
        for (method, sweep_name, value), stats in summary.items():
            rows = [
                r for r in results
                if (r.method, r.sweep_name, r.sweep_value) == (method, sweep_name, value)
            ]
            coverages = [r.coverage for r in rows]
            assert stats["coverage_mean"] == pytest.approx(np.mean(coverages), abs=0)
            assert stats["coverage_std"] == pytest.approx(np.std(coverages), abs=0)
            finite = [r.mean_length for r in rows if np.isfinite(r.mean_length)]
            if finite:
                assert stats["length_mean"] == pytest.approx(np.mean(finite), abs=0)

    def test_budget_columns(self):
        results, _ = run_plan(tiny_plan(grid=(2000,), repetitions=1))
        by_method = {r.method: r for r in results}
        assert by_method["dpcp"].epsilon1 == pytest.approx(0.1)
        assert by_method["dpcp"].epsilon2 == pytest.approx(0.1)
        assert by_method["pscp"].epsilon1 == pytest.approx(0.1)
        assert by_method["differential"].epsilon1 == pytest.approx(0.2)
        assert by_method["differential"].epsilon2 == 0.0
        assert by_method["oracle"].epsilon == 0.0
        assert by_method["split"].epsilon == 0.0

    def test_result_row_formatting(self):
        results, _ = run_plan(tiny_plan(methods=("split",), repetitions=1))
        row = result_row(results[0])
        assert len(row) == len(RESULT_COLUMNS)
        assert row[0] == "split"
        assert row[RESULT_COLUMNS.index("infeasible_flag")] in ("true", "false")


class TestCsvDataMode:
    def test_erm_pipeline_on_csv(self, tmp_path):
        rng = np.random.default_rng(21)
        lines = ["y,a,b"]
        for _ in range(240):
            a, b = rng.normal(), rng.normal()
            lines.append(f"{0.5 * a - 0.2 * b + rng.normal(0, 0.1)},{a},{b}")
        path = tmp_path / "data.csv"
        path.write_text("\n".join(lines) + "\n")
        plan = ExperimentPlan(
            sweep="privacy-budget",
            grid=(2.0,),
            alpha=0.2,
            delta=1e-5,
            repetitions=2,
            methods=("split", "dpcp"),
            seed=5,
            data=str(path),
            response_column="y",
            feature_columns=("a", "b"),
            model="erm",
            grid_bins=200,
            ridge=0.5,
            feature_bound=3.0,
        )
        results, summary = run_plan(plan)
        assert len(results) == 4
        # Re-split per repetition: the two repetitions see different halves.
        hashes = {r.repetition: r.data_hash for r in results if r.method == "dpcp"}
        assert hashes[0] != hashes[1]
        for r in results:
            assert 0.0 <= r.coverage <= 1.0
            assert r.mean_length > 0

    def test_csv_dpcp_threshold_uses_robust_bound(self, tmp_path):
        rng = np.random.default_rng(22)
        lines = ["y,a"] + [f"{rng.normal(0, 2)},{rng.normal()}" for _ in range(400)]
        path = tmp_path / "data.csv"
        path.write_text("\n".join(lines) + "\n")
        plan = ExperimentPlan(
            sweep="privacy-budget",
            grid=(3.0,),
            alpha=0.2,
            repetitions=1,
            methods=("dpcp",),
            seed=6,
            data=str(path),
            response_column="y",
            feature_columns=("a",),
            model="erm",
            grid_bins=100,
        )
        results, _ = run_plan(plan)
        assert np.isfinite(results[0].threshold)
        assert results[0].threshold > 0


class TestPresets:
    def test_fig1_protocol(self):
        plan = fig1_plan(seed=3)
        assert plan.sweep == "sample-size"
        assert plan.alpha == 0.1 and plan.epsilon == 0.1
        assert plan.repetitions == 100

    def test_fig2_fixed_training_share(self):
        plan = fig2_plan()
        assert plan.sweep == "privacy-budget"
        assert plan.epsilon1 == 0.05 and plan.n == 2000 and plan.alpha == 0.1

    def test_fig2_epsilon_split_tracks_sweep_value(self):
        plan = fig2_plan(repetitions=1)
        result = run_trial(plan, "dpcp", 0.5, 0)
        assert result.epsilon1 == pytest.approx(0.05)
        assert result.epsilon2 == pytest.approx(0.45)

    def test_fig3_protocol(self):
        plan = fig3_plan()
        assert plan.sweep == "miscoverage"
        assert plan.epsilon == 0.1 and plan.n == 2000

    def test_plan_validation(self):
        with pytest.raises(ValueError):
            ExperimentPlan(sweep="nonsense")
        with pytest.raises(ValueError):
            ExperimentPlan(methods=("dpcp", "bogus"))
        with pytest.raises(ValueError):
            ExperimentPlan(grid=())
