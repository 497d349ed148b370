import io
import json
import math

import numpy as np
import pytest

from catsim.config import ExperimentConfig, ModelSpec, load_config
from catsim.dataio import SyntheticSpec, generate_synthetic
from catsim.errors import ConfigError, ShapeError
from catsim.harness import (
    SimulationCurve,
    compare_baselines,
    curve_area,
    emit_results,
    majority_baseline,
    read_results,
    run_experiment,
    sign_test_pvalue,
)


def planted_config(models, seed=3, students=120, questions=8, budget=None, k=10):
    return ExperimentConfig.from_dict(
        {
            "seed": seed,
            "k": k,
            "budget": budget,
            "dataset": {"synthetic": {"kind": "bayes-net", "students": students, "questions": questions, "network": {"model": "simple_3s"}}},
            "models": models,
        }
    )


class TestConfig:
    def test_roster_required(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"dataset": {"file": "x.csv"}, "models": []})

    def test_k_at_least_two(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"k": 1, "dataset": {"file": "x.csv"}, "models": [{"label": "i", "type": "irt"}]})

    def test_unknown_option(self):
        with pytest.raises(ConfigError):
            ModelSpec.from_dict({"label": "n", "type": "nn", "layers": 2})

    def test_bn_needs_model_or_network(self):
        with pytest.raises(ConfigError):
            ModelSpec.from_dict({"label": "b", "type": "bn"})

    def test_selection_variants_share_fit(self):
        a = ModelSpec.from_dict({"label": "a", "type": "bn", "model": "simple_3s"})
        b = ModelSpec.from_dict({"label": "b", "type": "bn", "model": "simple_3s", "selection": "random"})
        assert a.fit_key() == b.fit_key()

    def test_synthetic_inherits_root_seed(self):
        config = planted_config([{"label": "i", "type": "irt"}], seed=17)
        assert config.synthetic.seed == 17

    def test_file_relative_to_config(self, tmp_path):
        (tmp_path / "c.yaml").write_text("dataset: {file: data.csv}\nmodels: [{label: i, type: irt}]\n")
        assert load_config(tmp_path / "c.yaml").data_file == tmp_path / "data.csv"


@pytest.fixture(scope="module")
def planted():
    models = [
        {"label": "s3", "type": "bn", "model": "simple_3s"},
        {"label": "s3_random", "type": "bn", "model": "simple_3s", "selection": "random"},
        {"label": "nn", "type": "nn", "hidden": 3, "epochs": 100},
    ]
    return run_experiment(planted_config(models, students=150))


class TestRunExperiment:
    def test_budget_zero(self):
        result = run_experiment(planted_config([{"label": "irt", "type": "irt"}], budget=0))
        assert len(result.curves["irt"].values) == 1

    def test_planted_model_improves(self, planted):
        curve = planted.curves["s3"]
        assert curve.values[-1] >= curve.values[0]
        assert curve.values[-1] > majority_baseline(planted.dataset, planted.folds)

    def test_curve_bookkeeping(self, planted):
        curve = planted.curves["s3"]
        assert len(curve.values) == 9
        assert curve.n_students == 150
        assert sum(curve.fold_sizes) == 150
        assert all(0.0 <= v <= 1.0 for v in curve.values)
        weighted = sum(n * v[3] for n, v in zip(curve.fold_sizes, curve.per_fold)) / 150
        assert curve.values[3] == pytest.approx(weighted, abs=1e-12)

    def test_folds_disjoint(self, planted):
        plan = planted.folds
        for f in range(plan.k):
            assert set(plan.train_indices(f)).isdisjoint(plan.test_indices(f))

    def test_random_selection_same_prior(self, planted):
        assert planted.curves["s3"].values[0] == planted.curves["s3_random"].values[0]

    def test_failure_is_isolated(self):
        models = [
            {"label": "ok", "type": "bn", "model": "simple_3s"},
            {"label": "broken", "type": "bn", "model": "expert_old", "skill_map": {"S1": ["Q1"]}},
        ]
        result = run_experiment(planted_config(models, students=40, k=2))
        assert "ok" in result.curves
        assert "broken" in result.errors and "CoverageError" in result.errors["broken"]

    def test_byte_identical_reruns(self):
        models = [{"label": "irt", "type": "irt"}, {"label": "nn", "type": "nn", "epochs": 30}]
        first = emit_results(run_experiment(planted_config(models, students=60)).curves)
        second = emit_results(run_experiment(planted_config(models, students=60)).curves)
        assert first == second

    def test_parallel_matches_serial(self):
        models = [{"label": "s3", "type": "bn", "model": "simple_3s"}]
        serial = emit_results(run_experiment(planted_config(models, students=40, k=4)).curves)
        parallel = emit_results(run_experiment(planted_config(models, students=40, k=4), jobs=2).curves)
        assert serial == parallel


def curve(label, values, n=40):
    return SimulationCurve(label, tuple(values), n)


class TestEmission:
    def test_row_count(self):
        text = emit_results({"m": curve("m", [0.5, 0.75, 1.0])})
        assert len(text.strip().splitlines()) == 4

    def test_direct_serialization(self):
        text = emit_results({"m": curve("m", [0.5, 0.75], n=12)})
        assert text.splitlines() == ["model,step,sr,n_students", "m,0,0.5,12", "m,1,0.75,12"]

    def test_row_order(self):
        text = emit_results({"b": curve("b", [0.1]), "a": curve("a", [0.2, 0.3])})
        assert [line.split(",")[:2] for line in text.splitlines()[1:]] == [["a", "0"], ["a", "1"], ["b", "0"]]

    def test_json_and_csv_agree(self):
        curves = {"x": curve("x", [1 / 3, 2 / 7, 0.1 + 0.2]), "y": curve("y", [0.0, 1.0, 0.5])}
        from_csv = read_results(io.StringIO(emit_results(curves, "csv")), "csv")
        from_json = read_results(io.StringIO(emit_results(curves, "json")), "json")
        for label in curves:
            assert from_csv[label].values == from_json[label].values == curves[label].values
        assert json.loads(emit_results(curves, "json"))[0] == {"model": "x", "step": 0, "sr": 1 / 3, "n_students": 40}

    def test_empty(self):
        with pytest.raises(ShapeError):
            emit_results({})

    def test_unwritable_destination(self, tmp_path):
        with pytest.raises(OSError):
            emit_results({"m": curve("m", [0.5])}, destination=tmp_path / "missing" / "out.csv")


class TestBaselines:
    def test_seventy_percent_questions(self):
        b = -math.log(0.7 / 0.3)
        spec = SyntheticSpec(students=280, questions=20, a=[1.0] * 20, b=[b] * 20, theta_sd=0.0, seed=8)
        data = generate_synthetic(spec)
        assert majority_baseline(data) == pytest.approx(0.7, abs=0.03)

    def test_identical_models_identical_rows(self):
        data = generate_synthetic(SyntheticSpec(students=30, questions=4, seed=1))
        report = compare_baselines(data, {"a": curve("a", [0.5, 0.6, 0.7, 0.8, 0.9]), "b": curve("b", [0.5, 0.6, 0.7, 0.8, 0.9])})
        assert report.steps == [0, 1, 2, 4]
        assert report.rows["a"] == report.rows["b"]
        assert "majority_baseline" in report.to_text()
        assert report.to_csv().splitlines()[0] == "model,sr_0,sr_1,sr_2,sr_4"

    def test_mismatched_budgets(self):
        data = generate_synthetic(SyntheticSpec(students=30, questions=4, seed=1))
        with pytest.raises(ShapeError):
            compare_baselines(data, {"a": curve("a", [0.5, 0.6]), "b": curve("b", [0.5])})

    def test_empty_curves(self):
        data = generate_synthetic(SyntheticSpec(students=30, questions=4, seed=1))
        with pytest.raises(ShapeError):
            compare_baselines(data, {})

    def test_majority_tie_predicts_correct(self):
        from conftest import make_dataset

        data = make_dataset([[True, False], [False, False]])
        assert majority_baseline(data) == pytest.approx((0.5 + 1.0) / 2)


class TestStatistics:
    def test_curve_area(self):
        assert curve_area([0.0, 1.0, 1.0]) == 1.5
        assert curve_area([0.4]) == 0.4

    def test_sign_test(self):
        assert sign_test_pvalue(5, 5) == 1 / 32
        assert sign_test_pvalue(0, 5) == 1.0
        assert sign_test_pvalue(4, 5) == pytest.approx(6 / 32)
