import io
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from catsim.dataio import SyntheticSpec, generate_synthetic
from catsim.errors import CalibrationError, DomainError
from catsim.irt import (
    IrtItem,
    IrtModel,
    calibrate_2pl,
    cumulative_standard_error,
    estimate_theta,
    irf,
    item_information,
    predict_answers_irt,
    quadrature_grid,
    read_item_table,
    select_item_irt,
    standard_error,
    write_item_table,
)

from conftest import make_dataset
from oracles import information_oracle


class TestItemFunctions:
    def test_irf_at_difficulty_is_half(self):
        for a, b in [(0.3, -2.0), (1.0, 0.0), (4.0, 1.7)]:
            assert irf(IrtItem(a, b), b) == 0.5

    def test_irf_value(self):
        assert irf(IrtItem(1.0, 0.0), 1.0) == pytest.approx(1 / (1 + math.exp(-1)), rel=1e-14)

    def test_irf_saturates_without_warnings(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert irf(IrtItem(10.0, 0.0), -200.0) == 0.0
            assert irf(IrtItem(10.0, 0.0), 200.0) == 1.0

    @given(st.floats(0.2, 3.0), st.floats(-3.0, 3.0), st.floats(-4.0, 4.0))
    def test_information_matches_finite_difference(self, a, b, theta):
        assert float(item_information(IrtItem(a, b), theta)) == pytest.approx(information_oracle(a, b, theta), rel=1e-6)

    def test_lower_tail_keeps_relative_precision(self):
        # p = e^-20 / (1 + e^-20); a tanh or 1 - q formulation would lose most digits here.
        assert float(irf(IrtItem(2.0, 5.0), -5.0)) == pytest.approx(math.exp(-20) / (1 + math.exp(-20)), rel=1e-14)

    def test_information_peak(self):
        assert item_information(IrtItem(2.0, 0.5), 0.5) == pytest.approx(1.0)

    def test_standard_error(self):
        assert standard_error(1.0) == 1.0
        assert standard_error(4.0) == 0.5
        with pytest.raises(DomainError):
            standard_error(0.0)

    def test_cumulative_standard_error(self):
        items = [IrtItem(2.0, 0.0)] * 4
        assert cumulative_standard_error(items, 0.0) == pytest.approx(0.5)

    @pytest.mark.parametrize("a", [0.0, -1.0, float("nan"), float("inf")])
    def test_invalid_discrimination(self, a):
        with pytest.raises(DomainError):
            IrtItem(a, 0.0)


@pytest.fixture(scope="module")
def recovered():
    spec = SyntheticSpec(students=2000, questions=20, seed=21)
    return spec, calibrate_2pl(generate_synthetic(spec))


class TestCalibration:
    def test_recovers_generating_parameters(self, recovered):
        from catsim.dataio import derive_rng

        spec, model = recovered
        rng = derive_rng(spec.seed, "synthetic", "irt-2pl")
        a = rng.uniform(*spec.a_range, size=20)
        b = rng.uniform(*spec.b_range, size=20)
        assert np.mean(np.abs(model.a - a)) < 0.3
        assert np.mean(np.abs(model.b - b)) < 0.2

    def test_loglik_never_decreases(self, recovered):
        ll = np.array(recovered[1].loglik)
        assert np.all(np.diff(ll) >= -1e-9)
        assert recovered[1].converged

    def test_identical_columns_get_identical_items(self):
        rng = np.random.default_rng(3)
        answers = rng.random((400, 4)) < np.array([0.3, 0.5, 0.7, 0.5])
        answers[:, 3] = answers[:, 1]
        model = calibrate_2pl(make_dataset(answers))
        assert model.a[3] == pytest.approx(model.a[1], abs=1e-6)
        assert model.b[3] == pytest.approx(model.b[1], abs=1e-6)

    def test_degenerate_column(self):
        answers = np.random.default_rng(0).random((50, 3)) < 0.5
        answers[:, 2] = True
        with pytest.raises(CalibrationError, match="Q3"):
            calibrate_2pl(make_dataset(answers))

    def test_non_convergence_warns(self):
        data = generate_synthetic(SyntheticSpec(students=200, questions=5, seed=1))
        with pytest.warns(RuntimeWarning):
            model = calibrate_2pl(data, max_iter=2)
        assert not model.converged


def _model(a, b):
    return IrtModel(tuple(IrtItem(x, y) for x, y in zip(a, b)))


def eap_oracle(items, evidence, nodes, weights):
    num = den = 0.0
    for t, w in zip(nodes, weights):
        like = w
        for q, ans in evidence.items():
            p = 1 / (1 + math.exp(-items[q].a * (t - items[q].b)))
            like *= p if ans else 1 - p
        num += t * like
        den += like
    return num / den


class TestAbility:
    items = ((1.2, -1.0), (0.8, 0.0), (2.0, 0.5), (1.5, 1.5))

    def model(self):
        return _model(*zip(*self.items))

    def test_prior_eap_is_zero(self):
        est = estimate_theta(self.model(), {})
        assert est.method == "eap"
        assert est.theta == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("evidence", [{0: True}, {1: False, 3: False}, {0: True, 1: True, 2: True}])
    def test_eap_matches_pointwise_oracle(self, evidence):
        model = self.model()
        est = estimate_theta(model, evidence)
        nodes, weights = quadrature_grid()
        assert est.theta == pytest.approx(eap_oracle(model.items, evidence, nodes, weights), abs=1e-12)

    def test_eap_close_to_dense_integral(self):
        model = self.model()
        dense = np.linspace(-8, 8, 4001)
        w = np.exp(-0.5 * dense**2)
        oracle = eap_oracle(model.items, {2: True}, dense, w / w.sum())
        assert estimate_theta(model, {2: True}).theta == pytest.approx(oracle, abs=1e-3)

    def test_symmetric_mle_is_zero(self):
        model = _model([1.0, 1.0], [-1.0, 1.0])
        est = estimate_theta(model, {0: True, 1: False})
        assert est.method == "mle"
        assert est.theta == pytest.approx(0.0, abs=1e-10)
        pq = (1 / (1 + math.e)) * (math.e / (1 + math.e))
        assert est.sd == pytest.approx(1 / math.sqrt(2 * pq))

    @given(st.lists(st.booleans(), min_size=4, max_size=4))
    def test_mle_zeroes_the_score(self, answers):
        if len(set(answers)) < 2:
            return
        model = self.model()
        est = estimate_theta(model, dict(enumerate(answers)))
        score = sum(it.a * (x - float(irf(it, est.theta))) for it, x in zip(model.items, answers))
        assert abs(score) < 1e-9


class TestSelectionAndPrediction:
    def test_selects_most_informative(self):
        model = _model([1.0, 1.0, 1.0], [-2.0, 0.2, 2.0])
        assert select_item_irt(model, 0.0, [0, 1, 2]) == 1
        assert select_item_irt(model, 0.0, [0, 2]) == 0

    def test_discrimination_beats_distance(self):
        model = _model([0.5, 2.5], [0.0, 0.4])
        assert select_item_irt(model, 0.0, [0, 1]) == 1

    def test_prediction_threshold(self):
        model = _model([1.0, 1.0, 1.0], [-1.0, 0.0, 1.0])
        assert predict_answers_irt(model, 0.0).tolist() == [True, True, False]

    def test_item_table_round_trip(self):
        model = _model([0.9, 1.0 / 3.0], [-0.25, math.pi])
        buf = io.StringIO()
        write_item_table(model, buf)
        buf.seek(0)
        back = read_item_table(buf)
        assert back.items == model.items
        assert back.question_ids == ("Q1", "Q2")


class TestSpecExamples:
    def test_uniform_item_recovery(self):
        spec = SyntheticSpec(students=2000, questions=10, a=[1.5] * 10, b=[0.5] * 10, seed=5)
        model = calibrate_2pl(generate_synthetic(spec))
        assert np.all(np.abs(model.a - 1.5) <= 0.3)
        assert np.all(np.abs(model.b - 0.5) <= 0.2)

    def test_standard_error_quarter(self):
        assert standard_error(0.25) == 2.0

    def test_standard_error_smallest_at_difficulty(self):
        item = IrtItem(1.3, 0.7)
        grid = np.linspace(-4, 4, 801)
        ses = [standard_error(float(item_information(item, t))) for t in grid]
        assert grid[int(np.argmin(ses))] == pytest.approx(0.7)

    def test_irf_monotone(self):
        item = IrtItem(0.9, 0.2)
        values = irf(item, np.linspace(-5, 5, 101))
        assert np.all(np.diff(values) > 0)
        assert irf(IrtItem(0.9, -1.0), 0.0) > irf(IrtItem(0.9, 1.0), 0.0)

    def test_identical_items_mle_zero(self):
        est = estimate_theta(_model([1.0, 1.0], [0.0, 0.0]), {0: True, 1: False})
        assert est.method == "mle" and est.theta == pytest.approx(0.0, abs=1e-12)

    def test_single_correct_eap_positive(self):
        model = _model([1.0], [0.0])
        dense = np.linspace(-8, 8, 8001)
        w = np.exp(-0.5 * dense**2)
        oracle = eap_oracle(model.items, {0: True}, dense, w / w.sum())
        est = estimate_theta(model, {0: True})
        assert est.method == "eap" and est.theta > 0
        assert est.theta == pytest.approx(oracle, abs=1e-3)

    @given(st.permutations(range(4)), st.lists(st.booleans(), min_size=4, max_size=4))
    def test_theta_invariant_under_relabeling(self, perm, answers):
        a, b = [1.2, 0.8, 2.0, 1.5], [-1.0, 0.0, 0.5, 1.5]
        base = estimate_theta(_model(a, b), dict(enumerate(answers)))
        inv = {new: old for new, old in enumerate(perm)}
        relabeled = _model([a[inv[i]] for i in range(4)], [b[inv[i]] for i in range(4)])
        est = estimate_theta(relabeled, {i: answers[inv[i]] for i in range(4)})
        assert est.method == base.method
        assert est.theta == pytest.approx(base.theta, abs=1e-9)

    def test_select_higher_discrimination(self):
        assert select_item_irt(_model([2.0, 1.0], [0.0, 0.0]), 0.0, [0, 1]) == 0

    def test_select_nearer_difficulty(self):
        assert select_item_irt(_model([1.0, 1.0], [3.0, 0.0]), 0.0, [0, 1]) == 1

    def test_select_single(self):
        assert select_item_irt(_model([1.0, 1.0], [3.0, 0.0]), 0.0, [0]) == 0

    def test_select_empty(self):
        from catsim.errors import SelectionError

        with pytest.raises(SelectionError):
            select_item_irt(_model([1.0], [0.0]), 0.0, [])

    def test_predict_examples(self):
        assert predict_answers_irt(_model([1.0, 1.0], [-1.0, 1.0]), 0.0).tolist() == [True, False]
        assert predict_answers_irt(_model([1.0], [0.3]), 0.3).tolist() == [True]
        assert predict_answers_irt(_model([1.0] * 3, [0.0, -1.0, -3.0]), 5.0).all()
