import json

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

from fvagg import (
    DataIOError,
    DegenerateLabelsError,
    EvalReport,
    FisherVector,
    InvalidInputError,
    LabelError,
    LinearModel,
    ShapeError,
    SvmConfig,
    balanced_accuracy,
    load_model,
    predict,
    save_model,
    train_svm,
    train_svm_with_history,
)


def unit_fvs(points: np.ndarray) -> list[FisherVector]:
    points = points / np.linalg.norm(points, axis=1, keepdims=True)
    return [FisherVector(p, normalized=True) for p in points]


def blob_problem(seed: int = 0, n: int = 100):
    """Two unit-normalized Gaussian blobs at +-(5,5); separable by
    construction (the arcs around 45 and 225 degrees are disjoint)."""
    rng = np.random.default_rng(seed)
    pos = rng.normal(loc=(5.0, 5.0), scale=1.0, size=(n, 2))
    neg = rng.normal(loc=(-5.0, -5.0), scale=1.0, size=(n, 2))
    features = unit_fvs(np.vstack([pos, neg]))
    labels = ["pos"] * n + ["neg"] * n
    return features, labels


class TestTrain:
    def test_separable_blobs_reach_full_training_accuracy(self):
        features, labels = blob_problem()
        model = train_svm(features, labels, SvmConfig(seed=0))
        preds = [predict(model, fv)[0] for fv in features]
        assert preds == labels

    def test_duplication_keeps_decision_signs(self):
        features, labels = blob_problem(seed=1)
        a = train_svm(features, labels, SvmConfig(seed=2))
        b = train_svm(features + features, labels + labels, SvmConfig(seed=2))
        preds_a = [predict(a, fv)[0] for fv in features]
        preds_b = [predict(b, fv)[0] for fv in features]
        assert preds_a == preds_b

    def test_deterministic_given_seed(self):
        features, labels = blob_problem(seed=3)
        a = train_svm(features, labels, SvmConfig(seed=7))
        b = train_svm(features, labels, SvmConfig(seed=7))
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.biases, b.biases)

    def test_single_class_rejected(self):
        features, _ = blob_problem()
        with pytest.raises(DegenerateLabelsError):
            train_svm(features, ["same"] * len(features))

    def test_dim_mismatch_rejected(self):
        a = FisherVector(np.array([1.0, 0.0]), normalized=True)
        b = FisherVector(np.array([1.0, 0.0, 0.0]), normalized=True)
        with pytest.raises(ShapeError):
            train_svm([a, b], ["x", "y"])

    def test_unnormalized_rejected(self):
        a = FisherVector(np.array([1.0, 0.0]))
        b = FisherVector(np.array([0.0, 1.0]))
        with pytest.raises(InvalidInputError):
            train_svm([a, b], ["x", "y"])

    def test_class_without_examples_rejected(self):
        features, labels = blob_problem()
        with pytest.raises(DegenerateLabelsError):
            train_svm(features, labels, classes=("pos", "neg", "ghost"))

    def test_unknown_label_rejected(self):
        features, labels = blob_problem()
        with pytest.raises(LabelError):
            train_svm(features, labels, classes=("pos", "other"))

    def test_objective_non_increasing_with_averaged_iterate(self):
        features, labels = blob_problem(seed=4)
        _, history = train_svm_with_history(features, labels, SvmConfig(seed=0))
        assert np.all(np.diff(history) <= 1e-6)

    def test_imbalanced_classes_still_learned(self):
        # 10:1 imbalance; the class weighting keeps the minority recalled
        rng = np.random.default_rng(5)
        pos = rng.normal(loc=(4.0, 4.0), scale=0.8, size=(200, 2))
        neg = rng.normal(loc=(-4.0, -4.0), scale=0.8, size=(20, 2))
        features = unit_fvs(np.vstack([pos, neg]))
        labels = ["maj"] * 200 + ["min"] * 20
        model = train_svm(features, labels, SvmConfig(seed=1))
        preds = [predict(model, fv)[0] for fv in features]
        report = balanced_accuracy(preds, labels, model.classes)
        assert report.bac == 1.0


class TestPredict:
    def test_zero_model_tie_breaks_to_first_class(self):
        model = LinearModel(("alpha", "beta"), np.zeros((2, 3)), np.zeros(2))
        name, scores = predict(model, FisherVector(np.ones(3) / np.sqrt(3), normalized=True))
        assert name == "alpha"
        assert np.array_equal(scores, np.zeros(2))

    def test_hand_computed_scores(self):
        weights = np.array([[1.0, 0.0, 2.0], [0.5, -1.0, 0.0], [0.0, 0.0, 1.0]])
        biases = np.array([0.1, -0.2, 0.0])
        model = LinearModel(("a", "b", "c"), weights, biases)
        x = np.array([2.0, 1.0, -1.0])
        name, scores = predict(model, FisherVector(x))
        expected = [
            1.0 * 2 + 0.0 * 1 + 2.0 * -1 + 0.1,
            0.5 * 2 - 1.0 * 1 + 0.0 * -1 - 0.2,
            0.0 * 2 + 0.0 * 1 + 1.0 * -1 + 0.0,
        ]
        np.testing.assert_allclose(scores, expected, rtol=1e-15)
        assert name == "a"  # 0.1 > -0.2 > -1.0

    @given(st.floats(min_value=1e-6, max_value=1e6), st.integers(0, 1000))
    @settings(max_examples=50, deadline=None)
    def test_argmax_invariant_under_positive_scaling(self, scale, seed):
        rng = np.random.default_rng(seed)
        model = LinearModel(
            ("a", "b", "c"), rng.normal(size=(3, 4)), rng.normal(size=3)
        )
        scaled = LinearModel(("a", "b", "c"), scale * model.weights, scale * model.biases)
        fv = FisherVector(rng.normal(size=4))
        assert predict(model, fv)[0] == predict(scaled, fv)[0]

    def test_dim_mismatch(self):
        model = LinearModel(("a", "b"), np.zeros((2, 3)), np.zeros(2))
        with pytest.raises(ShapeError):
            predict(model, FisherVector(np.zeros(4)))


class TestBalancedAccuracy:
    def test_perfect_predictions(self):
        report = balanced_accuracy(["a", "b", "a"], ["a", "b", "a"], ("a", "b"))
        assert report.bac == 1.0

    def test_hand_counted_example(self):
        report = balanced_accuracy(
            ["A", "A", "B", "B"], ["A", "A", "A", "B"], ("A", "B")
        )
        np.testing.assert_allclose(report.per_class_recall, [2.0 / 3.0, 1.0])
        assert report.bac == pytest.approx(5.0 / 6.0, abs=1e-15)
        assert report.confusion.tolist() == [[2, 1], [0, 1]]

    def test_majority_vote_on_seven_classes(self):
        classes = tuple(f"c{i}" for i in range(7))
        truth = [c for c in classes for _ in range(3)] + ["c0"] * 10
        preds = ["c0"] * len(truth)
        report = balanced_accuracy(preds, truth, classes)
        assert report.bac == pytest.approx(1.0 / 7.0, abs=1e-15)

    @given(st.integers(2, 6), st.integers(0, 500))
    @settings(max_examples=40, deadline=None)
    def test_replication_invariance(self, fold, seed):
        rng = np.random.default_rng(seed)
        classes = ("x", "y", "z")
        truth = [classes[i] for i in rng.integers(0, 3, size=30)]
        preds = [classes[i] for i in rng.integers(0, 3, size=30)]
        base = balanced_accuracy(preds, truth, classes)
        # replicate every sample of one class fold times
        target = "y"
        extra_p = [p for p, t in zip(preds, truth) if t == target] * (fold - 1)
        extra_t = [target] * len(extra_p)
        replicated = balanced_accuracy(preds + extra_p, truth + extra_t, classes)
        assert replicated.bac == pytest.approx(base.bac, abs=1e-12)

    def test_row_sums_equal_support(self):
        rng = np.random.default_rng(8)
        classes = ("a", "b", "c")
        truth = [classes[i] for i in rng.integers(0, 3, size=50)]
        preds = [classes[i] for i in rng.integers(0, 3, size=50)]
        report = balanced_accuracy(preds, truth, classes)
        for i, c in enumerate(classes):
            assert report.confusion[i].sum() == truth.count(c)

    def test_zero_support_excluded_with_warning(self):
        with pytest.warns(UserWarning, match="zero support"):
            report = balanced_accuracy(["a", "b"], ["a", "b"], ("a", "b", "ghost"))
        assert np.isnan(report.per_class_recall[2])
        assert report.bac == 1.0

    def test_unknown_label_rejected(self):
        with pytest.raises(LabelError):
            balanced_accuracy(["a"], ["mystery"], ("a", "b"))
        with pytest.raises(LabelError):
            balanced_accuracy(["mystery"], ["a"], ("a", "b"))

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            balanced_accuracy(["a"], ["a", "b"], ("a", "b"))
        with pytest.raises(InvalidInputError):
            balanced_accuracy([], [], ("a", "b"))


class TestPersistence:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        model = LinearModel(
            ("melanoma", "nevus", "keratosis"),
            rng.normal(size=(3, 8)).astype(np.float32).astype(np.float64),
            rng.normal(size=3).astype(np.float32).astype(np.float64),
        )
        path = tmp_path / "model.lsv"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.classes == model.classes
        np.testing.assert_array_equal(loaded.weights, model.weights)
        np.testing.assert_array_equal(loaded.biases, model.biases)

    def test_rejects_wrong_magic(self, tmp_path):
        (tmp_path / "bad.lsv").write_bytes(b"WHAT" + b"\x00" * 32)
        with pytest.raises(DataIOError):
            load_model(tmp_path / "bad.lsv")

    def test_rejects_truncated(self, tmp_path):
        model = LinearModel(("a", "b"), np.ones((2, 3)), np.zeros(2))
        save_model(model, tmp_path / "m.lsv")
        blob = (tmp_path / "m.lsv").read_bytes()
        (tmp_path / "m.lsv").write_bytes(blob[:-2])
        with pytest.raises(DataIOError):
            load_model(tmp_path / "m.lsv")

    def test_eval_report_json_round_trip(self):
        with pytest.warns(UserWarning):
            report = balanced_accuracy(["a", "a"], ["a", "b"], ("a", "b", "ghost"))
        blob = json.dumps(report.to_dict())
        back = EvalReport.from_dict(json.loads(blob))
        assert back.classes == report.classes
        assert np.array_equal(back.confusion, report.confusion)
        np.testing.assert_array_equal(
            np.isnan(back.per_class_recall), np.isnan(report.per_class_recall)
        )
        assert back.bac == report.bac
