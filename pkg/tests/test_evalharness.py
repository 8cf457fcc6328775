import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raekit import dataio, evalharness, nncore, rae
from raekit.dataio import InferencePartition, WindowSet

from oracles import brute_force_f1

PART = InferencePartition({1, 2, 3}, {4, 5}, {0})


class TestF1:
    def test_perfect(self):
        labels = np.array([0, 1, 2, 3, 4, 5, 0])
        assert evalharness.f1_per_list(labels, labels, PART) == {"white": 1.0, "black": 1.0, "gray": 1.0}

    def test_two_thirds(self):
        # class 1: TP=2, FP=1, FN=1
        preds = np.array([1, 1, 1, 0])
        truths = np.array([1, 1, 0, 1])
        assert evalharness.per_class_f1(preds, truths, 1) == pytest.approx(2 / 3)

    def test_absent_class_excluded(self):
        # class 3 never occurs; white stays the mean of classes 1 and 2 only
        preds = np.array([1, 2, 2, 0])
        truths = np.array([1, 2, 1, 0])
        scores = evalharness.f1_per_list(preds, truths, PART)
        assert evalharness.per_class_f1(preds, truths, 3) is None
        assert scores["white"] == pytest.approx((2 / 3 + 2 / 3) / 2)
        assert np.isnan(scores["black"])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            evalharness.f1_per_list([0, 1], [0], PART)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=20))
    def test_matches_brute_force(self, pairs):
        preds = [p for p, _ in pairs]
        truths = [t for _, t in pairs]
        scores = evalharness.f1_per_list(preds, truths, PART)
        for name in ("white", "black", "gray"):
            expected = brute_force_f1(preds, truths, sorted(getattr(PART, name)))
            if np.isnan(expected):
                assert np.isnan(scores[name])
            else:
                assert scores[name] == pytest.approx(expected, abs=1e-12)
                assert 0.0 <= scores[name] <= 1.0


class TestConfusion:
    def test_perfect_is_diagonal(self):
        labels = np.array([0, 0, 1, 2, 4, 5, 5])
        mat = evalharness.category_confusion(labels, labels, PART)
        assert np.array_equal(mat, np.diag([2, 3, 2]))

    def test_black_to_gray(self):
        truths = np.array([4, 5, 4, 1])
        preds = np.array([0, 0, 0, 1])
        mat = evalharness.category_confusion(preds, truths, PART)
        assert mat[1].tolist() == [0, 0, 3]
        assert mat[0].tolist() == [1, 0, 0]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=30))
    def test_rows_sum_to_support(self, pairs):
        preds = [p for p, _ in pairs]
        truths = [t for _, t in pairs]
        mat = evalharness.category_confusion(preds, truths, PART)
        support = [sum(PART.category(t) == c for t in truths) for c in "WBG"]
        assert mat.sum(axis=1).tolist() == support

    def test_csv(self):
        text = evalharness.confusion_csv(np.arange(9).reshape(3, 3))
        assert text.splitlines() == ["true\\predicted,W,B,G", "W,0,1,2", "B,3,4,5", "G,6,7,8"]


def small_train(seed=0, n=60, k=2, d=8):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 3
    values = rng.normal(scale=0.3, size=(n, k, d)) + labels[:, None, None]
    return WindowSet(values, labels)


class TestClassifier:
    def test_predictions_are_known_classes(self):
        clf = evalharness.train_classifier(small_train(), epochs=5, batch_size=16)
        pred = evalharness.predict(clf, small_train(1).values)
        assert set(pred.tolist()) <= {0, 1, 2}

    def test_single_vs_repeated(self):
        clf = evalharness.train_classifier(small_train(), epochs=3, batch_size=16)
        w = small_train(2).values[0]
        one = clf.predict(w[None])
        two = clf.predict(np.stack([w, w]))
        assert two.tolist() == [one[0], one[0]]

    def test_logit_shift_invariance(self):
        clf = evalharness.train_classifier(small_train(), epochs=3, batch_size=16)
        x = small_train(3).values
        before = clf.predict(x)
        # shifting the output bias moves every logit by the same constant
        clf.network.layers[-1].bias += 7.5
        assert np.array_equal(clf.predict(x), before)

    def test_same_seed_same_model(self):
        a = evalharness.train_classifier(small_train(), epochs=2, batch_size=16, seed=3)
        b = evalharness.train_classifier(small_train(), epochs=2, batch_size=16, seed=3)
        for p, q in zip(a.network.parameters(), b.network.parameters()):
            assert np.array_equal(p, q)

    def test_empty_training_set(self):
        with pytest.raises(ValueError):
            evalharness.train_classifier(WindowSet.empty(2, 8))

    def test_single_class(self):
        ws = small_train()
        with pytest.raises(ValueError):
            evalharness.train_classifier(ws.subset(np.flatnonzero(ws.labels == 0)))

    def test_shape_mismatch(self):
        clf = evalharness.train_classifier(small_train(), epochs=1, batch_size=16)
        with pytest.raises(nncore.ShapeError):
            clf.predict(np.zeros((2, 3, 8)))

    def test_save_load(self, tmp_path):
        clf = evalharness.train_classifier(small_train(), epochs=2, batch_size=16)
        evalharness.save_classifier(clf, tmp_path / "c.model")
        back = evalharness.load_classifier(tmp_path / "c.model")
        x = small_train(5).values
        assert np.array_equal(back.predict_proba(x), clf.predict_proba(x))
        assert back.classes.tolist() == [0, 1, 2]

    def test_rae_file_is_not_a_classifier(self, tmp_path):
        model = rae.identity_model(2, 8, dataio.NormStats(np.zeros(2), np.ones(2)), PART)
        rae.save_model(model, tmp_path / "r.model")
        with pytest.raises(rae.ModelFormatError):
            evalharness.load_classifier(tmp_path / "r.model")


class TestReport:
    def test_identity_stub(self, benchmark):
        stub = rae.identity_model(benchmark.test.k, benchmark.test.d, benchmark.stats, benchmark.part)
        report = evalharness.evaluate_pipeline(benchmark.clf, stub, benchmark.test)
        assert report.original_f1 == report.transformed_f1
        assert np.array_equal(report.original_confusion, report.transformed_confusion)

    def test_csv_layout(self, benchmark):
        report = evalharness.evaluate_pipeline(benchmark.clf, benchmark.model, benchmark.test)
        lines = report.to_csv().splitlines()
        assert lines[0] == "condition,list,f1"
        assert [ln.split(",")[:2] for ln in lines[1:]] == [
            [c, n] for c in ("original", "transformed") for n in ("white", "black", "gray")]
        assert "OF1" in report.to_text()

    def test_benchmark_accuracy(self, benchmark):
        pred = benchmark.clf.predict(benchmark.test.values)
        assert np.mean(pred == benchmark.test.labels) >= 0.9

    def test_privacy_and_utility(self, benchmark):
        report = evalharness.evaluate_pipeline(benchmark.clf, benchmark.model, benchmark.test)
        assert report.original_f1["black"] >= 0.9
        assert report.transformed_f1["black"] <= 0.05
        assert report.original_f1["white"] - report.transformed_f1["white"] <= 0.05
        mat = report.transformed_confusion
        assert mat[1, 2] >= 0.9 * mat[1].sum()
        assert np.array_equal(mat.sum(axis=1), report.original_confusion.sum(axis=1))
