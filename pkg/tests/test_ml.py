import json

import numpy as np
import pytest

from sustain import cohort, ml
from sustain.ml import CvConfig, KnnConfig

QUICK = CvConfig(repetitions=5)


def test_confusion_metrics_undefined_rates():
    m = ml.confusion_metrics(tp=0, tn=5, fp=1, fn=0)
    assert m.sensitivity is None
    assert m.specificity == pytest.approx(500 / 6)
    assert m.r_avg is None
    assert m.accuracy == pytest.approx(500 / 6)

    with pytest.raises(ml.ClassifierError, match="empty"):
        ml.confusion_metrics(0, 0, 0, 0)
    with pytest.raises(ml.ClassifierError, match="negative"):
        ml.confusion_metrics(1, 1, -1, 1)


def test_mahalanobis_matches_quadratic_form():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 4))
    inverse_covariance = a @ a.T + 4 * np.eye(4)
    x, y = rng.normal(size=4), rng.normal(size=4)
    expected = np.sqrt((x - y) @ inverse_covariance @ (x - y))
    assert ml.mahalanobis(x, y, inverse_covariance) == pytest.approx(expected)
    assert ml.mahalanobis(x, x, inverse_covariance) == 0
    assert ml.mahalanobis(2.0, 5.0, 4.0) == pytest.approx(6)


def test_mahalanobis_errors():
    with pytest.raises(ml.ClassifierError, match="not symmetric"):
        ml.mahalanobis(np.zeros(2), np.ones(2), np.array([[1, 0.5], [0, 1]]))
    with pytest.raises(ml.ClassifierError, match="not positive definite"):
        ml.mahalanobis(np.zeros(2), np.ones(2), np.array([[1, 2], [2, 1]]))
    with pytest.raises(ml.ClassifierError, match="don't match"):
        ml.mahalanobis(np.zeros(3), np.ones(3), np.eye(2))


def test_lda_separates_two_clouds():
    x = np.array([[0, 0], [1, 0], [0, 1], [5, 5], [6, 5], [5, 6]], dtype=float)
    y = np.array([-1, -1, -1, 1, 1, 1])
    m = ml.lda_train(x, y)
    assert ml.lda_predict(m, x).tolist() == y.tolist()
    # the threshold is halfway between the projected means
    assert ml.lda_scores(m, [[17 / 6, 17 / 6]])[0] == pytest.approx(0, abs=1e-9)
    assert ml.lda_predict(m, np.array([3.0, 3.0])).tolist() == [1]


def two_clouds(seed):
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.normal(0, 1, (20, 3)), rng.normal(1.5, 1, (20, 3))])
    y = np.array([-1] * 20 + [1] * 20)
    return x, y


def test_lda_swapping_labels_flips_the_discriminant():
    x, y = two_clouds(0)
    m = ml.lda_train(x, y)
    swapped = ml.lda_train(x, -y)
    assert swapped.w == pytest.approx(-m.w)
    assert swapped.b == pytest.approx(-m.b)


@pytest.mark.parametrize("model", ["lda", "knn"])
def test_affine_map_of_features_changes_nothing(model):
    x, y = two_clouds(1)
    queries = np.random.default_rng(2).normal(0.75, 1.5, (50, 3))
    matrix = np.array([[2, 0.5, 0], [0, 1, -1], [0.3, 0, 3]])
    offset = np.array([10, -4, 0.5])

    original = ml.predict(ml.train(model, x, y), queries)
    mapped = ml.predict(ml.train(model, x @ matrix + offset, y), queries @ matrix + offset)
    assert mapped.tolist() == original.tolist()
    assert len(set(original.tolist())) == 2


def test_lda_with_one_feature():
    m = ml.lda_train(np.array([1.0, 2.0, 3.0, 10.0, 11.0, 12.0]), np.array([-1, -1, -1, 1, 1, 1]))
    assert ml.lda_predict(m, np.array([0.0, 6.4, 6.6, 20.0])).tolist() == [-1, -1, 1, 1]


def test_lda_survives_duplicated_feature():
    x = np.array([1.0, 2.0, 3.0, 10.0, 11.0, 12.0])
    y = np.array([-1, -1, -1, 1, 1, 1])
    m = ml.lda_train(np.column_stack([x, x]), y)
    queries = np.array([[0.0, 0.0], [6.4, 6.4], [6.6, 6.6], [20.0, 20.0]])
    assert ml.lda_predict(m, queries).tolist() == [-1, -1, 1, 1]


def test_lda_errors():
    # both class means are at the origin
    x = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=float)
    with pytest.raises(ml.ClassifierError, match="identical"):
        ml.lda_train(x, np.array([1, 1, -1, -1]))
    with pytest.raises(ml.ClassifierError, match="only one class"):
        ml.lda_train(x, np.array([1, 1, 1, 1]))
    with pytest.raises(ml.ClassifierError, match=r"\+1 or -1"):
        ml.lda_train(x, np.array([0, 1, 0, 1]))
    m = ml.lda_train(np.array([[0, 0], [1, 1], [5, 4], [6, 6]], dtype=float), [-1, -1, 1, 1])
    with pytest.raises(ml.ClassifierError, match="expected 2 features"):
        ml.lda_predict(m, np.zeros((3, 3)))


def test_knn_vote():
    x = np.array([[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]])
    y = np.array([-1, -1, -1, 1, 1, 1])
    m = ml.knn_train(x, y, k=3)
    assert ml.knn_predict(m, np.array([[0.5], [3.0], [9.0], [30.0]])).tolist() == [-1, -1, 1, 1]
    # a query on a training sample gets its label
    assert ml.knn_predict(m, np.array([[11.0]])).tolist() == [1]


def test_knn_ties_go_to_als():
    m = ml.knn_train(np.array([[-1.0], [1.0]]), np.array([-1, 1]), k=1)
    assert ml.knn_predict(m, np.array([[0.0]])).tolist() == [1]


def test_knn_needs_k_samples_per_class():
    x = np.arange(6.0)[:, None]
    with pytest.raises(ml.ClassifierError, match=r"class -1 has 2 training samples, need 3"):
        ml.knn_train(x, np.array([-1, -1, 1, 1, 1, 1]), k=3)


def test_majority():
    assert ml.majority_train(np.array([-1, -1, 1])).label == -1
    assert ml.majority_train(np.array([-1, 1])).label == 1
    m = ml.train("majority", np.zeros((3, 2)), np.array([1, 1, -1]))
    assert ml.predict(m, np.zeros((4, 2))).tolist() == [1, 1, 1, 1]


def test_unknown_model():
    with pytest.raises(ValueError, match="unknown model 'svm'"):
        ml.train("svm", np.zeros((2, 1)), np.array([1, -1]))


@pytest.mark.parametrize("stratified", [True, False])
def test_fold_assignment(stratified):
    y = np.array([1] * 15 + [-1] * 39)
    assignment = ml.fold_assignment(y, 7, np.random.default_rng(3), stratified)
    sizes = np.bincount(assignment, minlength=7)
    assert sizes.max() - sizes.min() <= 1
    assert sizes.sum() == 54
    if stratified:
        positives = np.bincount(assignment[y == 1], minlength=7)
        assert positives.max() - positives.min() <= 1


def test_fold_assignment_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ml.ClassifierError, match="can't split 5 samples into 7 folds"):
        ml.fold_assignment(np.array([1, 1, -1, -1, -1]), 7, rng)
    with pytest.raises(ml.ClassifierError, match=r"class \+1 has 2 samples"):
        ml.fold_assignment(np.array([1, 1] + [-1] * 10), 3, rng)


def test_every_sample_tested_once_per_repetition(null_cohort):
    report = ml.cross_validate(null_cohort, "lda", cfg=QUICK)
    assert len(report.confusions) == 5
    for tp, tn, fp, fn in report.confusions:
        assert tp + fn == 15
        assert tn + fp == 39


def test_lda_on_separable_cohort(separable_cohort):
    report = ml.cross_validate(separable_cohort, "lda")
    assert report.r_avg >= 99
    assert report.features == tuple(separable_cohort.feature_names)
    assert report.undefined_repetitions == 0


def test_knn_on_separable_cohort(separable_cohort):
    report = ml.cross_validate(separable_cohort, "knn", ["S1", "S3", "S11", "PVI"])
    assert report.r_avg >= 99
    assert report.features == ("S1", "S3", "S11", "PVI")


def test_null_cohort_is_guesswork(null_cohort):
    report = ml.cross_validate(null_cohort, "lda")
    assert 30 <= report.r_avg <= 70
    # the threshold sits between the class means, so it guesses about half of each class
    # instead of falling back to the majority class
    assert report.accuracy.mean < 66

    report = ml.cross_validate(null_cohort, "knn")
    assert 30 <= report.r_avg <= 70
    assert report.accuracy.mean < 68


def test_majority_baseline(null_cohort):
    report = ml.cross_validate(null_cohort, "majority", cfg=QUICK)
    assert report.accuracy.mean == pytest.approx(72.22, abs=0.01)
    assert report.accuracy.sd == 0
    assert report.sensitivity.mean == 0
    assert report.specificity.mean == 100
    assert report.r_avg == 50


def test_cross_validation_is_deterministic(null_cohort):
    first = ml.cross_validate(null_cohort, "knn", ["J1", "S1"], QUICK)
    second = ml.cross_validate(null_cohort, "knn", ["J1", "S1"], QUICK)
    other_seed = ml.cross_validate(
        null_cohort, "knn", ["J1", "S1"], CvConfig(repetitions=5, seed=1)
    )
    assert first == second
    assert first.confusions != other_seed.confusions


def test_single_repetition_has_no_sd(null_cohort):
    report = ml.cross_validate(null_cohort, "lda", cfg=CvConfig(repetitions=1))
    assert report.accuracy.sd is None
    assert str(report.accuracy) == f"{report.accuracy.mean:.1f}"


def test_report_json(null_cohort):
    report = ml.cross_validate(null_cohort, "lda", ["S1"], QUICK, KnnConfig())
    data = json.loads(json.dumps(report.to_json()))
    assert data["model"] == "lda"
    assert data["features"] == ["S1"]
    assert set(data["accuracy"]) == {"mean", "sd"}
    assert len(data["confusions"]) == 5
    assert set(data["confusions"][0]) == {"tp", "tn", "fp", "fn"}


def test_subset_search(separable_cohort):
    results = ml.subset_search(separable_cohort, "lda", QUICK, candidates=["S1", "J1", "PVI"])
    assert len(results) == 7
    assert {len(result.features) for result in results} == {1, 2, 3}
    keys = [(-r.report.r_avg, -r.report.accuracy.mean, len(r.features)) for r in results]
    assert keys == sorted(keys)

    parallel = ml.subset_search(
        separable_cohort, "lda", QUICK, candidates=["S1", "J1", "PVI"], jobs=3
    )
    assert [r.features for r in parallel] == [r.features for r in results]
    assert [r.report for r in parallel] == [r.report for r in results]


@pytest.mark.slow
def test_search_all_subsets_of_eight_features():
    spec = cohort.CohortSpec(separation=4, informative=("S1",))
    d = cohort.make_cohort(spec, seed=3)
    results = ml.subset_search(d, "lda", CvConfig(repetitions=3), jobs=4)

    assert len(results) == 255
    assert len({r.features for r in results}) == 255
    for result in results[:5]:
        assert "S1" in result.features
    assert results[0].report.r_avg > 90


def test_subset_search_limit(null_cohort, monkeypatch):
    monkeypatch.setattr(ml, "MAX_SEARCH_FEATURES", 2)
    with pytest.raises(ml.ClassifierError, match="7 subsets"):
        ml.subset_search(null_cohort, "lda", QUICK, candidates=["S1", "J1", "PVI"])


def test_format_table(null_cohort):
    results = ml.subset_search(null_cohort, "majority", QUICK, candidates=["S1", "J1"])
    table = ml.format_table(results, top=2).splitlines()
    assert len(table) == 3
    assert table[0].split() == ["Features", "R_avg", "Acc", "Sens", "Spec"]
    assert table[1].split() == ["S1", "50.0", "72.2±0.0", "0.0±0.0", "100.0±0.0"]
    assert len(ml.format_table(results).splitlines()) == 4


@pytest.mark.parametrize(
    "config_class, fields",
    [(CvConfig, {"folds": 1}), (CvConfig, {"repetitions": 0}), (KnnConfig, {"k": 0})],
)
def test_bad_config(config_class, fields):
    with pytest.raises(ValueError):
        config_class(**fields)
