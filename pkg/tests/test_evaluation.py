"""Tests for cross-validation and confusion matrices."""

from collections import Counter

import numpy as np
import pytest
from joblib import cpu_count

from greedy_face_features.errors import DimensionError, FeatureIndexError, SplitError
from greedy_face_features.evaluation import (
    ConfusionMatrix,
    EvalConfig,
    EvalMetrics,
    ablate,
    cross_validate,
    format_ablation_csv,
    format_counts_csv,
    format_fraction,
    format_posteriors_csv,
    grid_search,
    per_class_report,
    render_confusion,
    stratified_kfold,
    summary_line,
)
from greedy_face_features.features import FeatureIndex
from greedy_face_features.labels import ExpressionLabel
from greedy_face_features.svm import SvmConfig
from tests.datasets import planted_dataset, single_informative_dataset

CK_COUNTS = [45, 19, 59, 25, 69, 28, 82]


def test_kfold_single_class_sizes() -> None:
    """Test that ten examples in five folds give two test rows per fold."""
    folds = stratified_kfold([0] * 10, 5, seed=0)
    assert [len(test) for _, test in folds] == [2, 2, 2, 2, 2]


def test_kfold_smallest_class_spread() -> None:
    """Test that 19 contempt examples split into nine folds of 2 and one of 1."""
    codes = np.repeat(np.arange(7), CK_COUNTS)
    folds = stratified_kfold(codes, 10, seed=0)
    contempt = sorted(int(np.sum(codes[test] == 1)) for _, test in folds)
    assert contempt == [1] + [2] * 9
    for code, count in enumerate(CK_COUNTS):
        sizes = [int(np.sum(codes[test] == code)) for _, test in folds]
        assert sum(sizes) == count
        assert max(sizes) - min(sizes) <= 1


def test_kfold_tests_every_row_once() -> None:
    """Test that test parts partition the rows and train parts are complements."""
    codes = np.repeat(np.arange(7), CK_COUNTS)
    folds = stratified_kfold(codes, 10, seed=4)
    tested = Counter(int(k) for _, test in folds for k in test)
    assert sorted(tested) == list(range(327))
    assert set(tested.values()) == {1}
    for train, test in folds:
        assert sorted([*train.tolist(), *test.tolist()]) == list(range(327))


def test_kfold_is_deterministic() -> None:
    """Test that the same seed gives the same folds."""
    codes = np.repeat(np.arange(3), [12, 15, 10])
    first = stratified_kfold(codes, 5, seed=9)
    again = stratified_kfold(codes, 5, seed=9)
    for (a_train, a_test), (b_train, b_test) in zip(first, again, strict=True):
        assert np.array_equal(a_train, b_train)
        assert np.array_equal(a_test, b_test)


def test_kfold_names_small_class() -> None:
    """Test that a class smaller than the fold count is named in the error."""
    codes = [0] * 20 + [1] * 3
    with pytest.raises(SplitError, match="contempt"):
        stratified_kfold(codes, 5, seed=0)


def test_eval_config_validation() -> None:
    """Test that fewer than two folds are refused."""
    with pytest.raises(SplitError):
        EvalConfig(folds=1)


def test_confusion_matrix_from_predictions() -> None:
    """Test counting and metrics on a small hand-made case."""
    matrix = ConfusionMatrix.from_predictions([0, 0, 1, 1, 2], [0, 1, 1, 1, 0], classes=(0, 1, 2))
    assert matrix.counts.tolist() == [[1, 1, 0], [0, 2, 0], [1, 0, 0]]
    metrics = EvalMetrics.from_matrix(matrix)
    assert metrics.accuracy == pytest.approx(0.6)
    assert metrics.per_class == {0: 0.5, 1: 1.0, 2: 0.0}
    assert metrics.mean_class_accuracy == pytest.approx(0.5)
    assert np.allclose(matrix.row_normalized.sum(axis=1), 1.0)


def test_confusion_matrix_addition() -> None:
    """Test that fold matrices sum element-wise."""
    a = ConfusionMatrix.from_predictions([0, 1], [0, 0], classes=(0, 1))
    b = ConfusionMatrix.from_predictions([1], [1], classes=(0, 1))
    assert (a + b).counts.tolist() == [[1, 0], [1, 1]]
    with pytest.raises(DimensionError):
        a + ConfusionMatrix.from_predictions([0], [0], classes=(0, 2))


def test_empty_row_is_marked() -> None:
    """Test that a class without examples renders a zero row with a note."""
    matrix = ConfusionMatrix((0, 1), np.array([[3, 1], [0, 0]], dtype=np.int64))
    assert matrix.empty_rows == [1]
    text = render_confusion(matrix)
    assert text.splitlines()[2].endswith("(no examples)")
    assert "0.00" in text.splitlines()[2]
    metrics = EvalMetrics.from_matrix(matrix)
    assert metrics.per_class == {0: 0.75}


def test_format_fraction_rounds_half_up() -> None:
    """Test that halves round away from zero."""
    assert format_fraction(0.005) == "0.01"
    assert format_fraction(0.015) == "0.02"
    assert format_fraction(0.994) == "0.99"
    assert format_fraction(1.0) == "1.00"
    assert format_fraction(0.0) == "0.00"


def test_render_confusion_half_cell() -> None:
    """Test that a 1/200 cell shows as 0.01."""
    matrix = ConfusionMatrix((0, 6), np.array([[1, 199], [0, 200]], dtype=np.int64))
    lines = render_confusion(matrix).splitlines()
    assert lines[0].split() == ["Anger", "Surprise"]
    assert lines[1].split() == ["Anger", "0.01", "1.00"]
    assert lines[2].split() == ["Surprise", "0.00", "1.00"]


def test_render_identity_matrix() -> None:
    """Test that a perfect run shows 1.00 on the diagonal and 0.00 elsewhere."""
    counts = np.diag([45, 19, 59, 25, 69, 28, 82]).astype(np.int64)
    text = render_confusion(ConfusionMatrix(tuple(range(7)), counts))
    rows = [line.split()[1:] for line in text.splitlines()[1:]]
    for k, row in enumerate(rows):
        assert row[k] == "1.00"
        assert row.count("0.00") == 6


def test_render_confusion_rejects_mismatched_labels() -> None:
    """Test that labels must name the matrix classes in the same order."""
    matrix = ConfusionMatrix((0, 6), np.array([[1, 1], [0, 2]], dtype=np.int64))
    anger, surprise = ExpressionLabel.ANGER, ExpressionLabel.SURPRISE
    with pytest.raises(DimensionError):
        render_confusion(matrix, [anger])
    with pytest.raises(DimensionError):
        render_confusion(matrix, [anger, ExpressionLabel.FEAR])
    with pytest.raises(DimensionError):
        render_confusion(matrix, [surprise, anger])
    assert render_confusion(matrix, [anger, surprise]) == render_confusion(matrix)


def test_counts_csv_and_per_class_report() -> None:
    """Test the raw count CSV and per-class lines."""
    matrix = ConfusionMatrix((0, 1), np.array([[3, 1], [0, 0]], dtype=np.int64))
    assert format_counts_csv(matrix) == "true,anger,contempt\nanger,3,1\ncontempt,0,0\n"
    assert per_class_report(matrix) == ["anger: 0.7500 (3/4)", "contempt: n/a (0/0)"]


def test_cross_validate_separable_data() -> None:
    """Test that perfectly separable data gives accuracy 1.0 and a diagonal matrix."""
    dataset = single_informative_dataset(informative=5, per_class=20)
    result = cross_validate(dataset, [5], EvalConfig(folds=5, seed=0))
    assert result.metrics.accuracy == 1.0
    assert result.matrix.counts.tolist() == [[20, 0], [0, 20]]
    assert summary_line(result) == (
        "accuracy=1.000000 mean_class_accuracy=1.000000 folds=5 seed=0"
    )


def test_cross_validate_bookkeeping() -> None:
    """Test that every row is predicted once and the metrics match the matrix."""
    dataset = planted_dataset(
        landmark_count=8, class_count=3, per_class=10, seed=1, displacement=2.0, noise=2.0
    )
    result = cross_validate(dataset, [0, 1, 2, 30], EvalConfig(folds=5, seed=2))
    assert result.matrix.total == len(dataset)
    assert sorted(Counter(result.fold_of.tolist()).values()) == [6] * 5
    assert np.all(result.predicted >= 0)
    diagonal = np.trace(result.matrix.counts)
    assert result.metrics.accuracy == diagonal / len(dataset)
    assert result.metrics.accuracy == float(np.mean(result.predicted == dataset.codes))
    assert np.allclose(result.matrix.row_normalized.sum(axis=1), 1.0, rtol=0.0, atol=1e-9)


def test_cross_validate_is_deterministic() -> None:
    """Test that a fixed seed reproduces the predictions exactly."""
    dataset = planted_dataset(landmark_count=8, class_count=3, per_class=10, seed=5, noise=3.0)
    config = EvalConfig(folds=5, seed=5)
    first = cross_validate(dataset, [3, 17], config)
    again = cross_validate(dataset, [3, 17], config)
    assert first.matrix == again.matrix
    assert np.array_equal(first.predicted, again.predicted)


@pytest.mark.slow
def test_cross_validate_same_result_for_any_thread_count() -> None:
    """Test that parallel folds give the same matrix, predictions and posteriors."""
    dataset = planted_dataset(landmark_count=8, class_count=3, per_class=10, seed=6, noise=3.0)
    svm = SvmConfig(calibrate=True)
    single = cross_validate(dataset, [3, 17, 40], EvalConfig(folds=5, seed=6, svm=svm, threads=1))
    for threads in (2, cpu_count()):
        config = EvalConfig(folds=5, seed=6, svm=svm, threads=threads)
        result = cross_validate(dataset, [3, 17, 40], config)
        assert result.matrix == single.matrix
        assert np.array_equal(result.predicted, single.predicted)
        assert result.posteriors is not None and single.posteriors is not None
        assert np.array_equal(result.posteriors, single.posteriors)


def test_cross_validate_accepts_feature_indices() -> None:
    """Test that FeatureIndex subsets give the same result as flat indices."""
    dataset = single_informative_dataset(informative=5, per_class=10)
    config = EvalConfig(folds=5)
    by_flat = cross_validate(dataset, [5, 0], config)
    by_index = cross_validate(dataset, [FeatureIndex.from_flat(k, 4) for k in (5, 0)], config)
    assert by_flat.matrix == by_index.matrix


def test_cross_validate_rejects_empty_subset() -> None:
    """Test that an empty subset cannot be evaluated."""
    dataset = single_informative_dataset()
    with pytest.raises(FeatureIndexError):
        cross_validate(dataset, [], EvalConfig(folds=5))


def test_calibrated_posteriors() -> None:
    """Test that calibrated runs report a distribution for every row."""
    dataset = planted_dataset(landmark_count=8, class_count=3, per_class=10, seed=2, noise=2.0)
    config = EvalConfig(folds=5, seed=0, svm=SvmConfig(calibrate=True))
    result = cross_validate(dataset, [0, 9, 40], config)
    assert result.posteriors is not None
    assert np.allclose(result.posteriors.sum(axis=1), 1.0, atol=1e-9)
    text = format_posteriors_csv(dataset, result)
    lines = text.splitlines()
    assert lines[0] == "id,true,predicted,p_anger,p_contempt,p_disgust"
    assert len(lines) == 31


def test_posteriors_need_calibration() -> None:
    """Test that an uncalibrated result has no posterior CSV."""
    dataset = single_informative_dataset(per_class=10)
    result = cross_validate(dataset, [5], EvalConfig(folds=5))
    with pytest.raises(DimensionError):
        format_posteriors_csv(dataset, result)


def test_grid_search_scores_every_point() -> None:
    """Test that the grid covers all combinations and the best point wins."""
    dataset = single_informative_dataset(informative=5, per_class=10)
    result = grid_search(
        dataset, [5, 1], EvalConfig(folds=5), c_values=(1.0, 10.0), gamma_factors=(0.1, 1.0)
    )
    assert [p.C for p in result.points] == [1.0, 1.0, 10.0, 10.0]
    ratios = [p.gamma / result.points[0].gamma for p in result.points]
    assert ratios == pytest.approx([1.0, 10.0, 1.0, 10.0])
    best = max(result.points, key=lambda p: p.accuracy)
    assert result.best.C == best.C
    assert result.best_accuracy == best.accuracy


def test_ablation_drop_of_informative_feature() -> None:
    """Test that removing the only informative feature costs accuracy."""
    dataset = single_informative_dataset(informative=5, per_class=10)
    subset = [FeatureIndex.from_flat(5, 4), FeatureIndex.from_flat(0, 4)]
    full, rows = ablate(dataset, subset, EvalConfig(folds=5))
    assert [row.feature for row in rows] == subset
    assert rows[0].drop > 0.0
    assert rows[0].drop == full - rows[0].accuracy_without
    text = format_ablation_csv(full, rows)
    assert text.splitlines()[0] == f"# full_accuracy={full!r}"
    assert text.splitlines()[1] == "i,j,axis,accuracy_without,drop"
    with pytest.raises(FeatureIndexError, match="at least two"):
        ablate(dataset, subset[:1], EvalConfig(folds=5))
