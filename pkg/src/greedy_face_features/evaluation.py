"""Stratified k-fold evaluation of a fixed feature subset.

Each fold trains the multiclass SVM on the projected, L2-normalized
training rows and predicts the held-out rows. Predictions from all folds
go into one global confusion matrix (rows are true classes, columns are
predictions).
"""

from __future__ import annotations

import csv
import io
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from itertools import product

import numpy as np
import numpy.typing as npt
from joblib import Parallel, delayed
from sklearn.metrics import confusion_matrix
from sklearn.model_selection import StratifiedKFold

from .errors import DimensionError, FeatureIndexError, SplitError
from .features import FeatureDataset, FeatureIndex, FloatArray, flat_indices
from .labels import ExpressionLabel
from .svm import SvmConfig, SvmModel, predict_batch, predict_proba_batch, train_multiclass

logger = logging.getLogger(__name__)

IndexArray = npt.NDArray[np.intp]
Fold = tuple[IndexArray, IndexArray]

GRID_C = (0.1, 1.0, 10.0, 100.0)
GRID_GAMMA_FACTORS = (0.01, 0.1, 1.0, 10.0)


@dataclass(frozen=True)
class EvalConfig:
    """Cross-validation settings.

    Attributes:
        folds: Number of folds; must not exceed the smallest class count.
        seed: Seed of the within-class fold shuffle.
        svm: Classifier settings.
        threads: Worker count for fold training; results do not depend on it.
    """

    folds: int = 10
    seed: int = 0
    svm: SvmConfig = field(default_factory=SvmConfig)
    threads: int = 1

    def __post_init__(self) -> None:
        if self.folds < 2:
            raise SplitError(f"folds must be at least 2, got {self.folds}")
        if self.threads < 1:
            raise SplitError(f"threads must be at least 1, got {self.threads}")


def class_name(code: int) -> str:
    """Label name for a class code, or the code itself outside the label set."""
    try:
        return ExpressionLabel.from_code(code).value
    except ValueError:
        return str(code)


def stratified_kfold(
    codes: Sequence[int] | npt.NDArray[np.integer],
    folds: int,
    seed: int,
) -> list[Fold]:
    """Partition row positions into stratified folds.

    Within every class the fold sizes differ by at most one and the
    assignment is a seeded shuffle, so each row is tested exactly once.

    Returns:
        One (train positions, test positions) pair per fold, both sorted.

    Raises:
        SplitError: If folds < 2 or a class has fewer examples than folds.

    Example:
        >>> [len(test) for _, test in stratified_kfold([0] * 10, 5, seed=0)]
        [2, 2, 2, 2, 2]
    """
    if folds < 2:
        raise SplitError(f"folds must be at least 2, got {folds}")
    labels = np.asarray(codes, dtype=np.int64).reshape(-1)
    values, counts = np.unique(labels, return_counts=True)
    for code, count in zip(values.tolist(), counts.tolist(), strict=True):
        if count < folds:
            raise SplitError(
                f"class {class_name(code)} has {count} example(s), fewer than {folds} folds"
            )
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    placeholder = np.zeros((labels.size, 1))
    return [
        (np.asarray(train, dtype=np.intp), np.asarray(test, dtype=np.intp))
        for train, test in splitter.split(placeholder, labels)
    ]


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts of (true class, predicted class) over all tested examples.

    Attributes:
        classes: Class codes, ascending; rows and columns follow this order.
        counts: (K, K) nonnegative integer counts, rows true, columns predicted.
    """

    classes: tuple[int, ...]
    counts: npt.NDArray[np.int64]

    def __post_init__(self) -> None:
        k = len(self.classes)
        if self.counts.shape != (k, k):
            raise DimensionError(f"counts shape {self.counts.shape} does not match {k} classes")
        if np.any(self.counts < 0):
            raise DimensionError("confusion counts must be nonnegative")

    @classmethod
    def from_predictions(
        cls,
        truth: Sequence[int] | npt.NDArray[np.integer],
        predicted: Sequence[int] | npt.NDArray[np.integer],
        classes: Sequence[int],
    ) -> ConfusionMatrix:
        labels = [int(c) for c in classes]
        counts = confusion_matrix(truth, predicted, labels=labels).astype(np.int64)
        return cls(tuple(labels), counts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.classes == other.classes and np.array_equal(self.counts, other.counts)

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        if self.classes != other.classes:
            raise DimensionError("cannot merge confusion matrices over different classes")
        return ConfusionMatrix(self.classes, self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def row_totals(self) -> npt.NDArray[np.int64]:
        return self.counts.sum(axis=1)

    @property
    def empty_rows(self) -> list[int]:
        """Codes of classes with no tested examples; their normalized rows are zero."""
        return [code for code, total in zip(self.classes, self.row_totals.tolist()) if total == 0]

    @property
    def row_normalized(self) -> FloatArray:
        totals = self.row_totals.astype(np.float64)
        safe = np.where(totals > 0, totals, 1.0)
        return self.counts / safe[:, np.newaxis]

    @property
    def labels(self) -> list[ExpressionLabel]:
        return [ExpressionLabel.from_code(code) for code in self.classes]


@dataclass(frozen=True)
class EvalMetrics:
    """Overall accuracy, per-class accuracy and their unweighted mean."""

    accuracy: float
    per_class: dict[int, float]
    mean_class_accuracy: float

    @classmethod
    def from_matrix(cls, matrix: ConfusionMatrix) -> EvalMetrics:
        """Metrics derived from the counts alone.

        Per-class accuracy is the diagonal of the row-normalized matrix;
        classes without tested examples are left out of the mean.
        """
        if matrix.total == 0:
            raise DimensionError("confusion matrix has no counts")
        diagonal = np.diag(matrix.counts)
        accuracy = int(diagonal.sum()) / matrix.total
        totals = matrix.row_totals
        per_class = {
            code: int(hit) / int(total)
            for code, hit, total in zip(matrix.classes, diagonal.tolist(), totals.tolist())
            if total > 0
        }
        mean = float(np.mean(list(per_class.values())))
        return cls(accuracy, per_class, mean)


@dataclass(frozen=True, eq=False)
class CrossValidation:
    """Result of one cross-validation run.

    Attributes:
        matrix: Global confusion matrix.
        metrics: Metrics of matrix.
        folds: Fold count used.
        seed: Fold seed used.
        predicted: Predicted code per dataset row.
        fold_of: Test fold number per dataset row.
        posteriors: (n, K) posteriors per row over matrix.classes, when calibrated.
    """

    matrix: ConfusionMatrix
    metrics: EvalMetrics
    folds: int
    seed: int
    predicted: npt.NDArray[np.int64]
    fold_of: npt.NDArray[np.int64]
    posteriors: FloatArray | None = None


@dataclass(frozen=True)
class _FoldResult:
    test: IndexArray
    predicted: npt.NDArray[np.int64]
    posteriors: FloatArray | None


def _run_fold(
    dataset: FeatureDataset,
    flat: list[int],
    fold: Fold,
    svm_config: SvmConfig,
    classes: tuple[int, ...],
) -> _FoldResult:
    train, test = fold
    rows = dataset.normalized(flat)
    model = train_multiclass(rows[train], dataset.codes[train], svm_config)
    test_rows = rows[test]
    predicted = predict_batch(model, test_rows)
    if not svm_config.calibrate:
        return _FoldResult(test, predicted, None)
    posteriors = np.zeros((test.size, len(classes)))
    columns = [classes.index(code) for code in model.classes]
    posteriors[:, columns] = predict_proba_batch(model, test_rows)
    return _FoldResult(test, predicted, posteriors)


def _resolve_subset(
    dataset: FeatureDataset,
    subset: Sequence[FeatureIndex] | Sequence[int],
) -> list[int]:
    if len(subset) == 0:
        raise FeatureIndexError("cannot evaluate an empty subset")
    return flat_indices(subset, dataset.landmark_count)


def cross_validate(
    dataset: FeatureDataset,
    subset: Sequence[FeatureIndex] | Sequence[int],
    config: EvalConfig,
) -> CrossValidation:
    """Run stratified k-fold cross-validation on a feature subset.

    Args:
        dataset: Full feature matrix with labels.
        subset: Features to evaluate, as FeatureIndex values or flat indices.
        config: Fold count, seed and classifier settings.

    Returns:
        The global confusion matrix with its metrics. With a calibrating
        SvmConfig the posteriors of every tested row are included.

    Raises:
        SplitError: If the folds cannot be built.
        FeatureIndexError: If the subset is empty or out of range.
    """
    flat = _resolve_subset(dataset, subset)
    folds = stratified_kfold(dataset.codes, config.folds, config.seed)
    classes = tuple(int(c) for c in np.unique(dataset.codes))

    if config.threads > 1:
        results = Parallel(n_jobs=config.threads)(
            delayed(_run_fold)(dataset, flat, fold, config.svm, classes) for fold in folds
        )
    else:
        results = [_run_fold(dataset, flat, fold, config.svm, classes) for fold in folds]

    predicted = np.full(len(dataset), -1, dtype=np.int64)
    fold_of = np.full(len(dataset), -1, dtype=np.int64)
    posteriors = np.zeros((len(dataset), len(classes))) if config.svm.calibrate else None
    for number, result in enumerate(results):
        predicted[result.test] = result.predicted
        fold_of[result.test] = number
        if posteriors is not None and result.posteriors is not None:
            posteriors[result.test] = result.posteriors
        fold_accuracy = float(np.mean(result.predicted == dataset.codes[result.test]))
        logger.info("Fold %d/%d: accuracy %.4f", number + 1, len(folds), fold_accuracy)

    matrix = ConfusionMatrix.from_predictions(dataset.codes, predicted, classes)
    return CrossValidation(
        matrix=matrix,
        metrics=EvalMetrics.from_matrix(matrix),
        folds=config.folds,
        seed=config.seed,
        predicted=predicted,
        fold_of=fold_of,
        posteriors=posteriors,
    )


def train_final(
    dataset: FeatureDataset,
    subset: Sequence[FeatureIndex] | Sequence[int],
    svm_config: SvmConfig,
) -> SvmModel:
    """Train one multiclass model on every row, for saving after evaluation.

    Raises:
        FeatureIndexError: If the subset is empty or out of range.
    """
    flat = _resolve_subset(dataset, subset)
    return train_multiclass(dataset.normalized(flat), dataset.codes, svm_config)


def format_fraction(value: float, places: int = 2) -> str:
    """Fixed-point text rounded half away from zero (0.005 -> "0.01")."""
    quantum = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_UP))


def render_confusion(
    matrix: ConfusionMatrix,
    labels: Sequence[ExpressionLabel] | None = None,
) -> str:
    """Row-normalized confusion table with two decimals.

    Rows and columns follow the canonical label order. Classes with no
    tested examples show a zero row marked "(no examples)".

    Raises:
        DimensionError: If labels are given and their codes differ from
            matrix.classes, in count or in order.
    """
    if labels is not None:
        codes = tuple(label.code for label in labels)
        if codes != tuple(matrix.classes):
            raise DimensionError(
                f"labels with codes {list(codes)} do not match matrix classes "
                f"{list(matrix.classes)}"
            )
    names = [label.title for label in labels] if labels is not None else [
        class_name(code).capitalize() for code in matrix.classes
    ]
    normalized = matrix.row_normalized
    width = max(len(name) for name in names)
    cell = max(width, 4)
    lines = [" " * width + "  " + "  ".join(f"{name:>{cell}}" for name in names)]
    empty = set(matrix.empty_rows)
    for name, code, row in zip(names, matrix.classes, normalized.tolist(), strict=True):
        cells = "  ".join(f"{format_fraction(value):>{cell}}" for value in row)
        suffix = "  (no examples)" if code in empty else ""
        lines.append(f"{name:<{width}}  {cells}{suffix}")
    return "\n".join(lines) + "\n"


def format_counts_csv(matrix: ConfusionMatrix) -> str:
    """Raw counts as CSV; the first column holds the true class."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    names = [class_name(code) for code in matrix.classes]
    writer.writerow(["true", *names])
    for name, row in zip(names, matrix.counts.tolist(), strict=True):
        writer.writerow([name, *row])
    return buffer.getvalue()


def summary_line(result: CrossValidation) -> str:
    """``accuracy=<x> mean_class_accuracy=<y> folds=<k> seed=<s>``."""
    return (
        f"accuracy={result.metrics.accuracy:.6f} "
        f"mean_class_accuracy={result.metrics.mean_class_accuracy:.6f} "
        f"folds={result.folds} seed={result.seed}"
    )


def per_class_report(matrix: ConfusionMatrix) -> list[str]:
    """One ``label: accuracy (hits/total)`` line per class."""
    lines = []
    diagonal = np.diag(matrix.counts).tolist()
    for code, hits, total in zip(matrix.classes, diagonal, matrix.row_totals.tolist(), strict=True):
        if total == 0:
            lines.append(f"{class_name(code)}: n/a (0/0)")
        else:
            lines.append(f"{class_name(code)}: {hits / total:.4f} ({hits}/{total})")
    return lines


def format_posteriors_csv(dataset: FeatureDataset, result: CrossValidation) -> str:
    """``id,true,predicted,p_<label>...`` for every row of a calibrated run."""
    if result.posteriors is None:
        raise DimensionError("cross-validation ran without calibration; no posteriors")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    names = [class_name(code) for code in result.matrix.classes]
    writer.writerow(["id", "true", "predicted", *(f"p_{name}" for name in names)])
    rows = zip(
        dataset.ids,
        dataset.codes.tolist(),
        result.predicted.tolist(),
        result.posteriors.tolist(),
        strict=True,
    )
    for example_id, truth, predicted, posterior in rows:
        writer.writerow(
            [example_id, class_name(truth), class_name(predicted), *(repr(p) for p in posterior)]
        )
    return buffer.getvalue()


@dataclass(frozen=True)
class GridPoint:
    C: float
    gamma: float
    accuracy: float


@dataclass(frozen=True)
class GridSearch:
    """All scored grid points (C-major order) and the winning SvmConfig."""

    points: tuple[GridPoint, ...]
    best: SvmConfig

    @property
    def best_accuracy(self) -> float:
        return max(point.accuracy for point in self.points)


def grid_search(
    dataset: FeatureDataset,
    subset: Sequence[FeatureIndex] | Sequence[int],
    config: EvalConfig,
    c_values: Sequence[float] = GRID_C,
    gamma_factors: Sequence[float] = GRID_GAMMA_FACTORS,
) -> GridSearch:
    """Score a coarse (C, gamma) grid by cross-validated accuracy.

    Gamma values are multiples of the "scale" gamma of the normalized
    subset vectors. Ties go to the first grid point in C-major order.
    """
    flat = _resolve_subset(dataset, subset)
    base_gamma = SvmConfig().resolve_gamma(dataset.normalized(flat))
    points: list[GridPoint] = []
    best: tuple[float, SvmConfig] | None = None
    for c_value, factor in product(c_values, gamma_factors):
        svm_config = replace(config.svm, C=float(c_value), gamma=base_gamma * factor)
        accuracy = cross_validate(dataset, flat, replace(config, svm=svm_config)).metrics.accuracy
        points.append(GridPoint(float(c_value), base_gamma * factor, accuracy))
        logger.info("Grid C=%g gamma=%.4g: accuracy %.4f", c_value, base_gamma * factor, accuracy)
        if best is None or accuracy > best[0]:
            best = (accuracy, svm_config)
    if best is None:
        raise SplitError("grid search needs at least one C and one gamma value")
    return GridSearch(tuple(points), best[1])


@dataclass(frozen=True)
class AblationRow:
    """CV accuracy of the subset without one feature, and the drop it causes."""

    feature: FeatureIndex
    accuracy_without: float
    drop: float


def ablate(
    dataset: FeatureDataset,
    subset: Sequence[FeatureIndex],
    config: EvalConfig,
) -> tuple[float, list[AblationRow]]:
    """Leave-one-feature-out cross-validation.

    Returns:
        The full subset's accuracy and one row per feature in subset order.

    Raises:
        FeatureIndexError: If the subset has fewer than two features.
    """
    if len(subset) < 2:
        raise FeatureIndexError("ablation needs at least two features")
    full = cross_validate(dataset, subset, config).metrics.accuracy
    rows = []
    for position, feature in enumerate(subset):
        rest = [f for k, f in enumerate(subset) if k != position]
        accuracy = cross_validate(dataset, rest, config).metrics.accuracy
        rows.append(AblationRow(feature, accuracy, full - accuracy))
        logger.info("Without %s: accuracy %.4f", feature.describe(), accuracy)
    return full, rows


def format_ablation_csv(full_accuracy: float, rows: Sequence[AblationRow]) -> str:
    buffer = io.StringIO()
    buffer.write(f"# full_accuracy={full_accuracy!r}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["i", "j", "axis", "accuracy_without", "drop"])
    for row in rows:
        f = row.feature
        writer.writerow([f.i, f.j, f.axis.value, repr(row.accuracy_without), repr(row.drop)])
    return buffer.getvalue()
