"""Sequential forward selection with a wrapper SVM.

The dataset is split once into stratified training and test parts. Each
iteration appends every remaining candidate to the selected features in
turn, trains the multiclass SVM on the L2-normalized training vectors and
scores it on the test vectors. The best candidate is kept; the search ends
when no candidate beats the current accuracy.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import numpy.typing as npt
from joblib import Parallel, delayed

from .errors import FeatureIndexError, SplitError, SubsetFileError
from .features import Axis, FeatureDataset, FeatureIndex, feature_count, flat_indices
from .output import write_atomic
from .svm import SvmConfig, predict_batch, train_multiclass

logger = logging.getLogger(__name__)

IndexArray = npt.NDArray[np.intp]


@dataclass(frozen=True)
class SelectionConfig:
    """Settings of one forward-selection run.

    Attributes:
        train_ratio: Share of every class that goes to the training part.
        seed: Seed of the split shuffle.
        svm: Wrapper classifier settings.
        max_features: Optional cap on the number of selected features.
        min_improvement: A candidate must beat the current accuracy by more
            than this to be selected.
        candidate_pool: Optional flat indices the search is restricted to.
        threads: Worker count for candidate scoring; results do not depend on it.
    """

    train_ratio: float = 0.6
    seed: int = 0
    svm: SvmConfig = field(default_factory=SvmConfig)
    max_features: int | None = None
    min_improvement: float = 0.0
    candidate_pool: tuple[int, ...] | None = None
    threads: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.train_ratio < 1.0:
            msg = f"train_ratio must lie strictly between 0 and 1, got {self.train_ratio}"
            raise SplitError(msg)
        if self.max_features is not None and self.max_features < 1:
            raise SplitError(f"max_features must be at least 1, got {self.max_features}")
        if self.min_improvement < 0.0:
            raise SplitError(f"min_improvement must be non-negative, got {self.min_improvement}")
        if self.threads < 1:
            raise SplitError(f"threads must be at least 1, got {self.threads}")


@dataclass(frozen=True)
class SelectionStep:
    """One accepted candidate."""

    feature: FeatureIndex
    flat: int
    accuracy: float
    evaluated: int


@dataclass(frozen=True)
class SelectionTrace:
    """Result of a forward-selection run.

    Attributes:
        steps: Accepted candidates in selection order; accuracies strictly increase.
        landmark_count: L of the dataset.
        seed: Split seed used.
        train_ratio: Split ratio used.
    """

    steps: tuple[SelectionStep, ...]
    landmark_count: int
    seed: int
    train_ratio: float

    @property
    def final_subset(self) -> list[FeatureIndex]:
        return [step.feature for step in self.steps]

    @property
    def flat_subset(self) -> list[int]:
        return [step.flat for step in self.steps]

    @property
    def accuracies(self) -> list[float]:
        return [step.accuracy for step in self.steps]


@dataclass(frozen=True)
class FeatureSubset:
    """Contents of a subset file: the landmark count and the ordered features."""

    landmark_count: int
    features: tuple[FeatureIndex, ...]

    def __iter__(self) -> Iterator[FeatureIndex]:
        return iter(self.features)

    def __len__(self) -> int:
        return len(self.features)

    @property
    def flat(self) -> list[int]:
        return [feature.flat(self.landmark_count) for feature in self.features]


def _round_half_up(value: float) -> int:
    return math.floor(value + 0.5)


def stratified_split(
    codes: Sequence[int] | npt.NDArray[np.integer],
    train_ratio: float,
    seed: int,
) -> tuple[IndexArray, IndexArray]:
    """Split row positions into training and test parts, class by class.

    Every class with n examples contributes round(train_ratio * n) rows to
    training (half rounds up, at least 1 and at most n - 1). Rows are picked
    by a seeded shuffle inside each class, classes visited in code order.

    Returns:
        (train positions, test positions), each sorted ascending.

    Raises:
        SplitError: If the ratio is outside (0, 1) or a class has fewer than
            two examples.

    Example:
        >>> train, test = stratified_split([0] * 5 + [1] * 5, 0.6, seed=1)
        >>> len(train), len(test)
        (6, 4)
    """
    if not 0.0 < train_ratio < 1.0:
        raise SplitError(f"train_ratio must lie strictly between 0 and 1, got {train_ratio}")
    labels = np.asarray(codes, dtype=np.int64).reshape(-1)
    rng = np.random.default_rng(seed)
    train: list[int] = []
    test: list[int] = []
    for code in np.unique(labels).tolist():
        members = np.flatnonzero(labels == code)
        if members.size < 2:
            raise SplitError(f"class {code} has {members.size} example(s); at least 2 are needed")
        n_train = min(max(_round_half_up(train_ratio * members.size), 1), members.size - 1)
        shuffled = rng.permutation(members)
        train.extend(shuffled[:n_train].tolist())
        test.extend(shuffled[n_train:].tolist())
    return np.array(sorted(train), dtype=np.intp), np.array(sorted(test), dtype=np.intp)


def score_subset(
    subset: Sequence[FeatureIndex] | Sequence[int],
    train: FeatureDataset,
    test: FeatureDataset,
    svm_config: SvmConfig,
) -> float:
    """Test accuracy of a multiclass SVM trained on the subset's features.

    Both parts are projected onto the subset (FeatureIndex values or flat
    indices) and L2-normalized per example before training and prediction.

    Raises:
        FeatureIndexError: If the subset is empty, has duplicates, or is out of range.
        SplitError: If either part is empty.
    """
    if len(subset) == 0:
        raise FeatureIndexError("cannot score an empty subset")
    if len(train) == 0 or len(test) == 0:
        raise SplitError("training and test parts must both be non-empty")
    flat = flat_indices(subset, train.landmark_count)
    model = train_multiclass(train.normalized(flat), train.codes, svm_config)
    predictions = predict_batch(model, test.normalized(flat))
    return float(np.mean(predictions == test.codes))


@dataclass(frozen=True)
class SubsetScorer:
    """score_subset bound to one split; picklable so workers can use it."""

    train: FeatureDataset
    test: FeatureDataset
    svm_config: SvmConfig

    @classmethod
    def for_dataset(cls, dataset: FeatureDataset, config: SelectionConfig) -> SubsetScorer:
        """Build the scorer on the stratified split selection uses."""
        train_rows, test_rows = stratified_split(dataset.codes, config.train_ratio, config.seed)
        return cls(dataset.take(train_rows), dataset.take(test_rows), config.svm)

    def __call__(self, subset: Sequence[int]) -> float:
        return score_subset(subset, self.train, self.test, self.svm_config)

    def score_candidates(self, selected: Sequence[int], candidates: Sequence[int]) -> list[float]:
        """Accuracy of selected + [c] for each candidate c, in candidate order."""
        prefix = list(selected)
        return [self([*prefix, candidate]) for candidate in candidates]


def _chunks(items: Sequence[int], count: int) -> list[list[int]]:
    size = max(1, math.ceil(len(items) / count))
    return [list(items[start : start + size]) for start in range(0, len(items), size)]


def evaluate_candidates(
    scorer: SubsetScorer,
    selected: Sequence[int],
    candidates: Sequence[int],
    threads: int = 1,
) -> list[float]:
    """Score every candidate, optionally across worker processes.

    Results come back in candidate order regardless of the worker count.
    """
    if threads <= 1 or len(candidates) < 2:
        return scorer.score_candidates(selected, candidates)
    chunks = _chunks(candidates, threads * 4)
    results = Parallel(n_jobs=threads)(
        delayed(scorer.score_candidates)(list(selected), chunk) for chunk in chunks
    )
    return [score for chunk_scores in results for score in chunk_scores]


def best_candidate(candidates: Sequence[int], scores: Sequence[float]) -> tuple[int, float]:
    """Highest score, ties to the lowest flat index; independent of input order."""
    accuracy, negative_index = max(
        (score, -candidate) for candidate, score in zip(candidates, scores, strict=True)
    )
    return -negative_index, accuracy


def _resolve_pool(dataset: FeatureDataset, pool: tuple[int, ...] | None) -> list[int]:
    if pool is None:
        return list(range(dataset.dimension))
    indices = [int(k) for k in pool]
    if len(set(indices)) != len(indices):
        raise FeatureIndexError("candidate pool contains duplicate indices")
    for k in indices:
        if not 0 <= k < dataset.dimension:
            raise FeatureIndexError(f"candidate {k} out of range 0..{dataset.dimension - 1}")
    return sorted(indices)


def sfs(dataset: FeatureDataset, config: SelectionConfig) -> SelectionTrace:
    """Run sequential forward selection.

    Iteration k scores every unselected candidate appended to the current
    subset and keeps the best one (ties to the lowest flat index). The run
    stops when the best accuracy is not greater than the current accuracy
    plus min_improvement, when max_features is reached, or when no
    candidates remain. The accuracy of the empty subset is 0.

    Args:
        dataset: Full feature matrix with labels.
        config: Split, classifier and stopping settings.

    Returns:
        The selection trace.
    """
    pool = _resolve_pool(dataset, config.candidate_pool)
    if not pool:
        raise FeatureIndexError("no candidate features to select from")
    scorer = SubsetScorer.for_dataset(dataset, config)
    logger.info(
        "Forward selection over %d candidates (%d train / %d test examples, seed %d)",
        len(pool),
        len(scorer.train),
        len(scorer.test),
        config.seed,
    )

    selected: list[int] = []
    steps: list[SelectionStep] = []
    current = 0.0
    while len(selected) < len(pool):
        if config.max_features is not None and len(selected) >= config.max_features:
            break
        chosen = set(selected)
        candidates = [k for k in pool if k not in chosen]
        scores = evaluate_candidates(scorer, selected, candidates, config.threads)
        flat, accuracy = best_candidate(candidates, scores)
        if not accuracy > current + config.min_improvement:
            logger.info("No candidate improves accuracy %.4f; stopping", current)
            break
        feature = FeatureIndex.from_flat(flat, dataset.landmark_count)
        selected.append(flat)
        current = accuracy
        steps.append(SelectionStep(feature, flat, accuracy, len(candidates)))
        logger.info("Step %d: %s -> accuracy %.4f", len(steps), feature.describe(), accuracy)

    return SelectionTrace(tuple(steps), dataset.landmark_count, config.seed, config.train_ratio)


def format_subset(features: Sequence[FeatureIndex], landmark_count: int) -> str:
    """Subset-file text: ``landmarks=<L>`` then one ``i,j,axis`` line per feature."""
    lines = [f"landmarks={landmark_count}"]
    lines.extend(f"{f.i},{f.j},{f.axis.value}" for f in features)
    return "\n".join(lines) + "\n"


def save_subset(trace: SelectionTrace | FeatureSubset, path: Path | str) -> Path:
    """Write the selected features of a trace (or an explicit subset) atomically."""
    if isinstance(trace, SelectionTrace):
        text = format_subset(trace.final_subset, trace.landmark_count)
    else:
        text = format_subset(trace.features, trace.landmark_count)
    return write_atomic(path, text)


def parse_subset(text: str, source: str = "<subset>") -> FeatureSubset:
    """Parse subset-file text.

    Raises:
        SubsetFileError: On a missing or bad ``landmarks=`` line, a malformed
            feature line, an index out of range for L, or a duplicate.
    """
    lines = text.splitlines()
    if not lines or not lines[0].startswith("landmarks="):
        raise SubsetFileError(f"{source}:1: first line must be 'landmarks=<L>'")
    try:
        landmark_count = int(lines[0].partition("=")[2].strip())
    except ValueError:
        raise SubsetFileError(f"{source}:1: invalid landmark count") from None
    if landmark_count < 2:
        raise SubsetFileError(f"{source}:1: landmark count must be at least 2")

    features: list[FeatureIndex] = []
    seen: set[FeatureIndex] = set()
    for line_no, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        parts = [part.strip() for part in line.split(",")]
        if len(parts) != 3:
            raise SubsetFileError(f"{source}:{line_no}: expected 'i,j,axis', got {line!r}")
        try:
            feature = FeatureIndex(int(parts[0]), int(parts[1]), Axis(parts[2]))
            feature.flat(landmark_count)
        except FeatureIndexError as exc:
            raise SubsetFileError(f"{source}:{line_no}: {exc}") from None
        except ValueError:
            raise SubsetFileError(f"{source}:{line_no}: malformed feature {line!r}") from None
        if feature in seen:
            raise SubsetFileError(f"{source}:{line_no}: duplicate feature {line!r}")
        seen.add(feature)
        features.append(feature)
    return FeatureSubset(landmark_count, tuple(features))


def load_subset(path: Path | str) -> FeatureSubset:
    """Read a subset file written by save_subset."""
    file_path = Path(path)
    if not file_path.is_file():
        raise SubsetFileError(f"subset file not found: {file_path}")
    return parse_subset(file_path.read_text(encoding="utf-8"), str(file_path))


TRACE_HEADER = ("step", "i", "j", "axis", "flat", "accuracy", "evaluated")


def format_trace_csv(trace: SelectionTrace) -> str:
    """Machine-readable trace: a ``#`` settings line, then one CSV row per step."""
    buffer = io.StringIO()
    buffer.write(
        f"# landmarks={trace.landmark_count} seed={trace.seed} "
        f"train_ratio={trace.train_ratio!r}\n"
    )
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for number, step in enumerate(trace.steps, 1):
        f = step.feature
        row = [number, f.i, f.j, f.axis.value, step.flat, repr(step.accuracy), step.evaluated]
        writer.writerow(row)
    return buffer.getvalue()


def parse_trace_csv(text: str, source: str = "<trace>") -> SelectionTrace:
    """Parse text written by format_trace_csv.

    Raises:
        SubsetFileError: If the settings line, header or a row is malformed.
    """
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise SubsetFileError(f"{source}:1: missing settings line")
    settings: dict[str, str] = {}
    for token in lines[0].lstrip("# ").split():
        key, _, value = token.partition("=")
        settings[key] = value
    try:
        landmark_count = int(settings["landmarks"])
        seed = int(settings["seed"])
        train_ratio = float(settings["train_ratio"])
    except (KeyError, ValueError):
        raise SubsetFileError(f"{source}:1: malformed settings line {lines[0]!r}") from None

    rows = list(csv.reader(lines[1:]))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise SubsetFileError(f"{source}:2: trace header must be {','.join(TRACE_HEADER)}")
    steps: list[SelectionStep] = []
    for line_no, row in enumerate(rows[1:], 3):
        if not row:
            continue
        try:
            _, i, j, axis, flat, accuracy, evaluated = row
            feature = FeatureIndex(int(i), int(j), Axis(axis))
            if feature.flat(landmark_count) != int(flat):
                raise SubsetFileError(f"{source}:{line_no}: flat index does not match the pair")
            steps.append(SelectionStep(feature, int(flat), float(accuracy), int(evaluated)))
        except SubsetFileError:
            raise
        except ValueError:
            raise SubsetFileError(f"{source}:{line_no}: malformed trace row {row}") from None
    return SelectionTrace(tuple(steps), landmark_count, seed, train_ratio)


def load_trace(path: Path | str) -> SelectionTrace:
    """Read a trace CSV."""
    file_path = Path(path)
    if not file_path.is_file():
        raise SubsetFileError(f"trace file not found: {file_path}")
    return parse_trace_csv(file_path.read_text(encoding="utf-8"), str(file_path))


def render_trace(trace: SelectionTrace) -> str:
    """Human-readable trace table."""
    rows = [
        (str(n), s.feature.describe(), f"{s.accuracy:.4f}") for n, s in enumerate(trace.steps, 1)
    ]
    width = max([len("feature"), *(len(row[1]) for row in rows)])
    lines = [f"{'step':>4}  {'feature':<{width}}  accuracy"]
    lines.extend(f"{n:>4}  {description:<{width}}  {accuracy}" for n, description, accuracy in rows)
    lines.append(
        f"selected {len(trace.steps)} of {feature_count(trace.landmark_count)} features "
        f"(seed {trace.seed}, train ratio {trace.train_ratio})"
    )
    return "\n".join(lines) + "\n"
