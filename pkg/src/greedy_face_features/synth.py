"""Synthetic expression datasets and brute-force reference solvers.

Generated datasets plant class-dependent motion on chosen landmark
coordinates, so the informative features are known in advance. The two
oracles answer the same questions as the main code by exhaustive search:
the best feature subset of a small size, and the exact SVM dual solution
of a tiny problem. The dual oracle computes its own kernel and shares no
code with the SMO solver.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from itertools import combinations, product
from pathlib import Path

import numpy as np
import numpy.typing as npt
from scipy import linalg
from scipy.spatial.distance import cdist

from .errors import DimensionError, InputError
from .features import Axis, FeatureIndex, FloatArray
from .labels import ExpressionLabel
from .landmarks import LandmarkFrame, SequenceExample, format_manifest, format_pts
from .output import write_atomic
from .selection import format_subset

logger = logging.getLogger(__name__)

MAX_SUBSET_SIZE = 3
MAX_POOL_SIZE = 64
MAX_ORACLE_POINTS = 6

BASE_RADIUS = 100.0


@dataclass(frozen=True)
class PlantedFeature:
    """A feature whose apex motion depends on the class.

    Attributes:
        feature: Landmark pair and axis; landmark j moves along the axis.
        displacements: Mean displacement per class code, one entry per class.
    """

    feature: FeatureIndex
    displacements: tuple[float, ...]


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic dataset.

    Attributes:
        landmark_count: L.
        class_count: K, between 2 and the number of expression labels.
        examples_per_class: Examples generated for every class.
        planted: Informative features with their per-class displacements.
        noise_sigma: Standard deviation of Gaussian noise on every apex coordinate.
        seed: Seed of all random draws.
        jitter: Standard deviation of the per-example neutral-shape jitter.
    """

    landmark_count: int = 20
    class_count: int = 7
    examples_per_class: int = 40
    planted: tuple[PlantedFeature, ...] = ()
    noise_sigma: float = 0.5
    seed: int = 0
    jitter: float = 2.0

    def __post_init__(self) -> None:
        if self.landmark_count < 2:
            raise InputError(f"landmark_count must be at least 2, got {self.landmark_count}")
        if not 2 <= self.class_count <= len(ExpressionLabel):
            raise InputError(
                f"class_count must lie in 2..{len(ExpressionLabel)}, got {self.class_count}"
            )
        if self.examples_per_class < 1:
            raise InputError(f"examples_per_class must be positive, got {self.examples_per_class}")
        if self.noise_sigma < 0 or self.jitter < 0:
            raise InputError("noise_sigma and jitter must be non-negative")
        for planted in self.planted:
            planted.feature.flat(self.landmark_count)
            if len(planted.displacements) != self.class_count:
                raise InputError(
                    f"planted feature {planted.feature.describe()} has "
                    f"{len(planted.displacements)} displacements for {self.class_count} classes"
                )

    @property
    def planted_flat(self) -> list[int]:
        return [p.feature.flat(self.landmark_count) for p in self.planted]


@dataclass(frozen=True)
class SyntheticDataset:
    """Generated examples with the planted ground truth."""

    spec: SynthSpec
    examples: tuple[SequenceExample, ...]

    @property
    def planted(self) -> list[FeatureIndex]:
        return [p.feature for p in self.spec.planted]

    @property
    def planted_flat(self) -> list[int]:
        return self.spec.planted_flat


def one_hot_planted(
    features: Sequence[FeatureIndex],
    class_count: int,
    displacement: float = 10.0,
    background: float | None = None,
) -> tuple[PlantedFeature, ...]:
    """Planted design where feature k singles out class k.

    Class k moves by displacement along feature k; every other class moves
    by background, which defaults to -displacement. With the default the
    sign of feature k alone separates class k from the rest, which survives
    per-example normalization of a one-feature subset. A zero background
    leaves the other classes to noise.

    Example:
        >>> f = FeatureIndex(0, 1, Axis.HORIZONTAL)
        >>> one_hot_planted([f], 2, 5.0)[0].displacements
        (5.0, -5.0)
    """
    other = -displacement if background is None else background
    if len(features) > class_count:
        raise InputError(f"{len(features)} one-hot features for only {class_count} classes")
    return tuple(
        PlantedFeature(
            feature, tuple(displacement if c == k else other for c in range(class_count))
        )
        for k, feature in enumerate(features)
    )


def class_groups(class_count: int) -> list[list[int]]:
    """Consecutive class groups of two, with a final group of three for odd counts."""
    if class_count < 2:
        raise InputError(f"need at least two classes, got {class_count}")
    groups = [[c, c + 1] for c in range(0, class_count - 1, 2)]
    if class_count % 2:
        groups[-1].append(class_count - 1)
    return groups


def chained_planted(
    features: Sequence[FeatureIndex],
    class_count: int,
    displacement: float = 10.0,
    ratio: float = 0.5,
) -> tuple[PlantedFeature, ...]:
    """Planted design in which no feature can be left out.

    Feature k belongs to class k. Classes form cyclic groups (see
    class_groups); class c moves by displacement * ratio**m along the
    feature of the class m places after it in its group and stays put on
    every other feature. Without feature k, the displacements of class k
    are ratio times those of the next class in its group, so the two
    coincide after per-example normalization. With all features every
    class has its own direction.

    Example:
        >>> f = [FeatureIndex(0, 1, Axis.HORIZONTAL), FeatureIndex(2, 3, Axis.VERTICAL)]
        >>> [p.displacements for p in chained_planted(f, 2, 8.0)]
        [(8.0, 4.0), (4.0, 8.0)]
    """
    if len(features) != class_count:
        raise InputError(f"{len(features)} chained features for {class_count} classes")
    if not 0.0 < ratio < 1.0:
        raise InputError(f"ratio must lie strictly between 0 and 1, got {ratio}")
    table = np.zeros((class_count, class_count))
    for group in class_groups(class_count):
        size = len(group)
        for position, code in enumerate(group):
            for offset in range(size):
                owner = group[(position + offset) % size]
                table[code, owner] = displacement * ratio**offset
    return tuple(
        PlantedFeature(feature, tuple(float(v) for v in table[:, k]))
        for k, feature in enumerate(features)
    )


def pick_planted_features(landmark_count: int, count: int, seed: int) -> list[FeatureIndex]:
    """Draw count features on 2 * count distinct landmarks with random axes.

    No landmark belongs to two planted features, so moving one feature's
    landmark j leaves the others untouched.
    """
    if 2 * count > landmark_count:
        raise InputError(f"{count} planted features need at least {2 * count} landmarks")
    rng = np.random.default_rng(seed)
    chosen = rng.permutation(landmark_count)[: 2 * count].reshape(count, 2)
    axes = rng.integers(0, 2, size=count)
    return [
        FeatureIndex(int(min(a, b)), int(max(a, b)), Axis.VERTICAL if axis else Axis.HORIZONTAL)
        for (a, b), axis in zip(chosen.tolist(), axes.tolist(), strict=True)
    ]


def base_shape(landmark_count: int) -> FloatArray:
    """Landmarks evenly spaced on a circle of radius BASE_RADIUS."""
    angles = 2.0 * np.pi * np.arange(landmark_count) / landmark_count
    return BASE_RADIUS * np.column_stack([np.cos(angles), np.sin(angles)])


def _displacement_field(spec: SynthSpec, code: int) -> FloatArray:
    field = np.zeros((spec.landmark_count, 2))
    for planted in spec.planted:
        column = 0 if planted.feature.axis is Axis.HORIZONTAL else 1
        field[planted.feature.j, column] += planted.displacements[code]
    return field


def generate(spec: SynthSpec) -> SyntheticDataset:
    """Draw a labeled dataset.

    Neutral frames are the base circle plus jitter. Apex frames add the
    class's planted displacements (landmark j of each planted feature,
    along its axis) and Gaussian noise of noise_sigma on every coordinate.
    Examples are ordered by class, then by number.
    """
    rng = np.random.default_rng(spec.seed)
    base = base_shape(spec.landmark_count)
    examples: list[SequenceExample] = []
    for code in range(spec.class_count):
        label = ExpressionLabel.from_code(code)
        field = _displacement_field(spec, code)
        for number in range(spec.examples_per_class):
            neutral = base + spec.jitter * rng.standard_normal(base.shape)
            apex = neutral + field + spec.noise_sigma * rng.standard_normal(base.shape)
            examples.append(
                SequenceExample(
                    id=f"{label.value}_{number:03d}",
                    subject=f"S{number:03d}",
                    label=label,
                    neutral=LandmarkFrame(neutral),
                    apex=LandmarkFrame(apex),
                )
            )
    logger.debug(
        "Generated %d synthetic examples (L=%d, %d planted features)",
        len(examples),
        spec.landmark_count,
        len(spec.planted),
    )
    return SyntheticDataset(spec, tuple(examples))


def untouched_features(spec: SynthSpec) -> list[int]:
    """Flat indices of features on landmarks no planted displacement moves.

    These carry noise only, unlike the byproducts that share a moved landmark.
    """
    moved = {p.feature.j for p in spec.planted}
    still = [k for k in range(spec.landmark_count) if k not in moved]
    return sorted(
        FeatureIndex(i, j, axis).flat(spec.landmark_count)
        for i, j in combinations(still, 2)
        for axis in Axis
    )


def write_dataset(dataset: SyntheticDataset, directory: Path | str) -> Path:
    """Write manifest.csv, frames/*.pts and planted.txt under directory.

    Returns:
        Path of the manifest.
    """
    root = Path(directory)
    rows = []
    for example in dataset.examples:
        neutral = f"frames/{example.id}_neutral.pts"
        apex = f"frames/{example.id}_apex.pts"
        write_atomic(root / neutral, format_pts(example.neutral))
        write_atomic(root / apex, format_pts(example.apex))
        rows.append((example.id, example.subject, example.label, neutral, apex))
    write_atomic(root / "planted.txt", format_subset(dataset.planted, dataset.spec.landmark_count))
    manifest = write_atomic(
        root / "manifest.csv", format_manifest(rows, dataset.spec.landmark_count)
    )
    logger.info("Wrote %d examples to %s", len(rows), root)
    return manifest


def exhaustive_best_subset(
    scorer: Callable[[Sequence[int]], float],
    pool: Sequence[int],
    subset_size: int,
) -> tuple[tuple[int, ...], float]:
    """Best-scoring subset of the given size by full enumeration.

    Subsets are visited as ascending index tuples in lexicographic order and
    only a strictly better score replaces the incumbent, so ties go to the
    lexicographically smallest subset.

    Raises:
        InputError: If subset_size exceeds MAX_SUBSET_SIZE, the pool exceeds
            MAX_POOL_SIZE, or the pool is smaller than subset_size.
    """
    if not 1 <= subset_size <= MAX_SUBSET_SIZE:
        raise InputError(f"subset_size must lie in 1..{MAX_SUBSET_SIZE}, got {subset_size}")
    indices = sorted(set(int(k) for k in pool))
    if len(indices) > MAX_POOL_SIZE:
        raise InputError(f"pool of {len(indices)} exceeds the {MAX_POOL_SIZE}-feature limit")
    if len(indices) < subset_size:
        raise InputError(f"pool of {len(indices)} is smaller than subset_size {subset_size}")
    best: tuple[tuple[int, ...], float] | None = None
    for subset in combinations(indices, subset_size):
        accuracy = scorer(list(subset))
        if best is None or accuracy > best[1]:
            best = (subset, accuracy)
    assert best is not None
    return best


@dataclass(frozen=True)
class DualSolution:
    """Exact dual solution of a tiny SVM problem.

    Attributes:
        alpha: Dual variables.
        bias: b in f(x) = sum_k alpha_k y_k K(x_k, x) + b.
        decisions: f evaluated on the training points.
        objective: 1/2 a'Qa - sum(a).
    """

    alpha: FloatArray
    bias: float
    decisions: FloatArray
    objective: float


def _bias_interval(
    margins: FloatArray,
    y: FloatArray,
    at_zero: npt.NDArray[np.bool_],
    at_c: npt.NDArray[np.bool_],
) -> tuple[float, float]:
    # y_k f_k >= 1 where alpha is 0 and <= 1 where alpha is C; margins = (Q a)_k
    lower, upper = -np.inf, np.inf
    for k in range(y.size):
        bound = y[k] * (1.0 - margins[k])
        pushes_up = (at_zero[k] and y[k] > 0) or (at_c[k] and y[k] < 0)
        if at_zero[k] or at_c[k]:
            if pushes_up:
                lower = max(lower, bound)
            else:
                upper = min(upper, bound)
    return lower, upper


def dual_qp_oracle(
    X: Sequence[Sequence[float]] | FloatArray,
    y: Sequence[float] | FloatArray,
    C: float,
    gamma: float,
    tolerance: float = 1e-9,
) -> DualSolution:
    """Solve the RBF soft-margin dual exactly by active-set enumeration.

    Every assignment of the dual variables to {0, free, C} is tried; the
    free part solves the KKT linear system and the candidate is kept when
    it satisfies every bound and complementarity condition. Among the
    feasible candidates the lowest objective wins.

    Args:
        X: At most MAX_ORACLE_POINTS training vectors.
        y: Labels in {-1, +1}, both present.
        C: Box constraint.
        gamma: RBF width.
        tolerance: Feasibility slack.

    Raises:
        InputError: If the problem is too large or the labels are invalid.
    """
    points = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = np.asarray(y, dtype=np.float64).reshape(-1)
    n = points.shape[0]
    if n > MAX_ORACLE_POINTS:
        raise InputError(f"oracle handles at most {MAX_ORACLE_POINTS} points, got {n}")
    if labels.size != n:
        raise DimensionError(f"{n} points but {labels.size} labels")
    if not set(labels.tolist()) == {-1.0, 1.0}:
        raise InputError("labels must be -1 and +1 with both present")
    if not (C > 0 and gamma > 0):
        raise InputError("C and gamma must be positive")

    kernel = np.exp(-gamma * cdist(points, points, "sqeuclidean"))
    Q = np.outer(labels, labels) * kernel

    best: DualSolution | None = None
    for states in product((0, 1, 2), repeat=n):
        state = np.array(states)
        free = state == 1
        at_c = state == 2
        at_zero = state == 0
        alpha = np.where(at_c, C, 0.0)
        bias: float
        if free.any():
            f = np.flatnonzero(free)
            system = np.zeros((f.size + 1, f.size + 1))
            system[: f.size, : f.size] = Q[np.ix_(f, f)]
            system[: f.size, f.size] = labels[f]
            system[f.size, : f.size] = labels[f]
            rhs = np.empty(f.size + 1)
            rhs[: f.size] = 1.0 - Q[np.ix_(f, np.flatnonzero(at_c))].sum(axis=1) * C
            rhs[f.size] = -C * labels[at_c].sum()
            try:
                solution = linalg.solve(system, rhs)
            except linalg.LinAlgError:
                continue
            alpha[f] = solution[: f.size]
            bias = float(solution[f.size])
            if np.any(alpha[f] < -tolerance) or np.any(alpha[f] > C + tolerance):
                continue
        else:
            if abs(float(labels @ alpha)) > tolerance * max(1.0, C):
                continue
            lower, upper = _bias_interval(Q @ alpha, labels, at_zero, at_c)
            if lower > upper + tolerance:
                continue
            if np.isfinite(lower) and np.isfinite(upper):
                bias = 0.5 * (lower + upper)
            elif np.isfinite(lower):
                bias = float(lower)
            elif np.isfinite(upper):
                bias = float(upper)
            else:
                bias = 0.0

        decisions = kernel @ (alpha * labels) + bias
        margins = labels * decisions
        if np.any(margins[at_zero] < 1.0 - tolerance) or np.any(margins[at_c] > 1.0 + tolerance):
            continue
        objective = float(0.5 * alpha @ Q @ alpha - alpha.sum())
        if best is None or objective < best.objective - tolerance:
            best = DualSolution(alpha, bias, decisions, objective)

    if best is None:
        raise InputError("no feasible active set found")
    return best


def hinge_violations(solution: DualSolution, y: Sequence[float] | FloatArray) -> int:
    """Training points with y f(x) < 1 (inside the margin or misclassified)."""
    labels = np.asarray(y, dtype=np.float64).reshape(-1)
    return int(np.sum(labels * solution.decisions < 1.0 - 1e-9))


def random_oracle_problem(
    rng: np.random.Generator,
    points: int = 5,
    dimension: int = 2,
) -> tuple[FloatArray, FloatArray]:
    """Random tiny labeled problem with both classes present."""
    if not 2 <= points <= MAX_ORACLE_POINTS:
        raise InputError(f"points must lie in 2..{MAX_ORACLE_POINTS}, got {points}")
    X = rng.standard_normal((points, dimension))
    y = np.where(rng.random(points) < 0.5, -1.0, 1.0)
    y[0], y[1] = 1.0, -1.0
    return X, y
