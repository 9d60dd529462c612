"""Spatial features from landmark pairs.

For a frame with L landmarks every unordered pair (i, j), i < j, gives two
features: the horizontal difference x_j - x_i and the vertical difference
y_j - y_i. The flat feature index puts all horizontal features first, in
lexicographic pair order, followed by all vertical features:

    flat = pair_rank(i, j)              for the horizontal axis
    flat = C(L, 2) + pair_rank(i, j)    for the vertical axis

For L = 68 this gives 2278 pairs and 4556 features. The feature vector of
an example is the distance vector of its apex frame minus that of its
neutral frame.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from functools import cache

import numpy as np
import numpy.typing as npt

from .errors import DimensionError, FeatureIndexError, ParseError
from .labels import ExpressionLabel
from .landmarks import LandmarkFrame, SequenceExample

FloatArray = npt.NDArray[np.float64]


class Axis(Enum):
    """Direction of a pairwise distance; the value is the subset-file code."""

    HORIZONTAL = "h"
    VERTICAL = "v"

    @property
    def label(self) -> str:
        """Lowercase long name ("horizontal" or "vertical")."""
        return self.name.lower()


class DistanceMode(Enum):
    """How per-frame pairwise distances are taken.

    SIGNED keeps x_j - x_i (direction of motion survives the delta);
    ABSOLUTE uses |x_j - x_i| and exists for experiments.
    """

    SIGNED = "signed"
    ABSOLUTE = "absolute"


def pair_count(landmark_count: int) -> int:
    """Number of unordered landmark pairs, C(L, 2)."""
    return math.comb(landmark_count, 2)


def feature_count(landmark_count: int) -> int:
    """Full feature dimension, 2 * C(L, 2)."""
    return 2 * pair_count(landmark_count)


def pair_rank(i: int, j: int, landmark_count: int) -> int:
    """Lexicographic rank of the pair (i, j) among all pairs with i < j.

    Raises:
        FeatureIndexError: Unless 0 <= i < j < L.

    Example:
        >>> pair_rank(0, 1, 68)
        0
        >>> pair_rank(66, 67, 68)
        2277
    """
    if not 0 <= i < j < landmark_count:
        msg = f"invalid landmark pair ({i}, {j}) for L={landmark_count}; need 0 <= i < j < L"
        raise FeatureIndexError(msg)
    # Pairs starting before row i, then the offset inside row i
    return i * landmark_count - i * (i + 1) // 2 + (j - i - 1)


@cache
def _pair_table(landmark_count: int) -> tuple[npt.NDArray[np.intp], npt.NDArray[np.intp]]:
    rows, cols = np.triu_indices(landmark_count, k=1)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


@dataclass(frozen=True)
class FeatureIndex:
    """One feature: a landmark pair (i < j) and an axis."""

    i: int
    j: int
    axis: Axis

    def flat(self, landmark_count: int) -> int:
        """Flat position of this feature in a full feature vector."""
        rank = pair_rank(self.i, self.j, landmark_count)
        if self.axis is Axis.HORIZONTAL:
            return rank
        return pair_count(landmark_count) + rank

    @classmethod
    def from_flat(cls, flat: int, landmark_count: int) -> FeatureIndex:
        """Decode a flat index.

        Raises:
            FeatureIndexError: If flat is outside 0..2*C(L,2)-1.
        """
        pairs = pair_count(landmark_count)
        if not 0 <= flat < 2 * pairs:
            msg = f"flat index {flat} out of range 0..{2 * pairs - 1} for L={landmark_count}"
            raise FeatureIndexError(msg)
        axis = Axis.HORIZONTAL if flat < pairs else Axis.VERTICAL
        rank = flat % pairs
        rows, cols = _pair_table(landmark_count)
        return cls(int(rows[rank]), int(cols[rank]), axis)

    def describe(self) -> str:
        """Human-readable form, e.g. "landmark 48 ↔ landmark 54, horizontal"."""
        return f"landmark {self.i} ↔ landmark {self.j}, {self.axis.label}"


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Delta-distance values of one example.

    Attributes:
        values: Read-only float64 vector.
        landmark_count: L of the frames the vector came from.
        subset: None for a full vector; otherwise the flat indices the
            values were projected onto, in order.
    """

    values: FloatArray
    landmark_count: int
    subset: tuple[int, ...] | None = field(default=None)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        expected = feature_count(self.landmark_count) if self.subset is None else len(self.subset)
        if values.shape[0] != expected:
            msg = f"feature vector has {values.shape[0]} values, expected {expected}"
            raise DimensionError(msg)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def is_full(self) -> bool:
        return self.subset is None

    def __len__(self) -> int:
        return int(self.values.shape[0])


def distance_vector(frame: LandmarkFrame, mode: DistanceMode = DistanceMode.SIGNED) -> FloatArray:
    """Pairwise horizontal and vertical differences of one frame.

    Args:
        frame: Landmark frame with L points.
        mode: SIGNED for x_j - x_i / y_j - y_i, ABSOLUTE for their magnitudes.

    Returns:
        Vector of length 2 * C(L, 2) in flat-index order.

    Example:
        >>> f = LandmarkFrame.from_pairs([(0, 0), (1, 0), (0, 2)])
        >>> distance_vector(f).tolist()
        [1.0, 0.0, -1.0, 0.0, 2.0, 2.0]
    """
    rows, cols = _pair_table(frame.landmark_count)
    points = frame.points
    diffs = points[cols] - points[rows]
    vector = np.concatenate([diffs[:, 0], diffs[:, 1]])
    if mode is DistanceMode.ABSOLUTE:
        vector = np.abs(vector)
    return vector


def delta_features(
    neutral: LandmarkFrame,
    apex: LandmarkFrame,
    mode: DistanceMode = DistanceMode.SIGNED,
) -> FeatureVector:
    """Full feature vector: distance_vector(apex) - distance_vector(neutral).

    Raises:
        DimensionError: If the frames have different landmark counts.
    """
    if neutral.landmark_count != apex.landmark_count:
        msg = (
            f"landmark count mismatch: neutral has {neutral.landmark_count}, "
            f"apex has {apex.landmark_count}"
        )
        raise DimensionError(msg)
    values = distance_vector(apex, mode) - distance_vector(neutral, mode)
    return FeatureVector(values, neutral.landmark_count)


def _check_subset(flat_indices: Sequence[int], dimension: int) -> list[int]:
    indices = [int(k) for k in flat_indices]
    if len(set(indices)) != len(indices):
        raise FeatureIndexError(f"duplicate feature index in subset {indices}")
    for k in indices:
        if not 0 <= k < dimension:
            raise FeatureIndexError(f"feature index {k} out of range 0..{dimension - 1}")
    return indices


def flat_indices(
    subset: Sequence[FeatureIndex] | Sequence[int],
    landmark_count: int,
) -> list[int]:
    """Flat indices of a subset, in order; plain integers pass through."""
    return [
        index.flat(landmark_count) if isinstance(index, FeatureIndex) else int(index)
        for index in subset
    ]


def project(vector: FeatureVector, subset: Sequence[FeatureIndex]) -> FeatureVector:
    """Pick the subset's entries from a full vector, in subset order.

    Raises:
        DimensionError: If the vector is already projected.
        FeatureIndexError: On duplicate or out-of-range indices.
    """
    if not vector.is_full:
        raise DimensionError("project expects a full feature vector")
    indices = _check_subset(
        flat_indices(subset, vector.landmark_count), feature_count(vector.landmark_count)
    )
    values = vector.values[np.asarray(indices, dtype=np.intp)]
    return FeatureVector(values, vector.landmark_count, tuple(indices))


def l2_normalize(vector: FeatureVector) -> FeatureVector:
    """Scale to unit Euclidean norm; a zero vector is returned unchanged.

    Raises:
        DimensionError: If any entry is NaN or infinite.
    """
    values = normalize_rows(vector.values.reshape(1, -1))[0]
    return FeatureVector(values, vector.landmark_count, vector.subset)


def feature_matrix(
    examples: Sequence[SequenceExample],
    mode: DistanceMode = DistanceMode.SIGNED,
) -> FloatArray:
    """Stack full feature vectors of all examples into an (n, D) matrix.

    Raises:
        DimensionError: If examples have different landmark counts or the
            list is empty.
    """
    if not examples:
        raise DimensionError("no examples")
    landmark_count = examples[0].landmark_count
    rows = []
    for example in examples:
        if example.landmark_count != landmark_count:
            msg = (
                f"example {example.id} has {example.landmark_count} landmarks, "
                f"expected {landmark_count}"
            )
            raise DimensionError(msg)
        rows.append(delta_features(example.neutral, example.apex, mode).values)
    return np.vstack(rows)


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    """Full feature matrix of a labeled dataset.

    Attributes:
        ids: Example ids, in dataset order.
        codes: Expression class codes aligned with the rows.
        matrix: (n, 2 * C(L, 2)) delta-feature matrix.
        landmark_count: L.
    """

    ids: tuple[str, ...]
    codes: npt.NDArray[np.int64]
    matrix: FloatArray
    landmark_count: int

    def __post_init__(self) -> None:
        n = len(self.ids)
        if self.codes.shape != (n,) or self.matrix.shape != (n, feature_count(self.landmark_count)):
            msg = (
                f"dataset shape mismatch: {n} ids, codes {self.codes.shape}, "
                f"matrix {self.matrix.shape}, L={self.landmark_count}"
            )
            raise DimensionError(msg)

    @classmethod
    def from_examples(
        cls,
        examples: Sequence[SequenceExample],
        mode: DistanceMode = DistanceMode.SIGNED,
    ) -> FeatureDataset:
        """Extract features for every example (manifest order is kept)."""
        matrix = feature_matrix(examples, mode)
        codes = np.array([example.label.code for example in examples], dtype=np.int64)
        ids = tuple(example.id for example in examples)
        return cls(ids, codes, matrix, examples[0].landmark_count)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def labels(self) -> list[ExpressionLabel]:
        return [ExpressionLabel.from_code(int(code)) for code in self.codes]

    def take(self, rows: Sequence[int] | npt.NDArray[np.intp]) -> FeatureDataset:
        """Dataset restricted to the given row positions, in that order."""
        positions = np.asarray(rows, dtype=np.intp)
        return FeatureDataset(
            tuple(self.ids[k] for k in positions.tolist()),
            self.codes[positions],
            self.matrix[positions],
            self.landmark_count,
        )

    def normalized(self, flat: Sequence[int]) -> FloatArray:
        """Rows projected onto flat indices and L2-normalized (the pipeline order)."""
        return normalize_rows(project_matrix(self.matrix, flat))


def project_matrix(matrix: FloatArray, flat: Sequence[int]) -> FloatArray:
    """Column projection of a feature matrix onto flat indices (in order)."""
    indices = _check_subset(flat, matrix.shape[1])
    return matrix[:, np.asarray(indices, dtype=np.intp)]


def normalize_rows(matrix: FloatArray) -> FloatArray:
    """L2-normalize every row; all-zero rows stay zero.

    Raises:
        DimensionError: If any entry is NaN or infinite.
    """
    if not np.all(np.isfinite(matrix)):
        raise DimensionError("cannot normalize a vector with non-finite entries")
    norms = np.sqrt(np.einsum("ij,ij->i", matrix, matrix))
    safe = np.where(norms > 0.0, norms, 1.0)
    return matrix / safe[:, np.newaxis]


def write_feature_matrix(
    ids: Sequence[str],
    labels: Sequence[ExpressionLabel],
    matrix: FloatArray,
) -> str:
    """Render the feature-matrix CSV (``id,label,f0..f{D-1}``)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["id", "label", *(f"f{k}" for k in range(matrix.shape[1]))])
    for example_id, label, row in zip(ids, labels, matrix.tolist(), strict=True):
        writer.writerow([example_id, label.value, *(repr(value) for value in row)])
    return buffer.getvalue()


def read_feature_matrix(text: str) -> tuple[list[str], list[ExpressionLabel], FloatArray]:
    """Parse a feature-matrix CSV written by write_feature_matrix.

    Raises:
        ParseError: On a bad header, ragged rows, unknown labels or
            non-numeric cells.
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or header[:2] != ["id", "label"]:
        raise ParseError("feature matrix header must start with id,label", line=1)
    dimension = len(header) - 2
    ids: list[str] = []
    labels: list[ExpressionLabel] = []
    rows: list[list[float]] = []
    for line_no, row in enumerate(reader, 2):
        if len(row) != dimension + 2:
            raise ParseError(f"expected {dimension + 2} columns, got {len(row)}", line=line_no)
        try:
            labels.append(ExpressionLabel.parse(row[1]))
            rows.append([float(cell) for cell in row[2:]])
        except ValueError as exc:
            raise ParseError(str(exc), line=line_no) from None
        ids.append(row[0])
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), dimension)
    return ids, labels, matrix
