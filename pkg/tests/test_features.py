"""Tests for pairwise delta features."""

import math

import numpy as np
import pytest

from greedy_face_features.errors import DimensionError, FeatureIndexError, ParseError
from greedy_face_features.features import (
    Axis,
    DistanceMode,
    FeatureDataset,
    FeatureIndex,
    FeatureVector,
    delta_features,
    distance_vector,
    feature_count,
    l2_normalize,
    pair_count,
    pair_rank,
    project,
    read_feature_matrix,
    write_feature_matrix,
)
from greedy_face_features.labels import ExpressionLabel
from greedy_face_features.landmarks import LandmarkFrame, SequenceExample


def test_pair_rank_examples() -> None:
    """Test pair_rank on the first, last and a small pair."""
    assert pair_rank(0, 1, 68) == 0
    assert pair_rank(66, 67, 68) == 2277
    assert pair_rank(0, 2, 4) == 1
    assert pair_rank(1, 2, 4) == 3


def test_pair_rank_rejects_bad_pairs() -> None:
    """Test that i >= j or out-of-range landmarks are errors."""
    for i, j in [(1, 1), (2, 1), (-1, 3), (0, 68)]:
        with pytest.raises(FeatureIndexError):
            pair_rank(i, j, 68)


def test_feature_dimension_for_68_landmarks() -> None:
    """Test that 68 landmarks give 2278 pairs and 4556 features."""
    assert pair_count(68) == 2278
    assert feature_count(68) == 4556


def test_flat_index_is_bijection() -> None:
    """Test that every flat index decodes and re-encodes to itself for L=68."""
    seen = set()
    for flat in range(feature_count(68)):
        feature = FeatureIndex.from_flat(flat, 68)
        assert feature.i < feature.j
        assert feature.flat(68) == flat
        seen.add(feature)
    assert len(seen) == 4556


def test_flat_index_axis_layout() -> None:
    """Test that horizontal features come before vertical ones."""
    assert FeatureIndex(0, 1, Axis.HORIZONTAL).flat(68) == 0
    assert FeatureIndex(0, 1, Axis.VERTICAL).flat(68) == 2278
    assert FeatureIndex(66, 67, Axis.VERTICAL).flat(68) == 4555


def test_from_flat_out_of_range() -> None:
    """Test that 4556 is out of range for L=68."""
    with pytest.raises(FeatureIndexError, match="4556"):
        FeatureIndex.from_flat(4556, 68)


def test_describe() -> None:
    """Test the human-readable feature name."""
    text = FeatureIndex(48, 54, Axis.HORIZONTAL).describe()
    assert text == "landmark 48 ↔ landmark 54, horizontal"


def test_distance_vector_three_landmarks() -> None:
    """Test the distance vector of a three-point frame."""
    frame = LandmarkFrame.from_pairs([(0, 0), (1, 0), (0, 2)])
    assert distance_vector(frame).tolist() == [1.0, 0.0, -1.0, 0.0, 2.0, 2.0]
    absolute = distance_vector(frame, DistanceMode.ABSOLUTE)
    assert absolute.tolist() == [1.0, 0.0, 1.0, 0.0, 2.0, 2.0]


def test_identical_frames_give_zero_delta() -> None:
    """Test that no motion gives an all-zero feature vector."""
    frame = LandmarkFrame.from_pairs([(3, 4), (5, 9), (1, 1)])
    assert not delta_features(frame, frame).values.any()


def test_mouth_corner_motion() -> None:
    """Test that moving landmark 54 right by 2 changes only pairs that contain it."""
    rng = np.random.default_rng(5)
    neutral = LandmarkFrame(rng.integers(0, 200, size=(68, 2)).astype(float))
    moved = neutral.points.copy()
    moved[54, 0] += 2.0
    delta = delta_features(neutral, LandmarkFrame(moved)).values
    assert delta[FeatureIndex(48, 54, Axis.HORIZONTAL).flat(68)] == 2.0
    assert delta[FeatureIndex(54, 60, Axis.HORIZONTAL).flat(68)] == -2.0
    assert np.count_nonzero(delta) == 67
    assert not delta[pair_count(68) :].any()


def test_delta_is_translation_invariant() -> None:
    """Test that shifting each frame by its own offset leaves features unchanged."""
    rng = np.random.default_rng(42)
    for _ in range(1000):
        neutral = LandmarkFrame(rng.integers(-500, 500, size=(5, 2)).astype(float))
        apex = LandmarkFrame(rng.integers(-500, 500, size=(5, 2)).astype(float))
        nx, ny, ax, ay = (float(v) for v in rng.integers(-1000, 1000, size=4))
        before = delta_features(neutral, apex).values
        after = delta_features(neutral.translated(nx, ny), apex.translated(ax, ay)).values
        assert np.array_equal(before, after)


def test_distance_sign_convention() -> None:
    """Test that every entry is the later landmark minus the earlier one."""
    rng = np.random.default_rng(43)
    for _ in range(1000):
        landmark_count = int(rng.integers(2, 8))
        points = rng.integers(-500, 500, size=(landmark_count, 2)).astype(float)
        values = distance_vector(LandmarkFrame(points))
        assert values.shape == (feature_count(landmark_count),)
        for i in range(landmark_count):
            for j in range(i + 1, landmark_count):
                dx = values[FeatureIndex(i, j, Axis.HORIZONTAL).flat(landmark_count)]
                dy = values[FeatureIndex(i, j, Axis.VERTICAL).flat(landmark_count)]
                assert (dx, dy) == (points[j, 0] - points[i, 0], points[j, 1] - points[i, 1])
                assert (-dx, -dy) == (points[i, 0] - points[j, 0], points[i, 1] - points[j, 1])
        with pytest.raises(FeatureIndexError):
            FeatureIndex(0, 0, Axis.HORIZONTAL).flat(landmark_count)
        decoded = [FeatureIndex.from_flat(k, landmark_count) for k in range(values.size)]
        assert all(f.i < f.j for f in decoded)


def test_delta_rejects_mismatched_frames() -> None:
    """Test that frames with different L cannot be compared."""
    a = LandmarkFrame(np.zeros((3, 2)))
    b = LandmarkFrame(np.zeros((4, 2)))
    with pytest.raises(DimensionError, match="mismatch"):
        delta_features(a, b)


def test_project_keeps_subset_order() -> None:
    """Test that projection picks entries in subset order."""
    vector = FeatureVector(np.array([10.0, 20.0, 30.0, 40.0, 50.0, 60.0]), 3)
    subset = [FeatureIndex.from_flat(4, 3), FeatureIndex.from_flat(0, 3)]
    projected = project(vector, subset)
    assert projected.values.tolist() == [50.0, 10.0]
    assert projected.subset == (4, 0)
    assert project(vector, []).values.shape == (0,)


def test_project_rejects_duplicates() -> None:
    """Test that a subset may not repeat a feature."""
    vector = FeatureVector(np.arange(6.0), 3)
    feature = FeatureIndex(0, 1, Axis.VERTICAL)
    with pytest.raises(FeatureIndexError, match="duplicate"):
        project(vector, [feature, feature])


def test_l2_normalize_examples() -> None:
    """Test normalization of a regular and an all-zero vector."""
    normalized = l2_normalize(FeatureVector(np.array([3.0, 4.0]), 3, (0, 1)))
    assert normalized.values.tolist() == [0.6, 0.8]
    zero = l2_normalize(FeatureVector(np.zeros(2), 3, (0, 1)))
    assert zero.values.tolist() == [0.0, 0.0]


def test_l2_normalize_unit_norm() -> None:
    """Test that random non-zero vectors come out with unit norm."""
    rng = np.random.default_rng(3)
    for _ in range(100):
        vector = FeatureVector(rng.normal(size=6) * 1e3, 3)
        norm = float(np.linalg.norm(l2_normalize(vector).values))
        assert math.isclose(norm, 1.0, abs_tol=1e-12)


def test_l2_normalize_rejects_nan() -> None:
    """Test that non-finite values cannot be normalized."""
    vector = FeatureVector(np.array([1.0, np.inf]), 3, (0, 1))
    with pytest.raises(DimensionError):
        l2_normalize(vector)


def _example(example_id: str, label: ExpressionLabel, shift: float) -> SequenceExample:
    neutral = LandmarkFrame.from_pairs([(0, 0), (10, 0), (0, 10)])
    apex = LandmarkFrame.from_pairs([(0, 0), (10 + shift, 0), (0, 10)])
    return SequenceExample(example_id, "S1", label, neutral, apex)


def test_feature_dataset_from_examples() -> None:
    """Test that the dataset keeps order, codes and the delta rows."""
    examples = [
        _example("a", ExpressionLabel.SURPRISE, 1.0),
        _example("b", ExpressionLabel.ANGER, -2.0),
    ]
    dataset = FeatureDataset.from_examples(examples)
    assert dataset.ids == ("a", "b")
    assert dataset.codes.tolist() == [6, 0]
    assert dataset.dimension == 6
    assert dataset.matrix[0].tolist() == [1.0, 0.0, -1.0, 0.0, 0.0, 0.0]
    taken = dataset.take([1])
    assert taken.ids == ("b",)
    assert taken.labels == [ExpressionLabel.ANGER]
    assert dataset.normalized([0]).tolist() == [[1.0], [-1.0]]


def test_feature_matrix_csv_round_trip() -> None:
    """Test that the feature-matrix CSV keeps ids, labels and values."""
    rng = np.random.default_rng(9)
    matrix = rng.normal(size=(3, 6))
    labels = [ExpressionLabel.FEAR, ExpressionLabel.DISGUST, ExpressionLabel.FEAR]
    text = write_feature_matrix(["x", "y", "z"], labels, matrix)
    assert text.splitlines()[0] == "id,label,f0,f1,f2,f3,f4,f5"
    ids, parsed_labels, parsed = read_feature_matrix(text)
    assert ids == ["x", "y", "z"]
    assert parsed_labels == labels
    assert np.array_equal(parsed, matrix)


def test_feature_matrix_csv_bad_label() -> None:
    """Test that an unknown label in the feature CSV is a parse error."""
    with pytest.raises(ParseError, match="line 2"):
        read_feature_matrix("id,label,f0\nx,joy,1.0\n")
