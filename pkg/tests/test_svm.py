"""Tests for the SMO solver and the multiclass SVM."""

import math
from pathlib import Path

import numpy as np
import pytest

from greedy_face_features.errors import DimensionError, ModelError
from greedy_face_features.svm import (
    BinarySvmModel,
    SvmConfig,
    SvmModel,
    couple_pairwise,
    format_model,
    gram_matrix,
    kkt_gap,
    load_model,
    parse_model,
    platt_fit,
    predict,
    predict_batch,
    predict_proba,
    predict_proba_batch,
    rbf_kernel,
    save_model,
    train_binary,
    train_multiclass,
)
from greedy_face_features.synth import dual_qp_oracle, random_oracle_problem

EXACT = SvmConfig(C=1.0, gamma=0.5, tolerance=1e-10)


def _blobs(
    rng: np.random.Generator, classes: int, per_class: int, spread: float = 0.05
) -> tuple[np.ndarray, np.ndarray]:
    centers = np.eye(classes)
    X = np.vstack(
        [center + spread * rng.standard_normal((per_class, classes)) for center in centers]
    )
    y = np.repeat(np.arange(classes), per_class)
    return X, y


def test_rbf_kernel_values() -> None:
    """Test the kernel on identical and unit-distance vectors."""
    assert rbf_kernel([0.0, 0.0], [0.0, 0.0], 1.0) == 1.0
    assert math.isclose(rbf_kernel([0.0, 0.0], [1.0, 0.0], 1.0), math.exp(-1.0), rel_tol=1e-12)


def test_rbf_kernel_symmetric_and_bounded() -> None:
    """Test symmetry and the (0, 1] range on random vectors."""
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b = rng.normal(size=4), rng.normal(size=4)
        gamma = float(rng.uniform(0.01, 5.0))
        value = rbf_kernel(a, b, gamma)
        assert value == rbf_kernel(b, a, gamma)
        assert 0.0 < value <= 1.0


def test_rbf_kernel_length_mismatch() -> None:
    """Test that vectors of different lengths are rejected."""
    with pytest.raises(DimensionError):
        rbf_kernel([0.0], [0.0, 1.0], 1.0)


def test_gram_matrix_positive_semidefinite() -> None:
    """Test that the Gram matrix of random points is PSD."""
    rng = np.random.default_rng(1)
    for _ in range(20):
        X = rng.normal(size=(12, 3))
        eigenvalues = np.linalg.eigvalsh(gram_matrix(X, X, 0.7))
        assert eigenvalues.min() >= -1e-10


def test_two_point_problem() -> None:
    """Test that two opposite points give opposite unit-ish decisions and zero bias."""
    X = np.array([[1.0], [-1.0]])
    y = np.array([1, -1])
    model = train_binary(X, y, SvmConfig(C=100.0, gamma=1.0, tolerance=1e-10))
    decisions = model.decision(X)
    assert abs(model.bias) < 1e-9
    assert decisions[0] == pytest.approx(1.0, abs=1e-6)
    assert decisions[1] == pytest.approx(-1.0, abs=1e-6)


def test_smo_matches_dual_oracle() -> None:
    """Test that SMO decisions agree with the exact dual on random tiny problems."""
    rng = np.random.default_rng(2024)
    for _ in range(20):
        points = int(rng.integers(2, 7))
        X, y = random_oracle_problem(rng, points=points, dimension=2)
        model = train_binary(X, y, EXACT)
        oracle = dual_qp_oracle(X, y, C=EXACT.C, gamma=0.5)
        assert np.allclose(model.decision(X), oracle.decisions, atol=1e-4)


def test_smo_matches_oracle_with_large_c() -> None:
    """Test agreement when the box constraint is effectively inactive."""
    rng = np.random.default_rng(7)
    for _ in range(10):
        X, y = random_oracle_problem(rng, points=4, dimension=3)
        config = SvmConfig(C=50.0, gamma=1.0, tolerance=1e-10)
        model = train_binary(X, y, config)
        oracle = dual_qp_oracle(X, y, C=50.0, gamma=1.0)
        assert np.allclose(model.decision(X), oracle.decisions, atol=1e-4)


def test_four_point_fixture_matches_dual_oracle() -> None:
    """Test the symmetric 1-D four-point problem against the exact dual."""
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([-1.0, -1.0, 1.0, 1.0])
    model = train_binary(X, y, EXACT)
    oracle = dual_qp_oracle(X, y, C=1.0, gamma=0.5)
    decisions = model.decision(X)
    assert np.allclose(decisions, oracle.decisions, atol=1e-4)
    assert abs(model.bias) < 1e-6
    assert decisions[0] == pytest.approx(-decisions[3], abs=1e-6)
    assert decisions[1] == pytest.approx(-decisions[2], abs=1e-6)
    assert np.all(np.sign(decisions) == y)


def test_kkt_gap_within_tolerance() -> None:
    """Test that a trained model's recomputed KKT gap respects the tolerance."""
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 3))
    y = np.where(X[:, 0] + 0.3 * rng.normal(size=40) > 0, 1.0, -1.0)
    config = SvmConfig(C=1.0, gamma=0.5, tolerance=1e-3)
    model = train_binary(X, y, config)
    assert model.converged
    assert model.kkt_gap <= config.tolerance
    assert kkt_gap(model, X, y) <= config.tolerance + 1e-9


def test_label_flip_negates_decision() -> None:
    """Test that swapping the two labels negates every decision value."""
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 2))
    y = np.where(X[:, 1] > 0.1, 1.0, -1.0)
    config = SvmConfig(C=1.0, gamma=1.0, tolerance=1e-10)
    queries = rng.normal(size=(15, 2))
    original = train_binary(X, y, config).decision(queries)
    flipped = train_binary(X, -y, config).decision(queries)
    assert np.allclose(original, -flipped, rtol=0.0, atol=1e-9)


def test_duplicated_examples_keep_decision() -> None:
    """Test that duplicating every example leaves the hard-margin decision unchanged."""
    rng = np.random.default_rng(5)
    X = rng.normal(size=(10, 2))
    y = np.where(X[:, 0] > 0, 1.0, -1.0)
    config = SvmConfig(C=1e4, gamma=1.0, tolerance=1e-10)
    queries = rng.normal(size=(10, 2))
    single = train_binary(X, y, config).decision(queries)
    doubled = train_binary(np.vstack([X, X]), np.concatenate([y, y]), config).decision(queries)
    assert np.allclose(single, doubled, atol=1e-6)


def test_train_binary_needs_both_signs() -> None:
    """Test that a one-sided training set is rejected."""
    with pytest.raises(ModelError, match="each sign"):
        train_binary([[0.0], [1.0]], [1, 1], EXACT)
    with pytest.raises(ModelError, match="empty"):
        train_binary(np.zeros((0, 2)), [], EXACT)


def test_config_validation() -> None:
    """Test that invalid hyperparameters are rejected."""
    with pytest.raises(ModelError):
        SvmConfig(C=0.0)
    with pytest.raises(ModelError):
        SvmConfig(gamma=-1.0)


def test_scale_gamma() -> None:
    """Test the scale heuristic and its constant-data fallback."""
    X = np.array([[0.0, 0.0], [2.0, 2.0]])
    assert SvmConfig().resolve_gamma(X) == pytest.approx(0.5)
    assert SvmConfig().resolve_gamma(np.ones((3, 2))) == 1.0


def test_multiclass_trains_one_model_per_pair() -> None:
    """Test that seven classes give 21 pairwise machines in lexicographic order."""
    rng = np.random.default_rng(6)
    X, y = _blobs(rng, 7, 6)
    model = train_multiclass(X, y, SvmConfig())
    assert len(model.pairwise_models) == 21
    assert model.pairs[0] == (0, 1)
    assert model.pairs[-1] == (5, 6)


def test_multiclass_separable_training_accuracy() -> None:
    """Test perfect training accuracy on well-separated blobs."""
    rng = np.random.default_rng(8)
    X, y = _blobs(rng, 7, 10)
    model = train_multiclass(X, y, SvmConfig(C=10.0))
    assert np.array_equal(predict_batch(model, X), y)
    assert predict(model, X[0]) == 0


def test_multiclass_training_is_bit_identical() -> None:
    """Test that training twice on the same input writes the same model text."""
    rng = np.random.default_rng(12)
    X, y = _blobs(rng, 4, 6, spread=0.3)
    config = SvmConfig(calibrate=True)
    first = train_multiclass(X, y, config, class_count=7)
    second = train_multiclass(X, y, config, class_count=7)
    assert format_model(first) == format_model(second)
    assert np.array_equal(predict_proba_batch(first, X), predict_proba_batch(second, X))


def test_multiclass_skips_absent_classes() -> None:
    """Test that codes without examples are left out of the pairs."""
    rng = np.random.default_rng(9)
    X, y = _blobs(rng, 3, 5)
    codes = np.array([0, 3, 6])[y]
    model = train_multiclass(X, codes, SvmConfig(), class_count=7)
    assert model.classes == (0, 3, 6)
    assert model.pairs == ((0, 3), (0, 6), (3, 6))


def test_multiclass_needs_two_classes() -> None:
    """Test that a single class cannot be trained."""
    with pytest.raises(ModelError, match="at least two classes"):
        train_multiclass([[0.0], [1.0]], [2, 2], SvmConfig())


def test_predict_dimension_mismatch() -> None:
    """Test that predicting with the wrong width fails."""
    rng = np.random.default_rng(10)
    X, y = _blobs(rng, 2, 4)
    model = train_multiclass(X, y, SvmConfig())
    with pytest.raises(DimensionError):
        predict(model, [0.0, 0.0, 0.0])


def _constant_model(biases: list[float]) -> SvmModel:
    empty = np.zeros((0, 2))
    machines = tuple(
        BinarySvmModel(support_vectors=empty, dual_coefs=np.zeros(0), bias=b, gamma=1.0, C=1.0)
        for b in biases
    )
    return SvmModel(
        classes=(0, 1, 2),
        pairs=((0, 1), (0, 2), (1, 2)),
        pairwise_models=machines,
        config=SvmConfig(gamma=1.0),
    )


def test_vote_tie_broken_by_margin() -> None:
    """Test that a three-way vote tie goes to the largest summed margin."""
    # 0 beats 1, 2 beats 0, 1 beats 2
    model = _constant_model([0.5, -1.0, 2.0])
    assert predict(model, [0.0, 0.0]) == 1


def test_vote_tie_broken_by_lowest_code() -> None:
    """Test that equal votes and margins go to the lowest class code."""
    model = _constant_model([1.0, -1.0, 1.0])
    assert predict(model, [0.0, 0.0]) == 0


def test_vote_zero_decision_goes_to_second_class() -> None:
    """Test that a decision of exactly zero counts as a win for the pair's second class."""
    # (0, 1) -> 1, (0, 2) -> 2, (1, 2) -> 2
    model = _constant_model([0.0, 0.0, 0.0])
    assert predict(model, [0.0, 0.0]) == 2


def test_platt_fit_orders_probabilities() -> None:
    """Test that larger decisions map to larger positive probabilities."""
    decisions = np.array([-2.0, -1.5, -1.0, -0.2, 0.3, 1.0, 1.4, 2.0])
    y = np.array([-1.0, -1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0])
    a, b = platt_fit(decisions, y)
    assert a < 0
    low = 1.0 / (1.0 + math.exp(a * -2.0 + b))
    high = 1.0 / (1.0 + math.exp(a * 2.0 + b))
    assert low < 0.5 < high


def test_couple_pairwise_consistent_input() -> None:
    """Test that pairwise ratios of a known posterior are recovered."""
    p = np.array([0.5, 0.3, 0.2])
    r = p[:, np.newaxis] / (p[:, np.newaxis] + p[np.newaxis, :])
    coupled = couple_pairwise(r)
    assert coupled.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(coupled, p, atol=2e-2)


def test_predict_proba_sums_to_one() -> None:
    """Test that calibrated posteriors are distributions."""
    rng = np.random.default_rng(11)
    X, y = _blobs(rng, 4, 10, spread=0.3)
    model = train_multiclass(X, y, SvmConfig(calibrate=True))
    posteriors = predict_proba_batch(model, rng.normal(size=(25, 4)))
    assert posteriors.shape == (25, 4)
    assert np.all(posteriors >= 0.0)
    assert np.allclose(posteriors.sum(axis=1), 1.0, atol=1e-9)
    assert predict_proba(model, X[0]).shape == (4,)


def test_predict_proba_requires_calibration() -> None:
    """Test that an uncalibrated model refuses to produce posteriors."""
    rng = np.random.default_rng(12)
    X, y = _blobs(rng, 3, 4)
    model = train_multiclass(X, y, SvmConfig())
    with pytest.raises(ModelError, match="not calibrated"):
        predict_proba(model, X[0])


def test_two_class_boundary_posterior_is_even() -> None:
    """Test that the midpoint of a symmetric two-class problem gets about 0.5 each."""
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    model = train_multiclass(X, [0, 0, 1, 1], SvmConfig(gamma=0.5, calibrate=True))
    posterior = predict_proba(model, [0.0])
    assert posterior == pytest.approx([0.5, 0.5], abs=0.05)


def test_posterior_argmax_agrees_with_vote() -> None:
    """Test that the most probable class matches the voted class on most points."""
    rng = np.random.default_rng(14)
    X, y = _blobs(rng, 3, 30, spread=0.3)
    model = train_multiclass(X, y, SvmConfig(calibrate=True))
    queries, _ = _blobs(rng, 3, 70, spread=0.3)
    voted = predict_batch(model, queries)
    most_probable = np.argmax(predict_proba_batch(model, queries), axis=1)
    assert np.mean(voted == most_probable) >= 0.95


def test_model_save_load_identical_predictions(tmp_path: Path) -> None:
    """Test that a reloaded model gives bit-identical decisions and posteriors."""
    rng = np.random.default_rng(13)
    X, y = _blobs(rng, 3, 8, spread=0.3)
    model = train_multiclass(X, y, SvmConfig(calibrate=True))
    path = tmp_path / "model.txt"
    save_model(model, path)
    loaded = load_model(path)
    queries = rng.normal(size=(20, 3))
    assert np.array_equal(predict_batch(loaded, queries), predict_batch(model, queries))
    assert np.array_equal(predict_proba_batch(loaded, queries), predict_proba_batch(model, queries))
    assert loaded.config == model.config


def test_parse_model_rejects_garbage() -> None:
    """Test that text without the model header is refused."""
    with pytest.raises(ModelError, match="not a model file"):
        parse_model("hello\n")
