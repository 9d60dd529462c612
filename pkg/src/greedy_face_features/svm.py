"""Kernel SVM trained from scratch.

The binary solver is SMO on the soft-margin dual

    min  1/2 a'Qa - e'a   s.t.  y'a = 0,  0 <= a_k <= C,   Q_kl = y_k y_l K(x_k, x_l)

choosing at every step the maximal violating pair of the KKT conditions.
Multiclass problems are handled one-against-one: one binary machine per
class pair, majority vote at prediction time. Posteriors come from a Platt
sigmoid per pair combined by pairwise coupling.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Literal

import numpy as np
import numpy.typing as npt
from scipy.special import expit

from .errors import DimensionError, ModelError
from .output import write_atomic

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

GAMMA_SCALE: Literal["scale"] = "scale"
MODEL_FORMAT = "svm-model 1"

# Pair probabilities are kept away from 0 and 1 before coupling
_MIN_PAIR_PROBABILITY = 1e-7


@dataclass(frozen=True)
class SvmConfig:
    """Hyperparameters of the SVM.

    Attributes:
        C: Box constraint of the dual variables.
        gamma: RBF width, or "scale" for 1 / (D * mean per-coordinate variance)
            of the training data.
        tolerance: Stopping tolerance on the maximal KKT violation.
        max_passes: Safeguard on solver iterations, in multiples of the
            training set size. Hitting it logs a warning.
        calibrate: Fit Platt sigmoids so predict_proba is available.
    """

    C: float = 1.0
    gamma: float | Literal["scale"] = GAMMA_SCALE
    tolerance: float = 1e-3
    max_passes: int = 1000
    calibrate: bool = False

    def __post_init__(self) -> None:
        if not self.C > 0:
            raise ModelError(f"C must be positive, got {self.C}")
        if self.gamma != GAMMA_SCALE and not (
            isinstance(self.gamma, int | float) and self.gamma > 0
        ):
            raise ModelError(f"gamma must be positive or 'scale', got {self.gamma!r}")
        if not self.tolerance > 0:
            raise ModelError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_passes < 1:
            raise ModelError(f"max_passes must be at least 1, got {self.max_passes}")

    def resolve_gamma(self, X: FloatArray) -> float:
        """Numeric gamma for training data X."""
        if self.gamma != GAMMA_SCALE:
            return float(self.gamma)
        variance = float(np.mean(np.var(X, axis=0))) if X.size else 0.0
        if variance <= 0.0:
            # Constant data: any width gives the same (constant) kernel
            return 1.0
        return 1.0 / (X.shape[1] * variance)


def rbf_kernel(
    a: Sequence[float] | FloatArray, b: Sequence[float] | FloatArray, gamma: float
) -> float:
    """RBF similarity exp(-gamma * ||a - b||^2).

    Raises:
        DimensionError: If the vectors have different lengths.

    Example:
        >>> round(rbf_kernel([0.0], [1.0], 1.0), 6)
        0.367879
    """
    va = np.asarray(a, dtype=np.float64).reshape(-1)
    vb = np.asarray(b, dtype=np.float64).reshape(-1)
    if va.shape != vb.shape:
        raise DimensionError(f"kernel inputs differ in length: {va.shape[0]} vs {vb.shape[0]}")
    diff = va - vb
    return math.exp(-gamma * float(diff @ diff))


def gram_matrix(X: FloatArray, Y: FloatArray, gamma: float) -> FloatArray:
    """RBF kernel between every row of X and every row of Y."""
    sq_x = np.einsum("ij,ij->i", X, X)
    sq_y = np.einsum("ij,ij->i", Y, Y)
    distances = sq_x[:, np.newaxis] + sq_y[np.newaxis, :] - 2.0 * (X @ Y.T)
    np.maximum(distances, 0.0, out=distances)
    return np.exp(-gamma * distances)


@dataclass(frozen=True, eq=False)
class BinarySvmModel:
    """Trained two-class machine; decision(x) = sum(dual_coefs * K(sv, x)) + bias.

    Positive decision values mean the +1 class.
    """

    support_vectors: FloatArray
    dual_coefs: FloatArray
    bias: float
    gamma: float
    C: float
    kkt_gap: float = 0.0
    converged: bool = True

    @property
    def dimension(self) -> int:
        return int(self.support_vectors.shape[1])

    def decision(self, X: FloatArray) -> FloatArray:
        """Decision values for the rows of X (or a single vector)."""
        rows = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if rows.shape[1] != self.dimension:
            msg = f"input has {rows.shape[1]} features, model expects {self.dimension}"
            raise DimensionError(msg)
        if self.support_vectors.shape[0] == 0:
            return np.full(rows.shape[0], self.bias)
        return gram_matrix(rows, self.support_vectors, self.gamma) @ self.dual_coefs + self.bias


@dataclass(frozen=True)
class SmoResult:
    alpha: FloatArray
    bias: float
    kkt_gap: float
    iterations: int
    converged: bool


def _violation_sets(alpha: FloatArray, y: FloatArray, C: float) -> tuple[
    npt.NDArray[np.bool_], npt.NDArray[np.bool_]
]:
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    return up, low


def _kkt_gap(score: FloatArray, up: npt.NDArray[np.bool_], low: npt.NDArray[np.bool_]) -> float:
    if not up.any() or not low.any():
        return 0.0
    return float(np.max(score[up]) - np.min(score[low]))


def _bias(alpha: FloatArray, y: FloatArray, gradient: FloatArray, C: float) -> float:
    """Bias from the final gradient: average over free vectors, else interval midpoint."""
    y_grad = y * gradient
    at_upper = alpha >= C
    at_lower = alpha <= 0.0
    free = ~(at_upper | at_lower)
    if free.any():
        rho = float(np.mean(y_grad[free]))
        return -rho
    # Bounded vectors only bracket rho
    upper_side = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lower_side = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = float(np.min(y_grad[upper_side])) if upper_side.any() else math.inf
    lb = float(np.max(y_grad[lower_side])) if lower_side.any() else -math.inf
    if math.isinf(ub) and math.isinf(lb):
        rho = 0.0
    elif math.isinf(ub):
        rho = lb
    elif math.isinf(lb):
        rho = ub
    else:
        rho = (ub + lb) / 2.0
    return -rho


def smo_solve(
    K: FloatArray, y: FloatArray, C: float, tolerance: float, max_passes: int
) -> SmoResult:
    """Solve the binary dual for a precomputed kernel matrix.

    Working-set selection takes the pair (i, j) with i maximizing and j
    minimizing -y_t * grad_t over the feasible up/low sets; the first index
    wins ties, so the result is deterministic for a given input order.

    Args:
        K: (n, n) kernel matrix.
        y: Labels in {-1, +1}.
        C: Box constraint.
        tolerance: Stop once the maximal violation is at most this.
        max_passes: Iteration limit in multiples of n.

    Returns:
        SmoResult with dual variables, bias and the final KKT gap.
    """
    n = y.shape[0]
    Q = (y[:, np.newaxis] * y[np.newaxis, :]) * K
    alpha = np.zeros(n)
    gradient = -np.ones(n)
    max_iterations = max_passes * max(n, 1)

    converged = False
    iterations = 0
    gap = math.inf
    while iterations < max_iterations:
        up, low = _violation_sets(alpha, y, C)
        score = -y * gradient
        if not up.any() or not low.any():
            gap = 0.0
            converged = True
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        gap = float(score[i] - score[j])
        if gap <= tolerance:
            converged = True
            break

        curvature = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if curvature <= 0.0:
            curvature = 1e-12
        # Room left along the direction (+y_i at i, -y_j at j)
        room_i = C - alpha[i] if y[i] > 0 else alpha[i]
        room_j = alpha[j] if y[j] > 0 else C - alpha[j]
        step = min(gap / curvature, room_i, room_j)

        delta_i = y[i] * step
        delta_j = -y[j] * step
        alpha[i] += delta_i
        alpha[j] += delta_j
        # Land exactly on the bound that limited the step
        if step == room_i:
            alpha[i] = C if y[i] > 0 else 0.0
        if step == room_j:
            alpha[j] = 0.0 if y[j] > 0 else C
        gradient += Q[:, i] * delta_i + Q[:, j] * delta_j
        iterations += 1

    if not converged:
        up, low = _violation_sets(alpha, y, C)
        gap = _kkt_gap(-y * gradient, up, low)
        logger.warning(
            "SMO stopped after %d iterations (max_passes=%d) with KKT gap %.3g > tolerance %.3g",
            iterations,
            max_passes,
            gap,
            tolerance,
        )
    return SmoResult(alpha, _bias(alpha, y, gradient, C), gap, iterations, converged)


def _binary_labels(y: Sequence[int] | npt.NDArray[np.generic]) -> FloatArray:
    labels = np.asarray(y, dtype=np.float64).reshape(-1)
    if labels.size == 0:
        raise ModelError("cannot train on an empty set")
    if not np.all((labels == 1.0) | (labels == -1.0)):
        raise ModelError("binary labels must be -1 or +1")
    if not (np.any(labels > 0) and np.any(labels < 0)):
        raise ModelError("binary training needs at least one example of each sign")
    return labels


def _as_matrix(X: Sequence[Sequence[float]] | FloatArray) -> FloatArray:
    matrix = np.asarray(X, dtype=np.float64)
    if matrix.ndim != 2:
        raise DimensionError(f"training data must be a 2-D matrix, got shape {matrix.shape}")
    if matrix.shape[0] == 0:
        raise ModelError("cannot train on an empty set")
    return matrix


def _fit_binary(
    X: FloatArray, y: FloatArray, K: FloatArray, config: SvmConfig, gamma: float
) -> tuple[BinarySvmModel, FloatArray]:
    """Train on a precomputed kernel; also return decision values on the training rows."""
    result = smo_solve(K, y, config.C, config.tolerance, config.max_passes)
    coefs = result.alpha * y
    support = result.alpha > 0.0
    model = BinarySvmModel(
        support_vectors=X[support].copy(),
        dual_coefs=coefs[support],
        bias=result.bias,
        gamma=gamma,
        C=config.C,
        kkt_gap=result.kkt_gap,
        converged=result.converged,
    )
    return model, K @ coefs + result.bias


def train_binary(
    X: Sequence[Sequence[float]] | FloatArray,
    y: Sequence[int] | npt.NDArray[np.generic],
    config: SvmConfig,
) -> BinarySvmModel:
    """Train a two-class RBF SVM.

    Args:
        X: (n, d) training vectors.
        y: Labels in {-1, +1}.
        config: Hyperparameters; a "scale" gamma is resolved on X.

    Raises:
        ModelError: On empty input or when only one sign is present.
        DimensionError: If X is not a matrix or y has the wrong length.
    """
    matrix = _as_matrix(X)
    labels = _binary_labels(y)
    if labels.shape[0] != matrix.shape[0]:
        raise DimensionError(f"{matrix.shape[0]} vectors but {labels.shape[0]} labels")
    gamma = config.resolve_gamma(matrix)
    model, _ = _fit_binary(matrix, labels, gram_matrix(matrix, matrix, gamma), config, gamma)
    return model


def kkt_gap(model: BinarySvmModel, X: FloatArray, y: FloatArray) -> float:
    """Recompute the maximal KKT violation of a trained model on its training set.

    The dual variables are recovered from the stored coefficients by
    matching support vectors to training rows.
    """
    matrix = _as_matrix(X)
    labels = _binary_labels(y)
    alpha = np.zeros(labels.shape[0])
    for coef, vector in zip(model.dual_coefs, model.support_vectors, strict=True):
        matches = np.flatnonzero(np.all(matrix == vector, axis=1) & (alpha == 0.0))
        if matches.size == 0:
            raise ModelError("support vector not found in the training set")
        alpha[matches[0]] = abs(coef)
    K = gram_matrix(matrix, matrix, model.gamma)
    gradient = labels * (K @ (alpha * labels)) - 1.0
    up, low = _violation_sets(alpha, labels, model.C)
    return _kkt_gap(-labels * gradient, up, low)


def platt_fit(
    decisions: FloatArray, y: FloatArray, max_iterations: int = 100
) -> tuple[float, float]:
    """Fit P(+1 | f) = 1 / (1 + exp(A f + B)) by Newton's method.

    Targets are Platt's regularized labels (N+ + 1)/(N+ + 2) and
    1/(N- + 2); each Newton step uses a backtracking line search.

    Returns:
        The sigmoid parameters (A, B).
    """
    f = np.asarray(decisions, dtype=np.float64)
    positives = float(np.sum(y > 0))
    negatives = float(y.shape[0] - positives)
    target = np.where(y > 0, (positives + 1.0) / (positives + 2.0), 1.0 / (negatives + 2.0))

    def objective(a: float, b: float) -> float:
        z = f * a + b
        # Negative log-likelihood written to avoid overflow for either sign of z
        linear = np.where(z >= 0, target * z, (target - 1.0) * z)
        return float(np.sum(linear + np.logaddexp(0.0, -np.abs(z))))

    a = 0.0
    b = math.log((negatives + 1.0) / (positives + 1.0))
    value = objective(a, b)
    sigma = 1e-12
    for _ in range(max_iterations):
        z = f * a + b
        p = expit(-z)
        q = 1.0 - p
        d2 = p * q
        h11 = sigma + float(np.sum(f * f * d2))
        h22 = sigma + float(np.sum(d2))
        h21 = float(np.sum(f * d2))
        d1 = target - p
        g1 = float(np.sum(f * d1))
        g2 = float(np.sum(d1))
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        step_a = -(h22 * g1 - h21 * g2) / det
        step_b = -(-h21 * g1 + h11 * g2) / det
        slope = g1 * step_a + g2 * step_b
        step = 1.0
        while step >= 1e-10:
            new_a, new_b = a + step * step_a, b + step * step_b
            new_value = objective(new_a, new_b)
            if new_value < value + 1e-4 * step * slope:
                a, b, value = new_a, new_b, new_value
                break
            step /= 2.0
        else:
            logger.debug("Platt line search failed; keeping A=%.6g B=%.6g", a, b)
            break
    return a, b


def couple_pairwise(pair_probabilities: FloatArray, max_iterations: int = 1000) -> FloatArray:
    """Combine pairwise class probabilities into one posterior vector.

    Args:
        pair_probabilities: (k, k) matrix r with r[i, j] = P(class i | i or j)
            and r[j, i] = 1 - r[i, j]; the diagonal is ignored.

    Returns:
        Probability vector of length k summing to 1.
    """
    r = np.array(pair_probabilities, dtype=np.float64)
    k = r.shape[0]
    if k == 2:
        return np.array([r[0, 1], r[1, 0]])
    np.fill_diagonal(r, 0.0)
    Q = -r.T * r
    np.fill_diagonal(Q, np.sum(np.square(r), axis=0))
    p = np.full(k, 1.0 / k)
    for _ in range(max(max_iterations, k)):
        qp = Q @ p
        pqp = float(p @ qp)
        if float(np.max(np.abs(qp - pqp))) < 0.005 / k:
            break
        for t in range(k):
            diff = (-qp[t] + pqp) / Q[t, t]
            p[t] += diff
            pqp = (pqp + diff * (diff * Q[t, t] + 2.0 * qp[t])) / (1.0 + diff) ** 2
            qp = (qp + diff * Q[t, :]) / (1.0 + diff)
            p /= 1.0 + diff
    p = np.clip(p, 0.0, None)
    return p / p.sum()


@dataclass(frozen=True, eq=False)
class SvmModel:
    """One-against-one multiclass machine.

    Attributes:
        classes: Class codes present in training, ascending.
        pairs: (a, b) code pairs with a < b, in lexicographic order. In each
            pair's binary machine, +1 means class a.
        pairwise_models: One binary machine per pair, aligned with pairs.
        config: Hyperparameters used (gamma already resolved).
        calibration: Per-pair Platt parameters (A, B), or None.
    """

    classes: tuple[int, ...]
    pairs: tuple[tuple[int, int], ...]
    pairwise_models: tuple[BinarySvmModel, ...]
    config: SvmConfig
    calibration: tuple[tuple[float, float], ...] | None = field(default=None)

    @property
    def class_count(self) -> int:
        return len(self.classes)

    @property
    def dimension(self) -> int:
        return self.pairwise_models[0].dimension


def train_multiclass(
    X: Sequence[Sequence[float]] | FloatArray,
    y: Sequence[int] | npt.NDArray[np.integer],
    config: SvmConfig,
    class_count: int | None = None,
) -> SvmModel:
    """Train a one-against-one multiclass SVM.

    Each pair's machine sees only that pair's examples, in input order.
    Classes with no examples are skipped; they never appear in pairs.

    Args:
        X: (n, d) training vectors.
        y: Class codes.
        config: Hyperparameters; a "scale" gamma is resolved once on all of X.
        class_count: If given, codes must lie in 0..class_count-1.

    Raises:
        ModelError: If fewer than two classes are present or a code is out
            of range.
    """
    matrix = _as_matrix(X)
    codes = np.asarray(y, dtype=np.int64).reshape(-1)
    if codes.shape[0] != matrix.shape[0]:
        raise DimensionError(f"{matrix.shape[0]} vectors but {codes.shape[0]} labels")
    if class_count is not None and (codes.min() < 0 or codes.max() >= class_count):
        raise ModelError(f"class codes must lie in 0..{class_count - 1}")
    classes = tuple(int(c) for c in np.unique(codes))
    if len(classes) < 2:
        raise ModelError(f"multiclass training needs at least two classes, got {list(classes)}")

    gamma = config.resolve_gamma(matrix)
    resolved = SvmConfig(config.C, gamma, config.tolerance, config.max_passes, config.calibrate)
    K_full = gram_matrix(matrix, matrix, gamma)

    pairs = tuple(combinations(classes, 2))
    models: list[BinarySvmModel] = []
    calibration: list[tuple[float, float]] = []
    for a, b in pairs:
        members = np.flatnonzero((codes == a) | (codes == b))
        labels = np.where(codes[members] == a, 1.0, -1.0)
        K = K_full[np.ix_(members, members)]
        model, training_decisions = _fit_binary(matrix[members], labels, K, resolved, gamma)
        models.append(model)
        if config.calibrate:
            calibration.append(platt_fit(training_decisions, labels))
        logger.debug(
            "pair (%d, %d): %d examples, %d support vectors, gap %.3g",
            a,
            b,
            members.size,
            model.dual_coefs.size,
            model.kkt_gap,
        )

    return SvmModel(
        classes=classes,
        pairs=pairs,
        pairwise_models=tuple(models),
        config=resolved,
        calibration=tuple(calibration) if config.calibrate else None,
    )


def decision_function(model: SvmModel, X: Sequence[Sequence[float]] | FloatArray) -> FloatArray:
    """Pairwise decision values, shape (n, number of pairs), in pair order.

    Raises:
        DimensionError: If the input width differs from the training width.
    """
    rows = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if rows.shape[1] != model.dimension:
        msg = f"input has {rows.shape[1]} features, model expects {model.dimension}"
        raise DimensionError(msg)
    return np.column_stack([pair.decision(rows) for pair in model.pairwise_models])


def _vote(model: SvmModel, decisions: FloatArray) -> int:
    """Winning class for one row of pairwise decisions.

    Pair (a, b) goes to a only when its decision is strictly positive; a
    decision of exactly 0 is a vote for b.
    """
    votes = dict.fromkeys(model.classes, 0)
    margins = dict.fromkeys(model.classes, 0.0)
    for (a, b), value in zip(model.pairs, decisions.tolist(), strict=True):
        winner = a if value > 0 else b
        votes[winner] += 1
        margins[winner] += abs(value)
    # Most votes, then larger summed margin of won contests, then lowest code
    return min(model.classes, key=lambda c: (-votes[c], -margins[c], c))


def predict_batch(model: SvmModel, X: Sequence[Sequence[float]] | FloatArray) -> IntArray:
    """Predicted class codes for every row of X."""
    decisions = decision_function(model, X)
    return np.array([_vote(model, row) for row in decisions], dtype=np.int64)


def predict(model: SvmModel, x: Sequence[float] | FloatArray) -> int:
    """Predict one vector's class by majority vote over the pairwise machines.

    Ties in votes go to the class with the larger sum of absolute decision
    values over the contests it won; remaining ties go to the lowest code.
    """
    vector = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return int(predict_batch(model, vector)[0])


def predict_proba_batch(model: SvmModel, X: Sequence[Sequence[float]] | FloatArray) -> FloatArray:
    """Posterior matrix (n, class_count); columns follow model.classes.

    Raises:
        ModelError: If the model was trained without calibration.
    """
    if model.calibration is None:
        raise ModelError("model is not calibrated; train with calibrate=True")
    decisions = decision_function(model, X)
    index = {code: position for position, code in enumerate(model.classes)}
    k = model.class_count
    posteriors = np.empty((decisions.shape[0], k))
    for row_number, row in enumerate(decisions):
        r = np.zeros((k, k))
        for (a, b), (sig_a, sig_b), value in zip(model.pairs, model.calibration, row, strict=True):
            probability = float(expit(-(sig_a * value + sig_b)))
            probability = min(max(probability, _MIN_PAIR_PROBABILITY), 1.0 - _MIN_PAIR_PROBABILITY)
            r[index[a], index[b]] = probability
            r[index[b], index[a]] = 1.0 - probability
        posteriors[row_number] = couple_pairwise(r)
    return posteriors


def predict_proba(model: SvmModel, x: Sequence[float] | FloatArray) -> FloatArray:
    """Posterior probabilities of one vector over model.classes."""
    vector = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return predict_proba_batch(model, vector)[0]


def format_model(model: SvmModel) -> str:
    """Serialize a model in the text persistence format.

    The format is line based, ``key value...`` with space-separated values
    and floats written with repr (exact round trip)::

        svm-model 1
        classes 0 1 2
        C 1.0
        gamma 0.5
        tolerance 0.001
        max_passes 1000
        calibrated 1
        dimension 4
        pair 0 1 3            <- class a, class b, support vector count
        bias -0.12
        kkt_gap 0.0009
        converged 1
        platt -2.1 0.03       <- only when calibrated
        sv 0.5 1.0 2.0 ...    <- dual coefficient, then the vector
        ...
    """
    config = model.config
    lines = [
        MODEL_FORMAT,
        "classes " + " ".join(str(c) for c in model.classes),
        f"C {float(config.C)!r}",
        f"gamma {float(config.gamma)!r}",
        f"tolerance {float(config.tolerance)!r}",
        f"max_passes {config.max_passes}",
        f"calibrated {int(model.calibration is not None)}",
        f"dimension {model.dimension}",
    ]
    for number, ((a, b), pair) in enumerate(zip(model.pairs, model.pairwise_models, strict=True)):
        lines.append(f"pair {a} {b} {pair.dual_coefs.size}")
        lines.append(f"bias {pair.bias!r}")
        lines.append(f"kkt_gap {pair.kkt_gap!r}")
        lines.append(f"converged {int(pair.converged)}")
        if model.calibration is not None:
            sig_a, sig_b = model.calibration[number]
            lines.append(f"platt {sig_a!r} {sig_b!r}")
        rows = zip(pair.dual_coefs.tolist(), pair.support_vectors.tolist(), strict=True)
        for coef, vector in rows:
            lines.append("sv " + " ".join(repr(v) for v in (coef, *vector)))
    return "\n".join(lines) + "\n"


class _Reader:
    """Line cursor used by parse_model."""

    def __init__(self, text: str) -> None:
        self.lines = [line.split() for line in text.splitlines() if line.strip()]
        self.position = 0

    def take(self, key: str, count: int | None = None) -> list[str]:
        if self.position >= len(self.lines):
            raise ModelError(f"model file ended before {key!r}")
        tokens = self.lines[self.position]
        where = f"model record {self.position + 2}"
        if tokens[0] != key:
            raise ModelError(f"{where}: expected {key!r}, got {tokens[0]!r}")
        if count is not None and len(tokens) - 1 != count:
            raise ModelError(f"{where}: {key!r} needs {count} values")
        self.position += 1
        return tokens[1:]


def parse_model(text: str) -> SvmModel:
    """Parse text written by format_model.

    Raises:
        ModelError: If the text is not a valid model.
    """
    if not text.startswith(MODEL_FORMAT):
        raise ModelError(f"not a model file: expected header {MODEL_FORMAT!r}")
    reader = _Reader(text[len(MODEL_FORMAT) :])
    try:
        classes = tuple(int(c) for c in reader.take("classes"))
        c_value = float(reader.take("C", 1)[0])
        gamma = float(reader.take("gamma", 1)[0])
        tolerance = float(reader.take("tolerance", 1)[0])
        max_passes = int(reader.take("max_passes", 1)[0])
        calibrated = reader.take("calibrated", 1)[0] == "1"
        dimension = int(reader.take("dimension", 1)[0])
        config = SvmConfig(c_value, gamma, tolerance, max_passes, calibrated)

        pairs: list[tuple[int, int]] = []
        models: list[BinarySvmModel] = []
        calibration: list[tuple[float, float]] = []
        for expected in combinations(classes, 2):
            a, b, count = (int(v) for v in reader.take("pair", 3))
            if (a, b) != expected:
                raise ModelError(f"expected pair {expected}, found {(a, b)}")
            bias = float(reader.take("bias", 1)[0])
            gap = float(reader.take("kkt_gap", 1)[0])
            converged = reader.take("converged", 1)[0] == "1"
            if calibrated:
                sig_a, sig_b = (float(v) for v in reader.take("platt", 2))
                calibration.append((sig_a, sig_b))
            rows = [[float(v) for v in reader.take("sv", dimension + 1)] for _ in range(count)]
            table = np.array(rows, dtype=np.float64).reshape(count, dimension + 1)
            pairs.append((a, b))
            models.append(
                BinarySvmModel(
                    support_vectors=table[:, 1:].copy(),
                    dual_coefs=table[:, 0].copy(),
                    bias=bias,
                    gamma=gamma,
                    C=c_value,
                    kkt_gap=gap,
                    converged=converged,
                )
            )
    except ValueError as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"malformed model file: {exc}") from exc
    if reader.position != len(reader.lines):
        raise ModelError("unexpected trailing content in model file")
    return SvmModel(
        classes=classes,
        pairs=tuple(pairs),
        pairwise_models=tuple(models),
        config=config,
        calibration=tuple(calibration) if calibrated else None,
    )


def save_model(model: SvmModel, path: Path) -> None:
    """Write a model file atomically."""
    write_atomic(path, format_model(model))


def load_model(path: Path) -> SvmModel:
    """Read a model file written by save_model."""
    return parse_model(path.read_text(encoding="utf-8"))
