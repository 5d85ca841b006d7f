"""
Per-example first-order and proximal oracles over a fixed design matrix.

Every oracle evaluates ℓᵢ(w), ∇ℓᵢ(w) and an (exact or one-Newton-step) prox of ηℓᵢ
for a single example, plus vectorized batch versions used for full passes.
Generalized linear losses also expose the scalar (or C-vector) sᵢ with
∇ℓᵢ(w) = xᵢ ⊗ sᵢ, which is all a compact gradient table has to store.
"""

from abc import ABC, abstractmethod
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit, log_softmax, logsumexp, softmax

from .errors import CapabilityError, DataError, ParameterError
from .models import Dataset

# (value, gradient, glm scalar or None)
Evaluation = Tuple[float, np.ndarray, Optional[np.ndarray]]


class LossOracle(ABC):
    """Losses ℓ₁ … ℓₙ of a linear model; parameters are flat vectors of length `dim`."""

    has_glm = True
    has_prox = True

    def __init__(self, data: Dataset):
        self.features = data.features
        self.labels = data.labels
        self.n = data.n
        self.d = data.d

    @property
    def dim(self) -> int:
        return self.d

    @abstractmethod
    def evaluate(self, i: int, w: np.ndarray) -> Evaluation:
        """One oracle call: loss, gradient and GLM scalar of example i at w."""

    @abstractmethod
    def values(self, w: np.ndarray, indices: Optional[np.ndarray] = None) -> np.ndarray:
        """Losses of all (or the selected) examples at w."""

    @abstractmethod
    def glm_scalars(self, w: np.ndarray, indices: Optional[np.ndarray] = None) -> np.ndarray:
        """Rows sᵢ with ∇ℓᵢ(w) = xᵢ ⊗ sᵢ."""

    @abstractmethod
    def expand(self, x: np.ndarray, scalar) -> np.ndarray:
        """Rebuilds a gradient from a feature row and its GLM scalar."""

    @abstractmethod
    def predict(self, w: np.ndarray, features: Optional[np.ndarray] = None) -> np.ndarray:
        """Model output on a feature matrix (the training features by default)."""

    def prox(self, i: int, w: np.ndarray, step: float) -> np.ndarray:
        return self.prox_with_value(i, w, step)[0]

    def prox_with_value(self, i: int, w: np.ndarray, step: float) -> Tuple[np.ndarray, float]:
        """One prox-oracle call: prox_{step·ℓᵢ}(w) and the loss at the returned point."""
        raise CapabilityError(f"{type(self).__name__} has no proximal operator.")

    def value(self, i: int, w: np.ndarray) -> float:
        return self.evaluate(i, w)[0]

    def gradient(self, i: int, w: np.ndarray) -> np.ndarray:
        return self.evaluate(i, w)[1]

    def glm_scalar(self, i: int, w: np.ndarray):
        return self.evaluate(i, w)[2]

    def gradients(self, w: np.ndarray, indices: Optional[np.ndarray] = None) -> np.ndarray:
        """Gradient rows, one per selected example."""
        features = self.features if indices is None else self.features[indices]
        scalars = self.glm_scalars(w, indices)
        if scalars.ndim == 1:
            return features * scalars[:, None]
        return np.einsum("ic,id->icd", scalars, features).reshape(features.shape[0], -1)

    def weighted_gradient(self, w: np.ndarray, weights: np.ndarray, indices: Optional[np.ndarray] = None) -> np.ndarray:
        """Σᵢ weightsᵢ ∇ℓᵢ(w) without materializing the gradient rows."""
        features = self.features if indices is None else self.features[indices]
        scalars = self.glm_scalars(w, indices)
        if scalars.ndim == 1:
            return features.T @ (weights * scalars)
        return ((scalars * weights[:, None]).T @ features).reshape(-1)


class SquaredLoss(LossOracle):
    """ℓᵢ(w) = ½(xᵢᵀw − yᵢ)² with the exact prox."""

    def evaluate(self, i, w):
        x = self.features[i]
        residual = float(x @ w - self.labels[i])
        return 0.5 * residual ** 2, self.expand(x, residual), residual

    def values(self, w, indices=None):
        return 0.5 * self._residuals(w, indices) ** 2

    def glm_scalars(self, w, indices=None):
        return self._residuals(w, indices)

    def _residuals(self, w, indices):
        if indices is None:
            return self.features @ w - self.labels
        return self.features[indices] @ w - self.labels[indices]

    def expand(self, x, scalar):
        return x * scalar

    def prox_with_value(self, i, w, step):
        x = self.features[i]
        residual = float(x @ w - self.labels[i])
        point = w - (step * residual / (1.0 + step * float(x @ x))) * x
        return point, 0.5 * float(x @ point - self.labels[i]) ** 2

    def predict(self, w, features=None):
        features = self.features if features is None else features
        return features @ w


class LogisticLoss(LossOracle):
    """ℓᵢ(w) = −yᵢxᵢᵀw + ln(1 + exp(xᵢᵀw)) for labels in {0, 1}; one-Newton-step prox."""

    def __init__(self, data: Dataset):
        super().__init__(data)
        if not np.all(np.isin(self.labels, (0.0, 1.0))):
            raise DataError("Logistic loss needs labels in {0, 1}.")

    def evaluate(self, i, w):
        x = self.features[i]
        margin = float(x @ w)
        scalar = float(expit(margin)) - self.labels[i]
        return float(self._loss(margin, self.labels[i])), self.expand(x, scalar), scalar

    @staticmethod
    def _loss(margin, label):
        return np.logaddexp(0.0, margin) - label * margin

    def values(self, w, indices=None):
        features, labels = self._rows(indices)
        return self._loss(features @ w, labels)

    def glm_scalars(self, w, indices=None):
        features, labels = self._rows(indices)
        return expit(features @ w) - labels

    def _rows(self, indices):
        if indices is None:
            return self.features, self.labels
        return self.features[indices], self.labels[indices]

    def expand(self, x, scalar):
        return x * scalar

    def prox_with_value(self, i, w, step):
        x = self.features[i]
        prob = float(expit(x @ w))
        grad_scale = prob - self.labels[i]
        curvature = prob * (1.0 - prob)
        point = w - (step * grad_scale / (1.0 + step * curvature * float(x @ x))) * x
        return point, float(self._loss(float(x @ point), self.labels[i]))

    def predict(self, w, features=None):
        features = self.features if features is None else features
        return (features @ w > 0.0).astype(float)


class MultinomialLoss(LossOracle):
    """
    Softmax cross-entropy of a linear model W ∈ ℝ^{C×d}, flattened row-major.

    The prox is one Newton step of ℓᵢ(Z) + ‖W − Z‖²/(2η), restricted to
    directions z xᵢᵀ, which reduces to a C-dimensional diagonal-plus-rank-one
    solve with a closed form.
    """

    def __init__(self, data: Dataset):
        super().__init__(data)
        self.num_classes = data.num_classes
        if self.num_classes < 2:
            raise DataError("Multinomial loss needs at least two classes.")
        valid = (self.labels == np.round(self.labels)) & (self.labels >= 0) & (self.labels < self.num_classes)
        if not np.all(valid):
            raise DataError(f"Class labels must be integers in [0, {self.num_classes - 1}].")
        self.classes = self.labels.astype(int)

    @property
    def dim(self) -> int:
        return self.num_classes * self.d

    def _matrix(self, w):
        return np.reshape(w, (self.num_classes, self.d))

    def evaluate(self, i, w):
        x = self.features[i]
        logits = self._matrix(w) @ x
        label = self.classes[i]
        scalar = softmax(logits)
        scalar[label] -= 1.0
        value = float(logsumexp(logits) - logits[label])
        return value, self.expand(x, scalar), scalar

    def values(self, w, indices=None):
        features, classes = self._rows(indices)
        logits = features @ self._matrix(w).T
        return -log_softmax(logits, axis=1)[np.arange(classes.size), classes]

    def glm_scalars(self, w, indices=None):
        features, classes = self._rows(indices)
        scalars = softmax(features @ self._matrix(w).T, axis=1)
        scalars[np.arange(classes.size), classes] -= 1.0
        return scalars

    def _rows(self, indices):
        if indices is None:
            return self.features, self.classes
        return self.features[indices], self.classes[indices]

    def expand(self, x, scalar):
        return np.outer(scalar, x).reshape(-1)

    def prox_with_value(self, i, w, step):
        x = self.features[i]
        label = self.classes[i]
        matrix = self._matrix(w)
        probs = softmax(matrix @ x)
        z3 = 1.0 + step * float(x @ x) * probs
        z2 = probs / z3
        z1 = z2.copy()
        z1[label] -= 1.0 / z3[label]
        z = z1 - (z1.sum() / z2.sum()) * z2
        point = (matrix - step * np.outer(z, x)).reshape(-1)
        logits = self._matrix(point) @ x
        return point, float(logsumexp(logits) - logits[label])

    def predict(self, w, features=None):
        features = self.features if features is None else features
        return np.argmax(features @ self._matrix(w).T, axis=1).astype(float)


class RegularizedOracle(LossOracle):
    """rᵢ(w) = ℓᵢ(w) + (μ/2)‖w‖²; prox through prox_{ηr}(w) = prox_{ηℓ/(1+ημ)}(w/(1+ημ))."""

    has_glm = False

    def __init__(self, base: LossOracle, penalty: float):
        self.base = base
        self.penalty = penalty
        self.features = base.features
        self.labels = base.labels
        self.n = base.n
        self.d = base.d
        self.has_prox = base.has_prox

    @property
    def dim(self) -> int:
        return self.base.dim

    def evaluate(self, i, w):
        value, grad, _ = self.base.evaluate(i, w)
        return value + 0.5 * self.penalty * float(w @ w), grad + self.penalty * w, None

    def values(self, w, indices=None):
        return self.base.values(w, indices) + 0.5 * self.penalty * float(w @ w)

    def gradients(self, w, indices=None):
        return self.base.gradients(w, indices) + self.penalty * w

    def weighted_gradient(self, w, weights, indices=None):
        return self.base.weighted_gradient(w, weights, indices) + weights.sum() * self.penalty * w

    def glm_scalars(self, w, indices=None):
        raise CapabilityError("A regularized oracle has no GLM form; use the base oracle.")

    def glm_scalar(self, i, w):
        raise CapabilityError("A regularized oracle has no GLM form; use the base oracle.")

    def expand(self, x, scalar):
        raise CapabilityError("A regularized oracle has no GLM form; use the base oracle.")

    def prox_with_value(self, i, w, step):
        shrink = 1.0 + step * self.penalty
        point, value = self.base.prox_with_value(i, w / shrink, step / shrink)
        return point, value + 0.5 * self.penalty * float(point @ point)

    def predict(self, w, features=None):
        return self.base.predict(w, features)


def squared_loss_oracle(data: Dataset) -> SquaredLoss:
    return SquaredLoss(data)


def logistic_loss_oracle(data: Dataset) -> LogisticLoss:
    return LogisticLoss(data)


def multinomial_loss_oracle(data: Dataset) -> MultinomialLoss:
    return MultinomialLoss(data)


def regularize(base: LossOracle, penalty: float) -> LossOracle:
    """Adds (μ/2)‖w‖² to every loss; μ = 0 returns the base oracle itself."""
    if penalty < 0:
        raise ParameterError(f"Regularization μ must be nonnegative, got {penalty}.")
    if penalty == 0:
        return base
    return RegularizedOracle(base, penalty)


def oracle_for(data: Dataset) -> LossOracle:
    """Squared loss for regression, logistic for binary, multinomial for multiclass labels."""
    builders = {
        "regression": squared_loss_oracle,
        "binary": logistic_loss_oracle,
        "multiclass": multinomial_loss_oracle,
    }
    return builders[data.task](data)
