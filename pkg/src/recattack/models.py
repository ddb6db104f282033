"""Classifier models with exact analytic Jacobians.

Binary linear classifiers (labels +/-1), multiclass linear models, and small
multilayer perceptrons with smooth activations, plus the loss functions the
attacks differentiate.  Models are immutable after construction and every
operation here is pure.

Serialization: structured JSON of the form
``{"kind": "blc"|"linear"|"mlp", "dims": [...], "weights": [...], "activation": tag}``
where each weight matrix is stored as a flat row-major decimal array.
Round-trips are value-exact.
"""

from __future__ import annotations

import abc
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DimensionMismatchError(ValueError):
    """Raised when an input's dimension does not match a model's."""


class InvalidLabelError(ValueError):
    """Raised for labels outside the model's label space."""


def _check_dim(expected: int, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (expected,):
        raise DimensionMismatchError(f"expected input of shape ({expected},), got {x.shape}")
    return x


@dataclass(frozen=True)
class LabeledExample:
    """A feature vector with its label: +/-1 for binary, 0-based index otherwise."""

    x: np.ndarray
    y: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "y", int(self.y))


@dataclass(frozen=True)
class BinaryLinearClassifier:
    """f(x) = w.x + b, deciding +1 iff f(x) > 0 and -1 otherwise."""

    w: np.ndarray
    b: float

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=float)
        if not w.any():
            raise ValueError("binary linear classifier needs a nonzero weight vector")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    @property
    def input_dim(self) -> int:
        return self.w.shape[0]

    def value(self, x: np.ndarray) -> float:
        """Raw margin w.x + b."""
        return float(self.w @ _check_dim(self.input_dim, x)) + self.b

    def decide(self, x: np.ndarray) -> int:
        return 1 if self.value(x) > 0.0 else -1


class MulticlassClassifier(abc.ABC):
    """Differentiable C-ary classifier over R^D.

    ``logits`` returns the C raw scores; ``jacobian`` returns the D x C
    matrix whose column j is the gradient of logit j.  The predicted label
    is the argmax of the logits, lowest class index on ties.
    """

    input_dim: int
    class_count: int

    @abc.abstractmethod
    def logits(self, x: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def jacobian(self, x: np.ndarray) -> np.ndarray: ...

    def decide(self, x: np.ndarray) -> int:
        return int(np.argmax(self.logits(x)))


class LinearModel(MulticlassClassifier):
    """Multiclass linear model: logits = W x + b with W of shape (C, D)."""

    def __init__(self, weights: np.ndarray, biases: np.ndarray):
        W = np.asarray(weights, dtype=float)
        b = np.asarray(biases, dtype=float)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise DimensionMismatchError(f"bad linear model shapes: W {W.shape}, b {b.shape}")
        if W.shape[0] < 2:
            raise ValueError("a multiclass model needs at least 2 classes")
        self.W = W
        self.biases = b
        self.class_count, self.input_dim = W.shape

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.W @ _check_dim(self.input_dim, x) + self.biases

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        _check_dim(self.input_dim, x)
        return self.W.T.copy()


_ACTIVATIONS = ("tanh", "softplus", "identity")


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "softplus":
        return np.logaddexp(0.0, z)
    return z


def _act_deriv(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if kind == "softplus":
        return _sigmoid(z)
    return np.ones_like(z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class MlpModel(MulticlassClassifier):
    """Fully connected net with a smooth activation and linear output layer.

    ``weights[i]`` has shape (fan_out, fan_in); layer dimensions must chain
    from the input dimension to the class count.  Smooth activations keep
    the local linearization well-defined everywhere.
    """

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray], activation: str = "tanh"):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}; choose from {_ACTIVATIONS}")
        if len(weights) != len(biases) or not weights:
            raise DimensionMismatchError("need matching, nonempty weight/bias lists")
        self.weights = [np.asarray(W, dtype=float) for W in weights]
        self.bias_vectors = [np.asarray(b, dtype=float) for b in biases]
        for W, b in zip(self.weights, self.bias_vectors):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise DimensionMismatchError(f"bad layer shapes: W {W.shape}, b {b.shape}")
        for Wa, Wb in zip(self.weights, self.weights[1:]):
            if Wb.shape[1] != Wa.shape[0]:
                raise DimensionMismatchError(
                    f"layer dimensions do not chain: {Wa.shape} -> {Wb.shape}"
                )
        self.activation = activation
        self.input_dim = self.weights[0].shape[1]
        self.class_count = self.weights[-1].shape[0]
        if self.class_count < 2:
            raise ValueError("a multiclass model needs at least 2 classes")

    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
        """Return (logits, pre-activations per hidden layer, hidden activations)."""
        h = _check_dim(self.input_dim, x)
        zs: list[np.ndarray] = []
        hs: list[np.ndarray] = [h]
        for W, b in zip(self.weights[:-1], self.bias_vectors[:-1]):
            z = W @ h + b
            zs.append(z)
            h = _act(z, self.activation)
            hs.append(h)
        logits = self.weights[-1] @ h + self.bias_vectors[-1]
        return logits, zs, hs

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self._forward(x)[0]

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """Exact reverse-accumulation Jacobian, shape (D, C)."""
        _, zs, _ = self._forward(x)
        M = self.weights[-1]
        for W, z in zip(reversed(self.weights[:-1]), reversed(zs)):
            M = (M * _act_deriv(z, self.activation)[None, :]) @ W
        return M.T


class BinaryAsMulticlass(MulticlassClassifier):
    """A binary linear classifier viewed as a 2-class model.

    Logits are (0, f(x)), so class 1 corresponds to label +1 and class 0 to
    label -1; the argmax tie at f(x)=0 resolves to class 0, matching the
    binary boundary convention.
    """

    def __init__(self, blc: BinaryLinearClassifier):
        self.blc = blc
        self.input_dim = blc.input_dim
        self.class_count = 2

    def logits(self, x: np.ndarray) -> np.ndarray:
        return np.array([0.0, self.blc.value(x)])

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        _check_dim(self.input_dim, x)
        J = np.zeros((self.input_dim, 2))
        J[:, 1] = self.blc.w
        return J


def binary_label_to_class(y: int) -> int:
    """Map a +/-1 binary label to the 2-class index used by the embedding."""
    if y not in (-1, 1):
        raise InvalidLabelError(f"binary label must be +/-1, got {y}")
    return (1 + y) // 2


def blc_decide(f: BinaryLinearClassifier, x: np.ndarray) -> int:
    """+1 iff w.x + b > 0, else -1 (the boundary itself decides -1)."""
    return f.decide(x)


def predict(f: MulticlassClassifier, x: np.ndarray) -> int:
    """Argmax of the logits, lowest class index on ties."""
    return f.decide(x)


def bce_loss_grad(
    f: BinaryLinearClassifier, x: np.ndarray, y: int
) -> tuple[float, np.ndarray, float]:
    """Binary cross-entropy of sigmoid(f(x)) against y in {-1, +1}.

    Returns (loss, input gradient, lam) where the gradient is exactly
    -y * lam * w and lam = sigmoid(-y * f(x)) lies in (0, 1) for finite
    margins.  Uses log-sum-exp so margins of +/-50 stay finite.
    """
    if y not in (-1, 1):
        raise InvalidLabelError(f"binary label must be +/-1, got {y}")
    margin = f.value(x)
    ym = y * margin
    loss = float(np.logaddexp(0.0, -ym))
    lam = float(_sigmoid(np.asarray(-ym)))
    return loss, -y * lam * f.w, lam


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / e.sum()


def ce_loss_grad(
    f: MulticlassClassifier, x: np.ndarray, y: int
) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy loss and its input gradient.

    grad = jacobian(x) @ (softmax(logits) - onehot(y)).
    """
    if not 0 <= y < f.class_count:
        raise InvalidLabelError(f"label {y} outside [0, {f.class_count})")
    logits = f.logits(x)
    zmax = float(np.max(logits))
    loss = zmax + math.log(np.exp(logits - zmax).sum()) - float(logits[y])
    residual = softmax(logits)
    residual[y] -= 1.0
    return loss, f.jacobian(x) @ residual


def mlp_jacobian(f: MlpModel, x: np.ndarray) -> np.ndarray:
    """Exact (D, C) Jacobian of an MLP's logits at x."""
    return f.jacobian(x)


# --- serialization ---------------------------------------------------------


def model_to_dict(model) -> dict:
    if isinstance(model, BinaryLinearClassifier):
        return {
            "kind": "blc",
            "dims": [model.input_dim],
            "weights": [list(model.w), [model.b]],
        }
    if isinstance(model, LinearModel):
        return {
            "kind": "linear",
            "dims": [model.input_dim, model.class_count],
            "weights": [list(model.W.ravel()), list(model.biases)],
        }
    if isinstance(model, MlpModel):
        dims = [model.input_dim] + [W.shape[0] for W in model.weights]
        weights: list[list[float]] = []
        for W, b in zip(model.weights, model.bias_vectors):
            weights.append(list(W.ravel()))
            weights.append(list(b))
        return {"kind": "mlp", "dims": dims, "weights": weights, "activation": model.activation}
    raise TypeError(f"cannot serialize model of type {type(model).__name__}")


def model_from_dict(doc: dict):
    try:
        kind = doc["kind"]
        dims = doc["dims"]
        weights = doc["weights"]
    except KeyError as exc:
        raise ValueError(f"model document missing field {exc.args[0]!r}") from None
    if kind == "blc":
        (d,) = dims
        return BinaryLinearClassifier(np.array(weights[0], dtype=float), weights[1][0])
    if kind == "linear":
        d, c = dims
        W = np.array(weights[0], dtype=float).reshape(c, d)
        return LinearModel(W, np.array(weights[1], dtype=float))
    if kind == "mlp":
        mats, vecs = [], []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            mats.append(np.array(weights[2 * i], dtype=float).reshape(fan_out, fan_in))
            vecs.append(np.array(weights[2 * i + 1], dtype=float))
        return MlpModel(mats, vecs, activation=doc.get("activation", "tanh"))
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path: "str | Path") -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n")


def load_model(path: "str | Path"):
    return model_from_dict(json.loads(Path(path).read_text()))
