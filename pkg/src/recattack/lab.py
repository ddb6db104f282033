"""Desk-scale data and training.

Synthetic datasets with known geometry, deterministic minibatch SGD for the
linear and MLP model kinds, PGD adversarial training, and the boosted
pairing procedure that trains a second model purely on adversarial examples
crafted against a frozen first model.  Everything is sized to run in seconds
on one CPU core, and every run is a pure function of its seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Optional, Sequence

import numpy as np

from .models import (
    LabeledExample,
    LinearModel,
    MlpModel,
    MulticlassClassifier,
    _act,
    _act_deriv,
    softmax,
)
from .attacks import AttackConfig, pgd
from .ensemble import RandomizedEnsemble
from .seeding import derive_seed

_DATASET_TAGS = ("gaussian-blobs", "ring", "xor-grid")
_BLOB_RADIUS = 4.0


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class SyntheticDataset:
    """Labeled examples plus the generator coordinates that reproduce them."""

    examples: tuple[LabeledExample, ...]
    tag: str
    seed: int
    class_count: int
    dim: int

    def __len__(self) -> int:
        return len(self.examples)

    def __getitem__(self, i: int) -> LabeledExample:
        return self.examples[i]

    def __iter__(self) -> Iterator[LabeledExample]:
        return iter(self.examples)


@dataclass(frozen=True)
class ModelSpec:
    """Architecture request: 'linear', or 'mlp' with hidden layer widths."""

    kind: str
    hidden: tuple[int, ...] = ()
    activation: str = "tanh"

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.kind not in ("linear", "mlp"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "linear" and self.hidden:
            raise ValueError("a linear model takes no hidden layers")
        if self.kind == "mlp" and not self.hidden:
            raise ValueError("an mlp needs at least one hidden layer")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be positive")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    lr: float
    seed: int
    momentum: float = 0.0
    adversarial: Optional[AttackConfig] = None

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.batch_size < 1 or not self.lr > 0.0:
            raise ValueError("epochs must be >= 0, batch_size >= 1, lr > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")


def make_dataset(
    tag: str, class_count: int, dim: int, n: int, seed: int
) -> SyntheticDataset:
    """Deterministic synthetic dataset.

    gaussian-blobs: one unit-variance cluster per class, centers equally
    spaced on a circle of fixed radius in the first two coordinates.
    ring: two classes at disjoint radii (not linearly separable).
    xor-grid: two classes by quadrant sign parity, with a margin band
    around the axes.  ring and xor-grid are binary only.
    """
    if tag not in _DATASET_TAGS:
        raise ValueError(f"unknown dataset tag {tag!r}; choose from {_DATASET_TAGS}")
    if dim < 2:
        raise ValueError(f"need dim >= 2, got {dim}")
    if n < class_count:
        raise ValueError(f"need at least one example per class ({n} < {class_count})")
    if class_count < 2:
        raise ValueError("need at least 2 classes")
    if tag in ("ring", "xor-grid") and class_count != 2:
        raise ValueError(f"{tag} datasets are binary (class_count=2)")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % class_count
    examples = []
    if tag == "gaussian-blobs":
        angles = 2.0 * np.pi * np.arange(class_count) / class_count
        centers = np.zeros((class_count, dim))
        centers[:, 0] = _BLOB_RADIUS * np.cos(angles)
        centers[:, 1] = _BLOB_RADIUS * np.sin(angles)
        for y in labels:
            examples.append(LabeledExample(centers[y] + rng.standard_normal(dim), int(y)))
    elif tag == "ring":
        for y in labels:
            theta = rng.uniform(0.0, 2.0 * np.pi)
            r = rng.uniform(0.0, 1.2) if y == 0 else rng.uniform(2.0, 3.0)
            x = 0.2 * rng.standard_normal(dim)
            x[0] += r * np.cos(theta)
            x[1] += r * np.sin(theta)
            examples.append(LabeledExample(x, int(y)))
    else:  # xor-grid
        for y in labels:
            s0 = rng.choice([-1.0, 1.0])
            s1 = s0 if y == 0 else -s0
            x = 0.2 * rng.standard_normal(dim)
            x[0] += s0 * rng.uniform(0.3, 2.0)
            x[1] += s1 * rng.uniform(0.3, 2.0)
            examples.append(LabeledExample(x, int(y)))
    return SyntheticDataset(tuple(examples), tag, seed, class_count, dim)


def _init_layers(
    spec: ModelSpec, dim: int, class_count: int, rng: np.random.Generator
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    dims = [dim, *spec.hidden, class_count]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _materialize(
    spec: ModelSpec, weights: list[np.ndarray], biases: list[np.ndarray]
) -> MulticlassClassifier:
    if spec.kind == "linear":
        return LinearModel(weights[0].copy(), biases[0].copy())
    return MlpModel([W.copy() for W in weights], [b.copy() for b in biases], spec.activation)


def _param_grads(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    act: str,
    x: np.ndarray,
    y: int,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Loss and parameter gradients of softmax cross-entropy at one example."""
    zs, hs = [], [x]
    h = x
    for W, b in zip(weights[:-1], biases[:-1]):
        z = W @ h + b
        zs.append(z)
        h = _act(z, act)
        hs.append(h)
    logits = weights[-1] @ h + biases[-1]
    zmax = float(np.max(logits))
    loss = zmax + float(np.log(np.exp(logits - zmax).sum())) - float(logits[y])
    residual = softmax(logits)
    residual[y] -= 1.0
    dW = [np.empty(0)] * len(weights)
    db = [np.empty(0)] * len(weights)
    dW[-1] = np.outer(residual, hs[-1])
    db[-1] = residual
    upstream = weights[-1].T @ residual
    for layer in range(len(weights) - 2, -1, -1):
        dz = upstream * _act_deriv(zs[layer], act)
        dW[layer] = np.outer(dz, hs[layer])
        db[layer] = dz
        upstream = weights[layer].T @ dz
    return loss, dW, db


def train(
    spec: ModelSpec, dataset: Sequence[LabeledExample], cfg: TrainConfig
) -> MulticlassClassifier:
    """Minibatch SGD on softmax cross-entropy.

    With ``cfg.adversarial`` set, every batch input is replaced by its PGD
    perturbation against the current model before the gradient step
    (zero-initialized PGD, so training stays deterministic under the seed).
    Zero epochs return the freshly initialized model.
    """
    if not dataset:
        raise ValueError("cannot train on an empty dataset")
    dim = dataset[0].x.shape[0]
    class_count = max(ex.y for ex in dataset) + 1
    if class_count < 2:
        class_count = 2
    rng = np.random.default_rng(cfg.seed)
    weights, biases = _init_layers(spec, dim, class_count, rng)
    vel_W = [np.zeros_like(W) for W in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    n = len(dataset)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = [dataset[i] for i in order[start : start + cfg.batch_size]]
            if cfg.adversarial is not None:
                model = _materialize(spec, weights, biases)
                batch = [
                    LabeledExample(ex.x + pgd(model, ex.x, ex.y, cfg.adversarial).delta, ex.y)
                    for ex in batch
                ]
            gW = [np.zeros_like(W) for W in weights]
            gb = [np.zeros_like(b) for b in biases]
            batch_loss = 0.0
            with np.errstate(over="ignore", invalid="ignore"):
                for ex in batch:
                    loss, dW, db = _param_grads(weights, biases, spec.activation, ex.x, ex.y)
                    batch_loss += loss
                    for l in range(len(weights)):
                        gW[l] += dW[l]
                        gb[l] += db[l]
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(f"non-finite loss {batch_loss}")
            scale = 1.0 / len(batch)
            for l in range(len(weights)):
                vel_W[l] = cfg.momentum * vel_W[l] - cfg.lr * scale * gW[l]
                vel_b[l] = cfg.momentum * vel_b[l] - cfg.lr * scale * gb[l]
                weights[l] = weights[l] + vel_W[l]
                biases[l] = biases[l] + vel_b[l]
    return _materialize(spec, weights, biases)


def craft_adversarial_dataset(
    model: MulticlassClassifier,
    dataset: Sequence[LabeledExample],
    attack_cfg: AttackConfig,
) -> list[LabeledExample]:
    """PGD-perturb every example against a frozen model."""
    return [
        LabeledExample(ex.x + pgd(model, ex.x, ex.y, attack_cfg).delta, ex.y)
        for ex in dataset
    ]


def train_bat_pair(
    spec: ModelSpec,
    dataset: Sequence[LabeledExample],
    cfg: TrainConfig,
    alpha: Sequence[float] = (0.9, 0.1),
) -> RandomizedEnsemble:
    """Boosted pair: a robust first model, then a second trained on its leavings.

    The first model is PGD-adversarially trained.  The second model trains
    on PGD-adversarial examples crafted against the *frozen first model
    only* -- its own gradients are never queried while crafting, which is
    what leaves it defenseless against perturbations aimed at itself.
    Sampling probabilities default to (0.9, 0.1), heavily favoring the
    robust member.
    """
    if cfg.adversarial is None:
        raise ValueError("boosted pairing needs an adversarial attack config")
    f1 = train(spec, dataset, cfg)
    crafted = craft_adversarial_dataset(f1, dataset, cfg.adversarial)
    cfg2 = replace(cfg, adversarial=None, seed=derive_seed(cfg.seed, 1))
    f2 = train(spec, crafted, cfg2)
    return RandomizedEnsemble([f1, f2], alpha)
