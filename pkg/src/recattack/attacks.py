"""Projected-gradient attacks and their randomized-ensemble adaptations.

The base attack iterates ``delta <- project(delta + eta * mu_p(grad))`` where
``mu_p`` is the unit-lp steepest direction.  Against a randomized ensemble it
comes in four adaptive flavors: expected-loss PGD (the gradient is the exact
alpha-weighted sum of member loss gradients), mean-logit PGD, first-member
PGD, and attacker-randomized PGD evaluated by exact enumeration over the
attacker's sampling distribution.

A vanishing gradient freezes the step (the iterate is a fixed point); the
first frozen step index is reported on the result rather than raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import INF, LpNorm, project_ball, steepest_direction
from .models import (
    BinaryAsMulticlass,
    BinaryLinearClassifier,
    MulticlassClassifier,
    bce_loss_grad,
    binary_label_to_class,
    ce_loss_grad,
    softmax,
)
from .ensemble import (
    AttackResult,
    RandomizedEnsemble,
    expected_accuracy,
    finalize_result,
    singleton,
)


class AttackError(ValueError):
    """Raised for invalid attack configuration or incompatible targets."""


@dataclass(frozen=True)
class AttackConfig:
    """Static attack parameters.

    ``step_size`` defaults to eps for the sup norm and eps/4 otherwise.
    ``rho_coef`` scales the slack term of the boundary-crossing attacks
    (rho = rho_coef * radius).  ``top_g`` caps the boundary search to the
    G smallest logit gaps; None searches all of them.
    """

    eps: float
    p: "LpNorm | float | str" = INF
    steps: int = 20
    step_size: Optional[float] = None
    init: str = "zero"
    restarts: int = 1
    rho_coef: float = 0.05
    top_g: Optional[int] = None
    clamp01: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", LpNorm.coerce(self.p))
        object.__setattr__(self, "eps", float(self.eps))
        if not self.eps >= 0.0:
            raise AttackError(f"radius must be nonnegative, got {self.eps}")
        if self.steps < 1:
            raise AttackError("need at least one step")
        if self.step_size is not None and not self.step_size > 0.0:
            raise AttackError(f"step size must be positive, got {self.step_size}")
        if self.init not in ("zero", "random"):
            raise AttackError(f"init must be 'zero' or 'random', got {self.init!r}")
        if self.restarts < 0:
            raise AttackError("restarts must be nonnegative")
        if not self.rho_coef > 0.0:
            raise AttackError("rho_coef must be positive")
        if self.top_g is not None and self.top_g < 1:
            raise AttackError("top_g must be >= 1 or None")

    @property
    def eta(self) -> float:
        """The effective step size."""
        if self.step_size is not None:
            return self.step_size
        return self.eps if self.p.p == INF else self.eps / 4.0

    def to_json_dict(self) -> dict:
        return {
            "eps": self.eps,
            "p": self.p.to_json(),
            "steps": self.steps,
            "step_size": self.step_size,
            "init": self.init,
            "restarts": self.restarts,
            "rho_coef": self.rho_coef,
            "top_g": self.top_g,
            "clamp01": self.clamp01,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "AttackConfig":
        known = {
            "eps", "p", "steps", "step_size", "init", "restarts",
            "rho_coef", "top_g", "clamp01",
        }
        unknown = set(doc) - known
        if unknown:
            raise AttackError(f"unknown attack config fields: {sorted(unknown)}")
        if "eps" not in doc:
            raise AttackError("attack config missing field 'eps'")
        return cls(**doc)


def random_in_ball(dim: int, eps: float, p: LpNorm, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample from the lp ball: per-coordinate for sup norm, scaled
    Gaussian direction times U^(1/D) radius for the Euclidean ball."""
    if p.p == INF:
        return rng.uniform(-eps, eps, size=dim)
    if p.p == 2.0:
        v = rng.standard_normal(dim)
        n = float(np.linalg.norm(v))
        if n == 0.0:
            return np.zeros(dim)
        r = eps * rng.uniform() ** (1.0 / dim)
        return v * (r / n)
    raise AttackError(f"random init supports p in {{2, inf}}, got p={p.p}")


def _initial_delta(
    x: np.ndarray, cfg: AttackConfig, rng: Optional[np.random.Generator]
) -> np.ndarray:
    if cfg.init == "zero":
        return np.zeros_like(x)
    if rng is None:
        raise AttackError("random init requires an rng")
    delta = random_in_ball(x.shape[0], cfg.eps, cfg.p, rng)
    if cfg.clamp01:
        delta = np.clip(x + delta, 0.0, 1.0) - x
    return delta


def _pgd_loop(
    grad_fn: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    cfg: AttackConfig,
    rng: Optional[np.random.Generator],
) -> tuple[np.ndarray, list[np.ndarray], Optional[int]]:
    if cfg.eps == 0.0:
        zero = np.zeros_like(x)
        return zero, [zero.copy() for _ in range(cfg.steps + 1)], None
    delta = _initial_delta(x, cfg, rng)
    iterates = [delta.copy()]
    frozen_at: Optional[int] = None
    eta = cfg.eta
    for k in range(1, cfg.steps + 1):
        g = grad_fn(x + delta)
        if not g.any():
            if frozen_at is None:
                frozen_at = k
            iterates.append(delta.copy())
            continue
        delta = project_ball(delta + eta * steepest_direction(g, cfg.p), cfg.eps, cfg.p)
        if cfg.clamp01:
            delta = np.clip(x + delta, 0.0, 1.0) - x
        iterates.append(delta.copy())
    return delta, iterates, frozen_at


def _single_loss_grad(f, y: int) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(f, BinaryLinearClassifier):
        return lambda pt: bce_loss_grad(f, pt, y)[1]
    if isinstance(f, MulticlassClassifier):
        return lambda pt: ce_loss_grad(f, pt, y)[1]
    raise AttackError(f"cannot attack model of type {type(f).__name__}")


def _as_multiclass(rec: RandomizedEnsemble) -> tuple[list[MulticlassClassifier], Callable[[int], int]]:
    """Members in multiclass form plus the matching label map."""
    if rec.is_binary:
        return [BinaryAsMulticlass(m) for m in rec.members], binary_label_to_class
    return list(rec.members), lambda y: y


def expected_loss(rec: RandomizedEnsemble, x: np.ndarray, y: int) -> float:
    """Alpha-weighted member loss: BCE on binary ensembles, CE otherwise."""
    if rec.is_binary:
        return float(
            sum(a * bce_loss_grad(m, x, y)[0] for a, m in zip(rec.alpha, rec.members))
        )
    return float(
        sum(a * ce_loss_grad(m, x, y)[0] for a, m in zip(rec.alpha, rec.members))
    )


def pgd(
    f, x: np.ndarray, y: int, cfg: AttackConfig, rng: Optional[np.random.Generator] = None
) -> AttackResult:
    """Plain PGD against a single classifier.

    Cross-entropy for multiclass models, binary cross-entropy for binary
    linear ones.  For the sup norm the update is exactly
    clip(delta + eta * sgn(g), -eps, eps).
    """
    x = np.asarray(x, dtype=float)
    delta, iterates, frozen_at = _pgd_loop(_single_loss_grad(f, y), x, cfg, rng)
    return finalize_result(
        singleton(f), x, y, delta, cfg.p, iterates=iterates, frozen_at=frozen_at
    )


def apgd(
    rec: RandomizedEnsemble,
    x: np.ndarray,
    y: int,
    cfg: AttackConfig,
    rng: Optional[np.random.Generator] = None,
) -> AttackResult:
    """PGD on the exact expected loss of the ensemble.

    The gradient is the alpha-weighted sum of member loss gradients; for
    binary linear members this collapses to -y * sum_i alpha_i lam_i w_i.
    A singleton ensemble reproduces plain PGD step for step.
    """
    x = np.asarray(x, dtype=float)
    if rec.is_binary:

        def grad_fn(pt: np.ndarray) -> np.ndarray:
            g = np.zeros_like(pt)
            for a, m in zip(rec.alpha, rec.members):
                g += a * bce_loss_grad(m, pt, y)[1]
            return g

    else:

        def grad_fn(pt: np.ndarray) -> np.ndarray:
            g = np.zeros_like(pt)
            for a, m in zip(rec.alpha, rec.members):
                g += a * ce_loss_grad(m, pt, y)[1]
            return g

    delta, iterates, frozen_at = _pgd_loop(grad_fn, x, cfg, rng)
    return finalize_result(
        rec, x, y, delta, cfg.p, iterates=iterates, frozen_at=frozen_at
    )


def apgd_logits(
    rec: RandomizedEnsemble,
    x: np.ndarray,
    y: int,
    cfg: AttackConfig,
    rng: Optional[np.random.Generator] = None,
) -> AttackResult:
    """PGD on the cross-entropy of the alpha-weighted mean logits."""
    x = np.asarray(x, dtype=float)
    members, label_map = _as_multiclass(rec)
    cls = label_map(y)
    C = members[0].class_count

    def grad_fn(pt: np.ndarray) -> np.ndarray:
        mean_logits = np.zeros(C)
        for a, m in zip(rec.alpha, members):
            mean_logits += a * m.logits(pt)
        residual = softmax(mean_logits)
        residual[cls] -= 1.0
        g = np.zeros_like(pt)
        for a, m in zip(rec.alpha, members):
            g += a * (m.jacobian(pt) @ residual)
        return g

    delta, iterates, frozen_at = _pgd_loop(grad_fn, x, cfg, rng)
    return finalize_result(
        rec, x, y, delta, cfg.p, iterates=iterates, frozen_at=frozen_at
    )


def pgd_first(
    rec: RandomizedEnsemble,
    x: np.ndarray,
    y: int,
    cfg: AttackConfig,
    rng: Optional[np.random.Generator] = None,
) -> AttackResult:
    """PGD against member 1 only, evaluated against the whole ensemble."""
    x = np.asarray(x, dtype=float)
    delta, iterates, frozen_at = _pgd_loop(
        _single_loss_grad(rec.members[0], y), x, cfg, rng
    )
    return finalize_result(
        rec, x, y, delta, cfg.p, iterates=iterates, frozen_at=frozen_at
    )


def randomized_pgd_eval(
    rec: RandomizedEnsemble,
    x: np.ndarray,
    y: int,
    cfg: AttackConfig,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Accuracy when the attacker also samples a member to attack.

    Exact enumeration: sum_j alpha_j * L(x + delta_j, y) where delta_j is
    plain PGD against member j.  No Monte Carlo over the attacker's draw.
    """
    x = np.asarray(x, dtype=float)
    rngs = rng.spawn(rec.size) if rng is not None else [None] * rec.size
    total = 0.0
    for a, m, child in zip(rec.alpha, rec.members, rngs):
        res = pgd(m, x, y, cfg, rng=child)
        total += a * expected_accuracy(rec, x + res.delta, y)
    return float(total)


def with_restarts(
    attack,
    rec: RandomizedEnsemble,
    x: np.ndarray,
    y: int,
    cfg: AttackConfig,
    rng: np.random.Generator,
) -> AttackResult:
    """Run ``attack`` from independent random initializations.

    Keeps the perturbation with the largest final expected loss (first on
    ties).  Note this is a loss-maximizing selection: the winner is not
    guaranteed to minimize expected accuracy.
    """
    if cfg.restarts < 1:
        raise AttackError("with_restarts needs restarts >= 1")
    if cfg.init != "random":
        raise AttackError("with_restarts needs init='random'")
    x = np.asarray(x, dtype=float)
    best: Optional[AttackResult] = None
    best_loss = -math.inf
    for child in rng.spawn(cfg.restarts):
        res = attack(rec, x, y, cfg, rng=child)
        loss = expected_loss(rec, x + res.delta, y)
        if loss > best_loss:
            best, best_loss = res, loss
    assert best is not None
    return best
