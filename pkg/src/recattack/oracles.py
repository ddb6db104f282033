"""Independent oracles for the attack algorithms.

Three executable facts anchor the test suite:

* Expected-loss PGD against a binary-linear ensemble is, step for step,
  plain PGD against a sequence of auxiliary classifiers whose weights are
  the alpha-lambda-weighted sums of member weights.  ``auxiliary_sequence``
  computes that sequence; ``pgd_on_auxiliary`` replays it.
* Expected-loss PGD is inconsistent: ``inconsistency_instance`` builds the
  mirrored-pair ensemble on which it provably stalls at any initialization
  orthogonal to the shared weight vector, even though an adversarial
  perturbation exists.
* For binary-linear ensembles with all members correct, a norm-bounded
  adversarial perturbation exists iff some member's boundary distance is
  below the radius; ``adversarial_exists_blc`` decides this exactly, and
  ``brute_force_adversarial`` searches for a witness with no knowledge of
  the closed form (one-sided: a hit certifies existence, a miss proves
  nothing).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import LpNorm, steepest_direction, project_ball
from .models import BinaryLinearClassifier, LabeledExample, bce_loss_grad
from .ensemble import RandomizedEnsemble, expected_accuracy
from .attacks import AttackConfig, AttackError, apgd


@dataclass(frozen=True)
class AuxiliaryStep:
    """One step of the auxiliary-classifier sequence.

    ``w_bar`` is sum_i alpha_i * lambdas_i * w_i; the bias is arbitrary
    (gradient directions ignore it) and defaults to zero.  ``w_bar`` may be
    the zero vector: that is exactly the ill-defined case in which the
    expected-loss attack freezes.
    """

    lambdas: np.ndarray
    w_bar: np.ndarray
    b_bar: float = 0.0


def _blc_members(rec: RandomizedEnsemble) -> list[BinaryLinearClassifier]:
    if not rec.is_binary:
        raise AttackError("this oracle requires binary linear members")
    return list(rec.members)


def auxiliary_sequence(
    rec: RandomizedEnsemble,
    x: np.ndarray,
    y: int,
    cfg: AttackConfig,
    rng: Optional[np.random.Generator] = None,
) -> list[AuxiliaryStep]:
    """Auxiliary classifiers equivalent to an expected-loss PGD run.

    For each iteration k, evaluates every member's lambda coefficient at the
    (k-1)-th iterate and forms w_bar_k.  Contract: plain PGD that attacks
    the k-th auxiliary classifier at step k (same init, step size, radius,
    norm) reproduces the expected-loss PGD iterates exactly.
    """
    members = _blc_members(rec)
    x = np.asarray(x, dtype=float)
    result = apgd(rec, x, y, cfg, rng=rng)
    assert result.iterates is not None
    steps = []
    for prev in result.iterates[:-1]:
        lambdas = np.array([bce_loss_grad(m, x + prev, y)[2] for m in members])
        w_bar = np.zeros_like(x)
        for a, lam, m in zip(rec.alpha, lambdas, members):
            w_bar += a * lam * m.w
        steps.append(AuxiliaryStep(lambdas=lambdas, w_bar=w_bar))
    return steps


def pgd_on_auxiliary(
    steps: list[AuxiliaryStep],
    x: np.ndarray,
    y: int,
    cfg: AttackConfig,
    init_delta: Optional[np.ndarray] = None,
) -> list[np.ndarray]:
    """Replay plain PGD against the per-step auxiliary classifiers.

    Returns the iterate sequence delta^(0..K).  A zero w_bar freezes the
    step, mirroring the expected-loss attack's fixed point.
    """
    x = np.asarray(x, dtype=float)
    delta = np.zeros_like(x) if init_delta is None else np.array(init_delta, dtype=float)
    iterates = [delta.copy()]
    for step in steps:
        if step.w_bar.any():
            aux = BinaryLinearClassifier(step.w_bar, step.b_bar)
            g = bce_loss_grad(aux, x + delta, y)[1]
            delta = project_ball(
                delta + cfg.eta * steepest_direction(g, cfg.p), cfg.eps, cfg.p
            )
            if cfg.clamp01:
                delta = np.clip(x + delta, 0.0, 1.0) - x
        iterates.append(delta.copy())
    return iterates


def inconsistency_instance(
    w: np.ndarray, b: float, p: "LpNorm | float"
) -> tuple[RandomizedEnsemble, LabeledExample, float]:
    """Mirrored-pair ensemble on which expected-loss PGD provably stalls.

    Members (w, b) and (-w, b) with equiprobable sampling, the example
    (x=0, y=+1), and radius eps = 2 b ||w||_p / ||w||_2^2.  Both members
    classify x correctly; delta = eps * w / ||w||_p fools the second member,
    so an adversarial perturbation exists; and any initialization orthogonal
    to w is a fixed point of the expected-loss attack because the two member
    gradients cancel exactly.
    """
    lp = LpNorm.coerce(p)
    w = np.asarray(w, dtype=float)
    if not w.any():
        raise ValueError("w must be nonzero")
    if not b > 0.0:
        raise ValueError(f"b must be positive, got {b}")
    rec = RandomizedEnsemble(
        [BinaryLinearClassifier(w, b), BinaryLinearClassifier(-w, b)], [0.5, 0.5]
    )
    eps = 2.0 * b * lp.norm(w) / float(w @ w)
    return rec, LabeledExample(np.zeros_like(w), 1), eps


def blc_boundary_distances(
    rec: RandomizedEnsemble, x: np.ndarray, p: "LpNorm | float"
) -> np.ndarray:
    """Per-member shortest lp distance from x to the decision boundary."""
    lp = LpNorm.coerce(p)
    x = np.asarray(x, dtype=float)
    return np.array(
        [abs(m.value(x)) / lp.dual_norm(m.w) for m in _blc_members(rec)]
    )


def adversarial_exists_blc(
    rec: RandomizedEnsemble,
    x: np.ndarray,
    y: int,
    eps: float,
    p: "LpNorm | float",
) -> bool:
    """Exact existence decision for binary-linear ensembles.

    Requires every member to classify (x, y) correctly.  An adversarial
    perturbation of lp norm <= eps exists iff min_i zeta_i < eps: necessity
    follows from the fooling conditions plus Hoelder's inequality, and
    sufficiency from the constructive witness eps * g along the closest
    member's optimal direction (see ``existence_witness``).
    """
    x = np.asarray(x, dtype=float)
    if not rec.correct_mask(x, y).all():
        raise ValueError("existence oracle assumes all members classify (x, y) correctly")
    return bool(np.min(blc_boundary_distances(rec, x, p)) < eps)


def existence_witness(
    rec: RandomizedEnsemble,
    x: np.ndarray,
    y: int,
    eps: float,
    p: "LpNorm | float",
) -> np.ndarray:
    """The constructive perturbation backing ``adversarial_exists_blc``.

    eps times the optimal unit-lp fooling direction of the member with the
    smallest boundary distance; adversarial whenever that distance is below
    eps.
    """
    lp = LpNorm.coerce(p)
    x = np.asarray(x, dtype=float)
    zetas = blc_boundary_distances(rec, x, lp)
    m = rec.members[int(np.argmin(zetas))]
    return -y * eps * steepest_direction(m.w, lp)


def brute_force_adversarial(
    rec: RandomizedEnsemble,
    x: np.ndarray,
    y: int,
    eps: float,
    p: "LpNorm | float",
    budget: int = 2000,
    rng: Optional[np.random.Generator] = None,
) -> Optional[np.ndarray]:
    """Search the radius-eps sphere for any accuracy-decreasing perturbation.

    Candidates are the signed coordinate axes, the sign corners, and random
    directions up to ``budget`` points, each rescaled to lp norm eps.  Only
    practical in low dimension.  One-sided by construction: a returned
    perturbation certifies existence, but exhausting the budget proves
    nothing.
    """
    lp = LpNorm.coerce(p)
    x = np.asarray(x, dtype=float)
    if rng is None:
        rng = np.random.default_rng(0)
    dim = x.shape[0]
    baseline = expected_accuracy(rec, x, y)

    fixed = [np.eye(dim), -np.eye(dim)]
    if dim <= 12:
        bits = np.arange(2**dim)[:, None] >> np.arange(dim)[None, :] & 1
        fixed.append(np.where(bits == 1, 1.0, -1.0))
    candidates = np.concatenate(fixed)[:budget]
    if candidates.shape[0] < budget:
        candidates = np.concatenate(
            [candidates, rng.standard_normal((budget - candidates.shape[0], dim))]
        )
    norms = np.linalg.norm(candidates, ord=lp.p, axis=1)
    keep = norms > 0.0
    deltas = candidates[keep] * (eps / norms[keep])[:, None]

    if rec.is_binary:
        correct = y * (deltas @ rec._W.T + (x @ rec._W.T + rec._b)[None, :]) > 0.0
        accuracies = correct @ rec.alpha
        hits = np.flatnonzero(accuracies < baseline)
        return deltas[hits[0]] if hits.size else None
    for delta in deltas:
        if expected_accuracy(rec, x + delta, y) < baseline:
            return delta
    return None
