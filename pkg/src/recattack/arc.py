"""Greedy boundary-crossing attacks on randomized ensembles (ARC).

Unlike gradient attacks, ARC treats each member geometrically: it computes
(or linearizes) the member's nearest decision boundary, constructs a
candidate perturbation guaranteed to cross it whenever the boundary is
within reach, and accepts the candidate only if it does not increase the
ensemble's expected accuracy.  Acceptance is monotone by design, so the
sequence of accepted accuracies never increases.

``arc_blc`` is the exact form for ensembles of binary linear classifiers
(consistent: it finds an adversarial perturbation whenever one exists and
every member starts correct).  ``arc`` is the general form for
differentiable multiclass members, driven by a first-order linearization
refreshed at every visit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import (
    DegenerateHyperplaneError,
    Hyperplane,
    LpNorm,
    project_ball,
    steepest_direction,
)
from .models import BinaryLinearClassifier, MulticlassClassifier, predict
from .attacks import AttackConfig, AttackError, _as_multiclass
from .ensemble import (
    AttackResult,
    RandomizedEnsemble,
    expected_accuracy,
    finalize_result,
)


class EmptyCandidateSetError(DegenerateHyperplaneError):
    """Raised when every boundary hyperplane of a linearization is degenerate."""


@dataclass
class ArcState:
    """Per-visit snapshot of an ARC run (collected when a trace is requested).

    ``gamma`` is the exact rescale factor that puts the blended candidate on
    the local-radius sphere; ``closest`` indexes the chosen boundary facet
    within the member's linearization.
    """

    delta: np.ndarray
    v: float
    delta_l: np.ndarray
    v_l: float
    beta: float
    gamma: float
    zeta: float
    direction: np.ndarray
    pred_label: int
    closest: int


def _visit_order(alpha: np.ndarray) -> np.ndarray:
    """Member indices in descending alpha, original order on ties."""
    return np.argsort(-alpha, kind="stable")


def arc_blc(
    rec: RandomizedEnsemble,
    x: np.ndarray,
    y: int,
    eps: float,
    p: "LpNorm | float",
    rho_coef: float = 0.05,
    *,
    corrupt_beta: bool = False,
) -> AttackResult:
    """Single greedy pass over a binary-linear ensemble.

    Visits members once in descending sampling probability.  For member i
    with weight w and margin f(x), the optimal unit-lp fooling direction is
    g = -y * |w|^(q-1) sgn(w) / ||w||_q^(q-1) and the boundary distance is
    zeta = |f(x)| / ||w||_q.  The blend weight beta is eps for the first
    visit or an unreachable boundary, and otherwise large enough that the
    rescaled candidate eps * (delta + beta g) / ||delta + beta g||_p is
    guaranteed to cross member i's boundary whenever zeta < eps.  Candidates
    are accepted iff they do not increase the expected accuracy, so the
    returned perturbation has lp norm exactly eps (or stays zero).

    Any p >= 1 is supported: the candidate is built by exact rescaling, no
    ball projection is needed.

    ``corrupt_beta`` is a test-harness mutation hook: it disables the
    adaptive blend weight (beta = eps always), which breaks the crossing
    guarantee and must be caught by the consistency verification suite.
    """
    if not all(isinstance(m, BinaryLinearClassifier) for m in rec.members):
        raise AttackError("arc_blc requires binary linear members")
    if y not in (-1, 1):
        raise AttackError(f"binary label must be +/-1, got {y}")
    if not eps > 0.0:
        raise AttackError(f"radius must be positive, got {eps}")
    lp = LpNorm.coerce(p)
    rho = rho_coef * eps
    x = np.asarray(x, dtype=float)

    delta = np.zeros_like(x)
    v = expected_accuracy(rec, x, y)
    v_history = [v]
    skipped: list[tuple[int, int]] = []

    for rank, idx in enumerate(_visit_order(rec.alpha)):
        f: BinaryLinearClassifier = rec.members[idx]
        wq = lp.dual_norm(f.w)
        g = -y * steepest_direction(f.w, lp)
        zeta = abs(f.value(x)) / wq
        if corrupt_beta or zeta >= eps or rank == 0:
            beta = eps
        else:
            beta = eps / (eps - zeta) * abs(y * float(f.w @ delta) / wq + zeta) + rho
        blend = delta + beta * g
        norm = lp.norm(blend)
        if norm == 0.0:
            skipped.append((0, int(idx)))
            continue
        candidate = blend * (eps / norm)
        v_hat = expected_accuracy(rec, x + candidate, y)
        if v_hat <= v:
            delta, v = candidate, v_hat
            v_history.append(v)

    return finalize_result(
        rec, x, y, delta, lp, v_history=v_history, skipped=skipped
    )


def linearize(
    f: MulticlassClassifier, x_tilde: np.ndarray
) -> tuple[int, list[Hyperplane]]:
    """First-order model of f's decision boundary around ``x_tilde``.

    Returns the predicted label m and, for every other class j in ascending
    order, the hyperplane {u : w_j.(u - x_tilde) + h_j = 0} expressed in
    displacement coordinates, with normal w_j = grad logit_m - grad logit_j
    and offset h_j = logit_m - logit_j.  Offsets are nonnegative because m
    is the argmax; for a linear model the construction is exact.
    """
    x_tilde = np.asarray(x_tilde, dtype=float)
    m = predict(f, x_tilde)
    logits = f.logits(x_tilde)
    J = f.jacobian(x_tilde)
    return m, [
        Hyperplane(J[:, m] - J[:, j], logits[m] - logits[j])
        for j in range(f.class_count)
        if j != m
    ]


def closest_hyperplane(
    hyperplanes: Sequence[Hyperplane],
    p: "LpNorm | float",
    top_g: Optional[int] = None,
) -> tuple[int, float, np.ndarray]:
    """Nearest boundary facet under the lp norm, optionally approximated.

    With ``top_g`` set, the search is restricted to the G hyperplanes of
    smallest offset (smallest logit gap); the intuition is that the nearest
    boundary usually belongs to a runner-up logit.  ``top_g = C - 1``
    reproduces the exact search bit for bit.  Returns (index into
    ``hyperplanes``, distance zeta, unit-lp direction towards the facet).
    Degenerate (zero-normal) facets never cross and are excluded; ties on
    offset and on distance resolve to the lowest index.
    """
    lp = LpNorm.coerce(p)
    if top_g is not None and not 1 <= top_g <= len(hyperplanes):
        raise AttackError(f"top_g must be in [1, {len(hyperplanes)}], got {top_g}")
    candidates = [(i, h) for i, h in enumerate(hyperplanes) if not h.degenerate]
    if top_g is not None:
        candidates = sorted(candidates, key=lambda ih: ih[1].offset)[:top_g]
    if not candidates:
        raise EmptyCandidateSetError("no nondegenerate boundary hyperplane available")
    best_i = -1
    best_zeta = np.inf
    for i, h in candidates:
        zeta = abs(h.offset) / lp.dual_norm(h.normal)
        if zeta < best_zeta or (zeta == best_zeta and i < best_i):
            best_i, best_zeta = i, zeta
    direction = -steepest_direction(hyperplanes[best_i].normal, lp)
    return best_i, best_zeta, direction


def arc(
    rec: RandomizedEnsemble,
    x: np.ndarray,
    y: int,
    cfg: AttackConfig,
    rng=None,
    trace: Optional[list[ArcState]] = None,
) -> AttackResult:
    """Iterative linearized boundary-crossing attack on a multiclass ensemble.

    Each of the K outer iterations runs a local search of radius eta (the
    step size): members are visited in descending sampling probability, each
    one linearized at the current point x + delta + delta_l, and a local
    candidate of exact lp norm eta is built towards the member's nearest
    boundary facet -- the same blend-weight rule as the binary form, with
    eta in place of eps and rho = rho_coef * eta.  Local candidates are
    scored through the globally projected perturbation and accepted iff the
    expected accuracy does not increase; after the member loop the projected
    global candidate is accepted under the same rule, so the accepted
    accuracy sequence is non-increasing.

    Members that already misclassify the current point are still pushed
    across their nearest boundary (the linearization is taken at the current
    prediction, not the true label).  A member whose linearization has no
    usable facet, or whose blend cancels to zero, is skipped and recorded.

    Binary-linear ensembles are handled through their 2-class embedding.
    ``rng`` is accepted for interface uniformity; the search is
    deterministic and never consumes randomness.  Passing a list as
    ``trace`` collects an ArcState snapshot per member visit.
    """
    lp = cfg.p
    eps = cfg.eps
    x = np.asarray(x, dtype=float)
    if eps == 0.0:
        return finalize_result(rec, x, y, np.zeros_like(x), lp)
    eta = cfg.eta
    rho = cfg.rho_coef * eta
    members, _ = _as_multiclass(rec)
    order = _visit_order(rec.alpha)

    def project(d: np.ndarray) -> np.ndarray:
        d = project_ball(d, eps, lp)
        if cfg.clamp01:
            d = np.clip(x + d, 0.0, 1.0) - x
        return d

    delta = np.zeros_like(x)
    v = expected_accuracy(rec, x, y)
    v_history = [v]
    skipped: list[tuple[int, int]] = []

    for k in range(cfg.steps):
        delta_l = np.zeros_like(x)
        v_l = v
        for rank, idx in enumerate(order):
            x_tilde = x + delta + delta_l
            pred, hyperplanes = linearize(members[idx], x_tilde)
            try:
                n, zeta, g = closest_hyperplane(hyperplanes, lp, cfg.top_g)
            except EmptyCandidateSetError:
                skipped.append((k, int(idx)))
                continue
            if zeta >= eta or rank == 0:
                beta = eta
            else:
                normal = hyperplanes[n].normal
                offset_term = float(normal @ delta_l) / lp.dual_norm(normal)
                beta = eta / (eta - zeta) * abs(offset_term + zeta) + rho
            blend = delta_l + beta * g
            norm = lp.norm(blend)
            if norm == 0.0:
                skipped.append((k, int(idx)))
                continue
            candidate_l = blend * (eta / norm)
            candidate = project(delta + candidate_l)
            v_hat = expected_accuracy(rec, x + candidate, y)
            if trace is not None:
                trace.append(
                    ArcState(
                        delta=delta.copy(), v=v, delta_l=delta_l.copy(), v_l=v_l,
                        beta=beta, gamma=eta / norm, zeta=zeta, direction=g,
                        pred_label=pred, closest=n,
                    )
                )
            if v_hat <= v_l:
                delta_l, v_l = candidate_l, v_hat
        candidate = project(delta + delta_l)
        v_hat = expected_accuracy(rec, x + candidate, y)
        if v_hat <= v:
            delta, v = candidate, v_hat
            v_history.append(v)

    return finalize_result(
        rec, x, y, delta, lp, v_history=v_history, skipped=skipped
    )
