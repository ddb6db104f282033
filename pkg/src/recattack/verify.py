"""Self-contained verification suites.

Each suite generates its own random instances from a seed, runs one of the
package's correctness contracts, and counts failures:

* consistency        -- the greedy binary-linear attack finds an adversarial
                        perturbation whenever the existence oracle says one
                        exists and all members start correct (and its
                        accepted-accuracy sequence never increases).
* inconsistency      -- on mirrored-pair instances, expected-loss PGD stalls
                        at accuracy exactly 1 while the greedy attack lands
                        exactly 0.5 and brute force certifies existence.
* auxiliary_equivalence -- expected-loss PGD iterates coincide with plain
                        PGD against the auxiliary-classifier sequence.
* hyperplane_projection -- the closed-form point-to-hyperplane distance
                        matches an independent numeric minimizer, and
                        stepping 1.01x the distance flips the classifier.
* jacobian           -- analytic Jacobians of every model kind match central
                        finite differences.

The ``corrupt`` hook intentionally breaks the adaptive blend weight of the
greedy attack so the harness itself can be validated: a corrupted run must
make the consistency suite fail.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.optimize

from .geometry import INF, Hyperplane, LpNorm, hyperplane_projection
from .models import (
    BinaryAsMulticlass,
    BinaryLinearClassifier,
    LinearModel,
    MlpModel,
)
from .ensemble import RandomizedEnsemble
from .attacks import AttackConfig, apgd
from .arc import arc_blc
from .oracles import (
    adversarial_exists_blc,
    auxiliary_sequence,
    brute_force_adversarial,
    inconsistency_instance,
    pgd_on_auxiliary,
)

SCHEMA_VERSION = 1

NORM_SLACK = 1e-9
DISTANCE_TOL = 1e-6
ITERATE_TOL = 1e-9
JACOBIAN_RTOL = 1e-4
FD_STEP = 1e-5


@dataclass
class SuiteResult:
    name: str
    trials: int
    failures: int

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def to_json_dict(self) -> dict:
        return {
            "trials": self.trials,
            "failures": self.failures,
            "passed": self.passed,
        }


def random_alpha(rng: np.random.Generator, members: int) -> np.ndarray:
    """Random sampling probabilities on a dyadic grid.

    Each entry is a multiple of 2^-10, so the probabilities and all their
    partial sums are exact binary floats: an ensemble with every member
    correct has expected accuracy exactly 1.0, never 1 - 1 ulp.
    """
    slots = 1 << 10
    counts = rng.multinomial(slots - members, np.full(members, 1.0 / members)) + 1
    return counts / float(slots)


def random_blc_ensemble(
    rng: np.random.Generator,
    max_members: int = 5,
    max_dim: int = 16,
    min_dim: int = 2,
) -> tuple[RandomizedEnsemble, np.ndarray, int]:
    """Random binary-linear ensemble plus a point every member classifies
    correctly (margins are planted via the biases)."""
    M = int(rng.integers(1, max_members + 1))
    D = int(rng.integers(min_dim, max_dim + 1))
    x = rng.standard_normal(D)
    y = int(rng.choice([-1, 1]))
    members = []
    for _ in range(M):
        w = rng.standard_normal(D)
        while not w.any():
            w = rng.standard_normal(D)
        margin = rng.uniform(0.1, 2.0)
        members.append(BinaryLinearClassifier(w, -float(w @ x) + y * margin))
    return RandomizedEnsemble(members, random_alpha(rng, M)), x, y


def run_consistency_suite(
    trials: int = 10_000, seed: int = 0, corrupt: bool = False
) -> SuiteResult:
    """Existence oracle true + all members correct => the attack must land
    l_after < 1 with a norm-eps perturbation and a non-increasing accepted
    accuracy sequence."""
    rng = np.random.default_rng(seed)
    ps = (1.0, 2.0, INF)
    failures = 0
    for _ in range(trials):
        rec, x, y = random_blc_ensemble(rng)
        p = LpNorm(ps[int(rng.integers(3))])
        zetas = [abs(m.value(x)) / p.dual_norm(m.w) for m in rec.members]
        eps = float(min(zetas) * rng.uniform(1.05, 4.0))
        if not adversarial_exists_blc(rec, x, y, eps, p):
            failures += 1
            continue
        res = arc_blc(rec, x, y, eps, p, corrupt_beta=corrupt)
        ok = (
            res.l_after < 1.0
            and p.norm(res.delta) <= eps + NORM_SLACK
            and all(b <= a for a, b in zip(res.v_history, res.v_history[1:]))
        )
        failures += not ok
    return SuiteResult("consistency", trials, failures)


def run_inconsistency_suite(trials: int = 100, seed: int = 1) -> SuiteResult:
    """Mirrored-pair instances: expected-loss PGD must return accuracy
    exactly 1, the greedy attack exactly 0.5, and brute force must find a
    witness."""
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(trials):
        D = int(rng.integers(2, 5))
        w = rng.standard_normal(D)
        while not w.any():
            w = rng.standard_normal(D)
        b = float(rng.uniform(0.5, 2.0))
        p = LpNorm(2.0 if rng.integers(2) == 0 else INF)
        rec, ex, eps = inconsistency_instance(w, b, p)
        cfg = AttackConfig(eps=eps, p=p, steps=20)
        stalled = apgd(rec, ex.x, ex.y, cfg)
        greedy = arc_blc(rec, ex.x, ex.y, eps, p)
        witness = brute_force_adversarial(
            rec, ex.x, ex.y, eps, p, rng=np.random.default_rng(rng.integers(2**63))
        )
        ok = (
            stalled.l_after == 1.0
            and greedy.l_after == 0.5
            and witness is not None
        )
        failures += not ok
    return SuiteResult("inconsistency", trials, failures)


def run_auxiliary_suite(
    trials: int = 1000, seed: int = 2, steps: int = 10
) -> SuiteResult:
    """Expected-loss PGD iterates must match PGD against the auxiliary
    sequence to within 1e-9 at every step."""
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(trials):
        rec, x, y = random_blc_ensemble(rng, max_members=4, max_dim=8)
        p = LpNorm(2.0 if rng.integers(2) == 0 else INF)
        eps = float(rng.uniform(0.5, 2.0))
        cfg = AttackConfig(eps=eps, p=p, steps=steps, step_size=float(rng.uniform(eps / 8, eps / 2)))
        adaptive = apgd(rec, x, y, cfg)
        steps_seq = auxiliary_sequence(rec, x, y, cfg)
        replay = pgd_on_auxiliary(steps_seq, x, y, cfg)
        assert adaptive.iterates is not None
        deviation = max(
            float(np.max(np.abs(a - b)))
            for a, b in zip(adaptive.iterates, replay)
        )
        failures += not deviation <= ITERATE_TOL
    return SuiteResult("auxiliary_equivalence", trials, failures)


def numeric_hyperplane_distance(
    h: Hyperplane, x: np.ndarray, p: "LpNorm | float"
) -> float:
    """Independent numeric minimization of ||z - x||_p over the hyperplane.

    p=2 parametrizes the plane by a null-space basis and solves the
    least-squares problem; p=inf solves the epigraph linear program.  No
    dual-norm formula is involved.
    """
    lp = LpNorm.coerce(p)
    w, b = h.normal, h.offset
    x = np.asarray(x, dtype=float)
    D = x.shape[0]
    if lp.p == 2.0:
        z0 = -b * w / float(w @ w)
        basis = scipy.linalg.null_space(w[None, :])
        t, *_ = np.linalg.lstsq(basis, x - z0, rcond=None)
        return float(np.linalg.norm(z0 + basis @ t - x))
    if lp.p == INF:
        c = np.zeros(D + 1)
        c[-1] = 1.0
        eye = np.eye(D)
        ones = np.ones((D, 1))
        a_ub = np.block([[eye, -ones], [-eye, -ones]])
        b_ub = np.concatenate([x, -x])
        a_eq = np.concatenate([w, [0.0]])[None, :]
        res = scipy.optimize.linprog(
            c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[-b],
            bounds=[(None, None)] * D + [(0, None)], method="highs",
        )
        if not res.success:
            raise RuntimeError(f"lp distance solve failed: {res.message}")
        return float(res.x[-1])
    raise ValueError(f"numeric oracle supports p in {{2, inf}}, got {lp.p}")


def run_hyperplane_suite(trials: int = 100, seed: int = 3) -> SuiteResult:
    """Closed-form distance vs numeric minimizer, plus the sign-flip check
    at 1.01x the distance."""
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(trials):
        D = int(rng.integers(2, 7))
        w = rng.standard_normal(D)
        while not w.any():
            w = rng.standard_normal(D)
        b = float(rng.normal(0.0, 2.0))
        x = rng.standard_normal(D)
        p = LpNorm(2.0 if rng.integers(2) == 0 else INF)
        h = Hyperplane(w, b)
        if abs(h.evaluate(x)) < 1e-6:
            continue  # effectively on the plane, nothing to flip
        proj = hyperplane_projection(h, x, p)
        numeric = numeric_hyperplane_distance(h, x, p)
        f = BinaryLinearClassifier(w, b)
        flipped = np.sign(f.value(x + 1.01 * proj.zeta * proj.direction)) != np.sign(
            f.value(x)
        )
        ok = abs(proj.zeta - numeric) <= DISTANCE_TOL and flipped
        failures += not ok
    return SuiteResult("hyperplane_projection", trials, failures)


def finite_difference_jacobian(model, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    D = x.shape[0]
    cols = []
    for i in range(D):
        e = np.zeros(D)
        e[i] = step
        cols.append((model.logits(x + e) - model.logits(x - e)) / (2.0 * step))
    return np.stack(cols, axis=0)


def _random_model(kind: str, rng: np.random.Generator):
    D = int(rng.integers(2, 7))
    if kind == "blc":
        w = rng.standard_normal(D)
        while not w.any():
            w = rng.standard_normal(D)
        return BinaryAsMulticlass(BinaryLinearClassifier(w, float(rng.normal())))
    if kind == "linear":
        C = int(rng.integers(2, 6))
        return LinearModel(rng.standard_normal((C, D)), rng.standard_normal(C))
    if kind == "mlp1":
        C = int(rng.integers(2, 6))
        H = int(rng.integers(3, 9))
        return MlpModel(
            [rng.standard_normal((H, D)), rng.standard_normal((C, H))],
            [rng.standard_normal(H), rng.standard_normal(C)],
            activation="tanh",
        )
    C = int(rng.integers(2, 6))
    h1, h2 = int(rng.integers(3, 9)), int(rng.integers(3, 9))
    return MlpModel(
        [
            rng.standard_normal((h1, D)),
            rng.standard_normal((h2, h1)),
            rng.standard_normal((C, h2)),
        ],
        [rng.standard_normal(h1), rng.standard_normal(h2), rng.standard_normal(C)],
        activation="softplus",
    )


def run_jacobian_suite(trials: int = 100, seed: int = 4) -> SuiteResult:
    """Analytic vs central-finite-difference Jacobians for every model kind."""
    rng = np.random.default_rng(seed)
    kinds = ("blc", "linear", "mlp1", "mlp2")
    failures = 0
    total = 0
    for kind in kinds:
        for _ in range(trials):
            model = _random_model(kind, rng)
            x = rng.standard_normal(model.input_dim)
            J = model.jacobian(x)
            J_fd = finite_difference_jacobian(model, x)
            rel = float(
                np.linalg.norm(J - J_fd) / max(np.linalg.norm(J), 1e-12)
            )
            failures += not rel < JACOBIAN_RTOL
            total += 1
    return SuiteResult("jacobian", total, failures)


def run_all_suites(
    seed: int = 0,
    consistency_trials: int = 10_000,
    inconsistency_trials: int = 100,
    auxiliary_trials: int = 1000,
    hyperplane_trials: int = 100,
    jacobian_trials: int = 100,
    corrupt: Optional[str] = None,
) -> dict:
    """Run every suite and assemble the verification report."""
    if corrupt not in (None, "beta"):
        raise ValueError(f"unknown mutation target {corrupt!r}")
    suites = [
        run_consistency_suite(consistency_trials, seed, corrupt=corrupt == "beta"),
        run_inconsistency_suite(inconsistency_trials, seed + 1),
        run_auxiliary_suite(auxiliary_trials, seed + 2),
        run_hyperplane_suite(hyperplane_trials, seed + 3),
        run_jacobian_suite(jacobian_trials, seed + 4),
    ]
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "mutation": corrupt,
        "suites": {s.name: s.to_json_dict() for s in suites},
        "passed": all(s.passed for s in suites),
    }
