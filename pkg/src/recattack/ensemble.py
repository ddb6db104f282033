"""Randomized ensembles of classifiers.

A randomized ensemble answers each query with the output of one member,
sampled with input-independent probabilities alpha.  Its expected accuracy
on a labeled point is therefore the alpha-weighted count of members that
classify the point correctly -- computed exactly by enumeration, never by
Monte Carlo.  A perturbation is adversarial iff it strictly decreases that
expectation.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import LpNorm
from .models import (
    BinaryLinearClassifier,
    LabeledExample,
    MulticlassClassifier,
)
from .seeding import derive_seed

ALPHA_SUM_TOL = 1e-12


class EnsembleError(ValueError):
    """Raised for invalid ensemble construction or incompatible members."""


class RandomizedEnsemble:
    """Member classifiers plus sampling probabilities.

    Members must share an input dimension and a label space: either all
    binary linear classifiers (labels +/-1) or all multiclass classifiers
    with equal class counts.  Every alpha_i must be strictly positive (a
    zero-probability member is simply not part of the ensemble) and the
    alphas must sum to one.
    """

    def __init__(self, members: Sequence, alpha: Sequence[float]):
        members = tuple(members)
        alpha = np.asarray(alpha, dtype=float)
        if len(members) < 1:
            raise EnsembleError("an ensemble needs at least one member")
        if alpha.shape != (len(members),):
            raise EnsembleError(f"alpha shape {alpha.shape} does not match {len(members)} members")
        if not np.all(alpha > 0.0):
            raise EnsembleError("all sampling probabilities must be strictly positive")
        if abs(float(alpha.sum()) - 1.0) > ALPHA_SUM_TOL:
            raise EnsembleError(f"sampling probabilities must sum to 1, got {alpha.sum()!r}")
        self.is_binary = all(isinstance(m, BinaryLinearClassifier) for m in members)
        if not self.is_binary:
            if not all(isinstance(m, MulticlassClassifier) for m in members):
                raise EnsembleError("members must be all binary linear or all multiclass")
            counts = {m.class_count for m in members}
            if len(counts) != 1:
                raise EnsembleError(f"members disagree on class count: {sorted(counts)}")
            self.class_count = counts.pop()
        dims = {m.input_dim for m in members}
        if len(dims) != 1:
            raise EnsembleError(f"members disagree on input dimension: {sorted(dims)}")
        self.input_dim = dims.pop()
        self.members = members
        self.alpha = alpha
        if self.is_binary:
            # stacked weights make the hot L(x) evaluation a single matmul
            self._W = np.stack([m.w for m in members])
            self._b = np.array([m.b for m in members])

    @property
    def size(self) -> int:
        return len(self.members)

    def correct_mask(self, x: np.ndarray, y: int) -> np.ndarray:
        """Boolean vector: does member i classify (x, y) correctly?"""
        if self.is_binary:
            return y * (self._W @ x + self._b) > 0.0
        return np.array([m.decide(x) == y for m in self.members])

    def reweighted(self, alpha: Sequence[float]) -> "RandomizedEnsemble":
        """Same members under new probabilities; zero-weight members are dropped."""
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (self.size,):
            raise EnsembleError(f"need {self.size} probabilities, got {alpha.shape}")
        keep = alpha > 0.0
        if not keep.any():
            raise EnsembleError("at least one member must have positive probability")
        return RandomizedEnsemble(
            [m for m, k in zip(self.members, keep) if k], alpha[keep]
        )


def singleton(model) -> RandomizedEnsemble:
    """The trivial ensemble that always answers with ``model``."""
    return RandomizedEnsemble([model], [1.0])


@dataclass
class AttackResult:
    """Outcome of one attack on one labeled example.

    ``v_history`` is the sequence of accepted expected-accuracy values for
    monotone-acceptance attacks (their guarantee l_after <= l_before is
    checkable from it); gradient attacks instead record their per-step
    iterates.  ``frozen_at`` is the first step whose gradient vanished, and
    ``skipped`` lists (iteration, member) pairs whose candidate was
    degenerate.
    """

    delta: np.ndarray
    norm_p: LpNorm
    l_before: float
    l_after: float
    fooled: list[bool]
    v_history: list[float] = field(default_factory=list)
    iterates: Optional[list[np.ndarray]] = None
    frozen_at: Optional[int] = None
    skipped: list[tuple[int, int]] = field(default_factory=list)


def finalize_result(
    rec: RandomizedEnsemble,
    x: np.ndarray,
    y: int,
    delta: np.ndarray,
    p: LpNorm,
    **extra,
) -> AttackResult:
    """Evaluate a finished perturbation against the ensemble."""
    return AttackResult(
        delta=delta,
        norm_p=p,
        l_before=expected_accuracy(rec, x, y),
        l_after=expected_accuracy(rec, x + delta, y),
        fooled=[bool(v) for v in ~rec.correct_mask(x + delta, y)],
        **extra,
    )


def expected_accuracy(rec: RandomizedEnsemble, x: np.ndarray, y: int) -> float:
    """Probability that the ensemble classifies (x, y) correctly.

    Exact enumeration over members: sum of alpha_i over correct members.
    Equals 1 iff every member is correct and 0 iff every member is wrong.
    """
    return float(rec.alpha @ rec.correct_mask(np.asarray(x, dtype=float), y))


def is_adversarial(
    rec: RandomizedEnsemble, x: np.ndarray, y: int, delta: np.ndarray
) -> bool:
    """True iff ``delta`` strictly decreases the expected accuracy at (x, y)."""
    x = np.asarray(x, dtype=float)
    return expected_accuracy(rec, x + delta, y) < expected_accuracy(rec, x, y)


def sample_member(
    rec: RandomizedEnsemble, rng: np.random.Generator, size: "int | None" = None
):
    """Draw member indices with probabilities alpha, independent of any input."""
    return rng.choice(rec.size, size=size, p=rec.alpha)


AttackFn = Callable[..., "AttackResult | float"]


def _example_accuracy(
    rec: RandomizedEnsemble,
    attack: AttackFn,
    ex: LabeledExample,
    cfg,
    seed: int,
) -> float:
    rng = np.random.default_rng(seed)
    out = attack(rec, ex.x, ex.y, cfg, rng=rng)
    if isinstance(out, AttackResult):
        return out.l_after
    return float(out)


def robust_accuracy(
    rec: RandomizedEnsemble,
    attack: AttackFn,
    dataset: Sequence[LabeledExample],
    cfg,
    master_seed: int = 0,
    threads: int = 1,
) -> float:
    """Mean post-attack expected accuracy over a dataset.

    ``attack(rec, x, y, cfg, rng)`` must return an AttackResult or, for
    attacker-randomized evaluations, the attacker-averaged accuracy itself.
    Per-example seeds are derived from the master seed and the example
    index, so thread count never changes the result.
    """
    seeds = [derive_seed(master_seed, i) for i in range(len(dataset))]
    if threads <= 1:
        vals = [
            _example_accuracy(rec, attack, ex, cfg, s) for ex, s in zip(dataset, seeds)
        ]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(
                pool.map(
                    lambda args: _example_accuracy(rec, attack, *args),
                    zip(dataset, [cfg] * len(dataset), seeds),
                )
            )
    return float(np.mean(vals)) if vals else 1.0


def cross_robustness_matrix(
    models: Sequence,
    attack: AttackFn,
    dataset: Sequence[LabeledExample],
    cfg,
    master_seed: int = 0,
    threads: int = 1,
) -> np.ndarray:
    """Entry (i, j): accuracy of model i on examples perturbed against model j.

    The attack runs on the singleton ensemble of the attacked model; seeds
    are derived per (attacked model, example) pair.
    """
    if not models:
        raise EnsembleError("need at least one model")
    M = len(models)
    matrix = np.zeros((M, M))

    def perturb_column(j: int) -> list[np.ndarray]:
        target = singleton(models[j])
        col_seed = derive_seed(master_seed, j)
        perturbed = []
        for i, ex in enumerate(dataset):
            rng = np.random.default_rng(derive_seed(col_seed, i))
            out = attack(target, ex.x, ex.y, cfg, rng=rng)
            if not isinstance(out, AttackResult):
                raise EnsembleError(
                    "cross-robustness needs a perturbation-returning attack"
                )
            perturbed.append(ex.x + out.delta)
        return perturbed

    if threads <= 1:
        columns = [perturb_column(j) for j in range(M)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            columns = list(pool.map(perturb_column, range(M)))

    for j, perturbed in enumerate(columns):
        for i, model in enumerate(models):
            hits = [
                model.decide(px) == ex.y for px, ex in zip(perturbed, dataset)
            ]
            matrix[i, j] = float(np.mean(hits))
    return matrix


# --- dataset file format ---------------------------------------------------


def save_dataset(examples: Sequence[LabeledExample], path: "str | Path") -> None:
    """Write a JSON array of {"x": [...], "y": int} records."""
    doc = [{"x": list(ex.x), "y": ex.y} for ex in examples]
    Path(path).write_text(json.dumps(doc) + "\n")


def load_dataset(path: "str | Path") -> list[LabeledExample]:
    doc = json.loads(Path(path).read_text())
    out = []
    for i, rec in enumerate(doc):
        try:
            out.append(LabeledExample(np.array(rec["x"], dtype=float), int(rec["y"])))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"dataset record {i} is malformed: {exc}") from None
    return out
