"""Acceptance gate: every criterion as an executable check.

Each test prints one `[PASS]`/`[FAIL]` line (run with `pytest -s` to see them
all).  The heavier experiments share module-scoped fixtures; everything is
seeded, so the numbers below are bit-reproducible.
"""

import time

import numpy as np
import pytest

from recattack.arc import arc
from recattack.attacks import AttackConfig, apgd, pgd
from recattack.ensemble import RandomizedEnsemble, robust_accuracy
from recattack.geometry import INF, LpNorm, project_ball, steepest_direction
from recattack.lab import ModelSpec, TrainConfig, make_dataset, train, train_bat_pair
from recattack.verify import (
    run_auxiliary_suite,
    run_consistency_suite,
    run_hyperplane_suite,
    run_inconsistency_suite,
    run_jacobian_suite,
)


def report(number: int, name: str, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number} ({name}): {detail}")
    assert ok, f"criterion {number} ({name}): {detail}"


# --- shared desk-scale experiments -----------------------------------------

BAT_EPS = 3.0


@pytest.fixture(scope="module")
def bat_experiment():
    """Boosted pair of 1-hidden-layer MLPs on 2-D blobs, sup norm."""
    train_ds = make_dataset("gaussian-blobs", 2, 2, 240, seed=11)
    eval_ds = make_dataset("gaussian-blobs", 2, 2, 150, seed=12)
    atk = AttackConfig(eps=BAT_EPS, p="inf", steps=7, step_size=BAT_EPS / 4)
    cfg = TrainConfig(
        epochs=50, batch_size=32, lr=0.1, momentum=0.9, seed=5, adversarial=atk
    )
    pair = train_bat_pair(
        ModelSpec("mlp", (8,), activation="softplus"), train_ds, cfg, alpha=(0.9, 0.1)
    )
    return pair, eval_ds


@pytest.fixture(scope="module")
def ten_class_experiment():
    """Two independently trained MLPs on 10-class blobs."""
    train_ds = make_dataset("gaussian-blobs", 10, 4, 400, seed=21)
    eval_ds = make_dataset("gaussian-blobs", 10, 4, 120, seed=22)
    spec = ModelSpec("mlp", (16,), activation="softplus")
    members = [
        train(spec, train_ds, TrainConfig(epochs=40, batch_size=32, lr=0.2, momentum=0.9, seed=s))
        for s in (31, 32)
    ]
    return RandomizedEnsemble(members, [0.5, 0.5]), eval_ds


def arc_sweep_accuracy(rec, dataset, cfg):
    """Dataset robust accuracy under the greedy attack, asserting the
    monotone-acceptance contract on every run."""
    values = []
    for ex in dataset:
        res = arc(rec, ex.x, ex.y, cfg)
        assert all(
            b <= a for a, b in zip(res.v_history, res.v_history[1:])
        ), "accepted accuracy sequence increased"
        values.append(res.l_after)
    return float(np.mean(values))


# --- criteria ----------------------------------------------------------------


def test_criterion_1_consistency():
    t0 = time.time()
    suite = run_consistency_suite(trials=10_000, seed=0)
    elapsed = time.time() - t0
    ok = suite.failures == 0 and elapsed < 60.0
    report(
        1, "consistency",
        ok, f"{suite.trials - suite.failures}/{suite.trials} adversarial, {elapsed:.1f}s",
    )


def test_criterion_2_inconsistency():
    suite = run_inconsistency_suite(trials=100, seed=1)
    report(
        2, "inconsistency",
        suite.failures == 0,
        f"{suite.trials - suite.failures}/{suite.trials} instances: stalled at 1.0, greedy hit 0.5, witness found",
    )


def test_criterion_3_auxiliary_equivalence():
    suite = run_auxiliary_suite(trials=1000, seed=2, steps=10)
    report(
        3, "auxiliary equivalence",
        suite.failures == 0,
        f"{suite.trials - suite.failures}/{suite.trials} trajectories within 1e-9 per step",
    )


def test_criterion_4_hyperplane_projection():
    suite = run_hyperplane_suite(trials=100, seed=3)
    report(
        4, "closed-form projection",
        suite.failures == 0,
        f"{suite.trials - suite.failures}/{suite.trials} matched the numeric minimizer and flipped the sign",
    )


def test_criterion_5_jacobian_fidelity():
    suite = run_jacobian_suite(trials=100, seed=4)
    report(
        5, "jacobian fidelity",
        suite.failures == 0,
        f"{suite.trials - suite.failures}/{suite.trials} finite-difference checks under 1e-4",
    )


def test_criterion_6_bat_reproduction(bat_experiment):
    t0 = time.time()
    pair, eval_ds = bat_experiment
    f1 = pair.members[0]
    cfg_apgd = AttackConfig(eps=BAT_EPS, p="inf", steps=20, step_size=BAT_EPS / 4)
    cfg_arc = AttackConfig(eps=BAT_EPS, p="inf", steps=20, step_size=BAT_EPS / 2)
    r1 = float(np.mean([pgd(f1, ex.x, ex.y, cfg_apgd).l_after for ex in eval_ds]))

    grid = [round(0.1 * i, 1) for i in range(11)]
    arc_curve, apgd_curve = [], []
    for a in grid:
        rec = pair.reweighted([a, 1.0 - a])
        arc_curve.append(arc_sweep_accuracy(rec, eval_ds, cfg_arc))
        apgd_curve.append(robust_accuracy(rec, apgd, eval_ds, cfg_apgd))

    dominated = all(x <= y for x, y in zip(arc_curve, apgd_curve))
    apgd_peak = int(np.argmax(apgd_curve))
    arc_peak_at_one = arc_curve[-1] > max(arc_curve[:-1])
    beats_single_model = arc_curve[apgd_peak] < r1
    elapsed = time.time() - t0
    ok = (
        dominated
        and apgd_peak < len(grid) - 1
        and arc_peak_at_one
        and beats_single_model
        and elapsed < 300.0
    )
    report(
        6, "toy boosted-pair reproduction", ok,
        f"dominated={dominated}, adaptive peak at alpha={grid[apgd_peak]}, "
        f"greedy peak at alpha=1: {arc_peak_at_one}, "
        f"greedy {arc_curve[apgd_peak]:.3f} < single-model {r1:.3f}: {beats_single_model}, "
        f"{elapsed:.1f}s",
    )


def test_criterion_7_top_g_approximation(ten_class_experiment):
    rec, eval_ds = ten_class_experiment
    base = dict(eps=0.6, p="inf", steps=10, step_size=0.3)
    full, capped, narrow = (
        AttackConfig(**base),
        AttackConfig(**base, top_g=9),
        AttackConfig(**base, top_g=2),
    )
    identical = True
    for ex in eval_ds:
        res_full = arc(rec, ex.x, ex.y, full)
        res_capped = arc(rec, ex.x, ex.y, capped)
        if not np.array_equal(res_full.delta, res_capped.delta):
            identical = False
            break
    racc_full = arc_sweep_accuracy(rec, eval_ds, full)
    racc_narrow = arc_sweep_accuracy(rec, eval_ds, narrow)
    gap = abs(racc_narrow - racc_full)
    ok = identical and gap <= 0.01
    report(
        7, "restricted boundary search", ok,
        f"G=C-1 bit-identical: {identical}, |G=2 - full| = {gap:.4f} <= 0.01",
    )


def test_criterion_8_geometry_properties():
    rng = np.random.default_rng(8)
    ok = True
    for p in (1.0, 2.0, INF):
        lp = LpNorm(p)
        for _ in range(1000):
            g = rng.standard_normal(int(rng.integers(2, 9)))
            if not g.any():
                continue
            v = steepest_direction(g, lp)
            if abs(lp.norm(v) - 1.0) > 1e-9:
                ok = False
            best = float(g @ v)
            units = rng.standard_normal((100, g.shape[0]))
            units /= np.linalg.norm(units, ord=p, axis=1)[:, None]
            if np.max(units @ g) > best + 1e-9:
                ok = False
    for p in (2.0, INF):
        lp = LpNorm(p)
        for _ in range(1000):
            delta = rng.standard_normal(int(rng.integers(1, 9))) * rng.uniform(0.1, 10)
            eps = float(rng.uniform(0.05, 5.0))
            once = project_ball(delta, eps, lp)
            if lp.norm(once) > eps + 1e-12:
                ok = False
            if not np.allclose(project_ball(once, eps, lp), once, atol=1e-15):
                ok = False
    report(
        8, "geometry properties", ok,
        "3000 steepest directions unit-norm and dominant; 2000 projections idempotent and bounded",
    )


def test_criterion_9_monotonicity(bat_experiment):
    # per-run monotone acceptance is asserted inside every greedy run above;
    # here the dataset-level curve must also be exactly non-increasing in the
    # iteration budget
    pair, eval_ds = bat_experiment
    curve = []
    for steps in (1, 2, 4, 8, 16):
        cfg = AttackConfig(eps=BAT_EPS, p="inf", steps=steps, step_size=BAT_EPS / 2)
        curve.append(arc_sweep_accuracy(pair, eval_ds, cfg))
    non_increasing = all(b <= a for a, b in zip(curve, curve[1:]))
    report(
        9, "monotonicity", non_increasing,
        "iteration-budget curve " + " -> ".join(f"{v:.4f}" for v in curve),
    )
