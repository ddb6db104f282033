"""Tests for the theory oracles: auxiliary sequences, the stalling instance,
and the existence decision."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from recattack.attacks import AttackConfig, apgd
from recattack.arc import arc_blc
from recattack.ensemble import (
    RandomizedEnsemble,
    expected_accuracy,
    is_adversarial,
    singleton,
)
from recattack.geometry import INF, LpNorm
from recattack.models import BinaryLinearClassifier
from recattack.oracles import (
    adversarial_exists_blc,
    auxiliary_sequence,
    blc_boundary_distances,
    brute_force_adversarial,
    existence_witness,
    inconsistency_instance,
    pgd_on_auxiliary,
)
from recattack.verify import random_blc_ensemble


def blc(w, b=0.0):
    return BinaryLinearClassifier(np.asarray(w, dtype=float), b)


class TestAuxiliarySequence:
    def test_singleton_weights_are_scaled_member_weights(self):
        f = blc([1.0, -2.0], 0.4)
        rec = singleton(f)
        x = np.array([0.2, 0.1])
        cfg = AttackConfig(eps=0.5, p=2, steps=5, step_size=0.1)
        steps = auxiliary_sequence(rec, x, 1, cfg)
        assert len(steps) == 5
        for step in steps:
            lam = step.lambdas[0]
            assert 0.0 < lam < 1.0
            assert_allclose(step.w_bar, lam * f.w, atol=1e-15)
            assert step.b_bar == 0.0

    def test_mirrored_pair_gives_exactly_zero_weights(self):
        rec, ex, eps = inconsistency_instance(np.array([3.0, -1.0]), 1.0, 2)
        cfg = AttackConfig(eps=eps, p=2, steps=4)
        steps = auxiliary_sequence(rec, ex.x, ex.y, cfg)
        for step in steps:
            assert_array_equal(step.w_bar, np.zeros(2))

    def test_weights_match_lambda_combination(self):
        rng = np.random.default_rng(0)
        rec, x, y = random_blc_ensemble(rng, max_members=4, max_dim=6)
        cfg = AttackConfig(eps=1.0, p=INF, steps=6, step_size=0.2)
        for step in auxiliary_sequence(rec, x, y, cfg):
            recombined = np.zeros(rec.input_dim)
            for a, lam, m in zip(rec.alpha, step.lambdas, rec.members):
                recombined += a * lam * m.w
            assert_allclose(step.w_bar, recombined, atol=1e-12)

    @pytest.mark.parametrize("p", [2.0, INF])
    def test_replayed_iterates_match_adaptive_attack(self, p):
        rng = np.random.default_rng(1)
        for _ in range(25):
            rec, x, y = random_blc_ensemble(rng, max_members=3, max_dim=8)
            eps = float(rng.uniform(0.5, 2.0))
            cfg = AttackConfig(eps=eps, p=p, steps=10, step_size=eps / 4)
            adaptive = apgd(rec, x, y, cfg)
            replay = pgd_on_auxiliary(auxiliary_sequence(rec, x, y, cfg), x, y, cfg)
            for a, b in zip(adaptive.iterates, replay):
                assert np.max(np.abs(a - b)) <= 1e-9

    def test_replay_matches_under_random_init(self):
        rng = np.random.default_rng(2)
        rec, x, y = random_blc_ensemble(rng, max_members=3, max_dim=5)
        cfg = AttackConfig(eps=1.0, p=2, steps=8, step_size=0.25, init="random")
        adaptive = apgd(rec, x, y, cfg, rng=np.random.default_rng(33))
        steps = auxiliary_sequence(rec, x, y, cfg, rng=np.random.default_rng(33))
        replay = pgd_on_auxiliary(steps, x, y, cfg, init_delta=adaptive.iterates[0])
        for a, b in zip(adaptive.iterates, replay):
            assert np.max(np.abs(a - b)) <= 1e-9


class TestInconsistencyInstance:
    def test_euclidean_radius_formula(self):
        _, _, eps = inconsistency_instance(np.array([1.0, 0.0]), 1.0, 2)
        assert eps == pytest.approx(2.0)

    def test_sup_norm_radius_formula(self):
        _, _, eps = inconsistency_instance(np.array([1.0, 1.0]), 1.0, INF)
        assert eps == pytest.approx(1.0)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            inconsistency_instance(np.zeros(2), 1.0, 2)
        with pytest.raises(ValueError):
            inconsistency_instance(np.ones(2), 0.0, 2)

    def test_instance_guarantees(self):
        w = np.array([0.7, -2.1, 0.4])
        rec, ex, eps = inconsistency_instance(w, 1.3, INF)
        assert expected_accuracy(rec, ex.x, ex.y) == 1.0
        witness = eps * w / np.linalg.norm(w, ord=INF)
        assert is_adversarial(rec, ex.x, ex.y, witness)
        stalled = apgd(rec, ex.x, ex.y, AttackConfig(eps=eps, p=INF, steps=20))
        assert stalled.l_after == 1.0
        greedy = arc_blc(rec, ex.x, ex.y, eps, INF)
        assert greedy.l_after == 0.5


class TestExistenceOracle:
    def test_true_below_radius(self):
        f = blc([1.0, 0.0], 0.5)  # distance 0.5 under any norm here
        rec = singleton(f)
        assert adversarial_exists_blc(rec, np.zeros(2), 1, 1.0, 2)

    def test_false_when_all_far(self):
        rec = RandomizedEnsemble([blc([1.0, 0.0], 2.0), blc([0.0, 1.0], 2.0)], [0.5, 0.5])
        assert not adversarial_exists_blc(rec, np.zeros(2), 1, 1.0, 2)

    def test_precondition_enforced(self):
        rec = singleton(blc([1.0], -0.5))
        with pytest.raises(ValueError):
            adversarial_exists_blc(rec, np.zeros(1), 1, 1.0, 2)

    def test_witness_is_sound(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            rec, x, y = random_blc_ensemble(rng, max_members=4, max_dim=6)
            p = LpNorm((1.0, 2.0, INF)[int(rng.integers(3))])
            eps = float(np.min(blc_boundary_distances(rec, x, p)) * rng.uniform(1.05, 3.0))
            assert adversarial_exists_blc(rec, x, y, eps, p)
            delta = existence_witness(rec, x, y, eps, p)
            assert p.norm(delta) <= eps + 1e-9
            assert is_adversarial(rec, x, y, delta)

    def test_agreement_with_brute_force_in_low_dimension(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            rec, x, y = random_blc_ensemble(rng, max_members=3, max_dim=3)
            p = LpNorm((2.0, INF)[int(rng.integers(2))])
            zmin = float(np.min(blc_boundary_distances(rec, x, p)))
            exists = bool(rng.integers(2))
            eps = zmin * (rng.uniform(1.3, 3.0) if exists else rng.uniform(0.3, 0.9))
            assert adversarial_exists_blc(rec, x, y, eps, p) == exists
            found = brute_force_adversarial(
                rec, x, y, eps, p, budget=4000, rng=np.random.default_rng(rng.integers(2**63))
            )
            if exists:
                assert found is not None
            else:
                assert found is None  # sound: nothing to find below every distance


class TestBruteForce:
    def test_finds_the_mirrored_pair_witness(self):
        rec, ex, eps = inconsistency_instance(np.array([1.0, 2.0]), 1.0, 2)
        delta = brute_force_adversarial(rec, ex.x, ex.y, eps, 2)
        assert delta is not None
        assert expected_accuracy(rec, ex.x + delta, ex.y) == 0.5

    def test_returns_none_when_radius_too_small(self):
        rng = np.random.default_rng(5)
        rec, x, y = random_blc_ensemble(rng, max_members=3, max_dim=3)
        eps = 0.5 * float(np.min(blc_boundary_distances(rec, x, 2)))
        assert brute_force_adversarial(rec, x, y, eps, 2) is None

    def test_returned_perturbation_is_valid(self):
        rng = np.random.default_rng(6)
        lp = LpNorm(INF)
        for _ in range(50):
            rec, x, y = random_blc_ensemble(rng, max_members=3, max_dim=3)
            eps = float(np.min(blc_boundary_distances(rec, x, lp)) * 1.5)
            delta = brute_force_adversarial(rec, x, y, eps, lp, budget=4000)
            if delta is not None:
                assert lp.norm(delta) <= eps + 1e-9
                assert is_adversarial(rec, x, y, delta)
