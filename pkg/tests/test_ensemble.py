"""Tests for the randomized ensemble and its exact expected accuracy."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from recattack.attacks import AttackConfig, pgd, pgd_first
from recattack.ensemble import (
    EnsembleError,
    RandomizedEnsemble,
    cross_robustness_matrix,
    expected_accuracy,
    is_adversarial,
    load_dataset,
    robust_accuracy,
    sample_member,
    save_dataset,
    singleton,
)
from recattack.models import BinaryLinearClassifier, LabeledExample, LinearModel
from recattack.oracles import inconsistency_instance


def blc(w, b=0.0):
    return BinaryLinearClassifier(np.asarray(w, dtype=float), b)


@pytest.fixture
def mixed_pair():
    # member 0 correct at x=(1,0) with y=+1, member 1 wrong
    return RandomizedEnsemble([blc([1.0, 0.0]), blc([-1.0, 0.0])], [0.5, 0.5])


class TestConstruction:
    def test_rejects_zero_probability(self):
        with pytest.raises(EnsembleError):
            RandomizedEnsemble([blc([1.0])], [0.0])

    def test_rejects_bad_sum(self):
        with pytest.raises(EnsembleError):
            RandomizedEnsemble([blc([1.0]), blc([2.0])], [0.6, 0.6])

    def test_rejects_empty(self):
        with pytest.raises(EnsembleError):
            RandomizedEnsemble([], [])

    def test_rejects_mixed_label_spaces(self):
        with pytest.raises(EnsembleError):
            RandomizedEnsemble(
                [blc([1.0, 0.0]), LinearModel(np.eye(2), np.zeros(2))], [0.5, 0.5]
            )

    def test_rejects_class_count_mismatch(self):
        with pytest.raises(EnsembleError):
            RandomizedEnsemble(
                [
                    LinearModel(np.zeros((2, 2)) + np.eye(2), np.zeros(2)),
                    LinearModel(np.ones((3, 2)), np.zeros(3)),
                ],
                [0.5, 0.5],
            )

    def test_reweighted_drops_zero_members(self):
        rec = RandomizedEnsemble([blc([1.0]), blc([2.0])], [0.5, 0.5])
        solo = rec.reweighted([1.0, 0.0])
        assert solo.size == 1
        assert solo.members[0] is rec.members[0]


class TestExpectedAccuracy:
    def test_all_correct_gives_one(self, mixed_pair):
        rec = RandomizedEnsemble([blc([1.0, 0.0]), blc([2.0, 1.0])], [0.3, 0.7])
        assert expected_accuracy(rec, np.array([1.0, 0.0]), 1) == 1.0

    def test_half_split(self, mixed_pair):
        assert expected_accuracy(mixed_pair, np.array([1.0, 0.0]), 1) == 0.5

    def test_weighted_single_correct(self):
        rec = RandomizedEnsemble([blc([-1.0]), blc([1.0])], [0.7, 0.3])
        assert expected_accuracy(rec, np.array([1.0]), 1) == pytest.approx(0.3)

    def test_zero_iff_all_wrong(self):
        rec = RandomizedEnsemble([blc([-1.0]), blc([-2.0])], [0.4, 0.6])
        assert expected_accuracy(rec, np.array([1.0]), 1) == 0.0

    def test_bounds_and_permutation_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            M = int(rng.integers(1, 5))
            members = [blc(rng.standard_normal(3), float(rng.normal())) for _ in range(M)]
            alpha = rng.dirichlet(np.ones(M))
            alpha /= alpha.sum()
            x, y = rng.standard_normal(3), int(rng.choice([-1, 1]))
            rec = RandomizedEnsemble(members, alpha)
            L = expected_accuracy(rec, x, y)
            assert 0.0 <= L <= 1.0
            perm = rng.permutation(M)
            shuffled = RandomizedEnsemble(
                [members[i] for i in perm], alpha[perm] / alpha[perm].sum()
            )
            assert expected_accuracy(shuffled, x, y) == pytest.approx(L, abs=1e-12)

    def test_multiclass_members(self):
        m1 = LinearModel(np.eye(2), np.zeros(2))
        m2 = LinearModel(-np.eye(2), np.zeros(2))
        rec = RandomizedEnsemble([m1, m2], [0.25, 0.75])
        assert expected_accuracy(rec, np.array([1.0, 0.0]), 0) == pytest.approx(0.25)


class TestIsAdversarial:
    def test_zero_perturbation_is_not(self, mixed_pair):
        assert not is_adversarial(mixed_pair, np.array([1.0, 0.0]), 1, np.zeros(2))

    def test_mirrored_instance_witness(self):
        w = np.array([2.0, -1.0])
        rec, ex, eps = inconsistency_instance(w, 1.0, 2)
        delta = eps * w / np.linalg.norm(w)
        assert is_adversarial(rec, ex.x, ex.y, delta)
        assert expected_accuracy(rec, ex.x + delta, ex.y) == 0.5

    def test_flipping_only_an_already_wrong_member_is_not_adversarial(self):
        # member 1 misclassifies x both before and after the perturbation
        rec = RandomizedEnsemble([blc([1.0, 0.0], 0.5), blc([-1.0, 0.0], -5.0)], [0.5, 0.5])
        x = np.zeros(2)
        assert expected_accuracy(rec, x, 1) == 0.5
        delta = np.array([0.2, 0.0])
        assert not is_adversarial(rec, x, 1, delta)

    def test_single_member_reduces_to_flip(self):
        rec = singleton(blc([1.0], 0.5))
        x = np.zeros(1)
        assert is_adversarial(rec, x, 1, np.array([-1.0]))
        assert not is_adversarial(rec, x, 1, np.array([-0.4]))


class TestSampleMember:
    def test_degenerate_distribution(self):
        rec = singleton(blc([1.0]))
        rng = np.random.default_rng(0)
        assert all(sample_member(rec, rng) == 0 for _ in range(10))

    def test_empirical_frequency(self):
        rec = RandomizedEnsemble([blc([1.0]), blc([2.0])], [0.5, 0.5])
        draws = sample_member(rec, np.random.default_rng(42), size=1_000_000)
        assert np.mean(draws == 0) == pytest.approx(0.5, abs=0.002)

    def test_seeded_determinism(self):
        rec = RandomizedEnsemble([blc([1.0]), blc([2.0])], [0.25, 0.75])
        a = sample_member(rec, np.random.default_rng(7), size=100)
        b = sample_member(rec, np.random.default_rng(7), size=100)
        assert_array_equal(a, b)


class TestRobustAccuracy:
    def setup_method(self):
        self.model = blc([1.0, 0.0], 0.0)
        self.rec = singleton(self.model)
        self.data = [
            LabeledExample(np.array([2.0, 0.0]), 1),
            LabeledExample(np.array([0.5, 1.0]), 1),
            LabeledExample(np.array([-3.0, 0.0]), -1),
        ]

    def test_zero_radius_equals_clean(self):
        cfg = AttackConfig(eps=0.0, p="inf", steps=3)
        clean = float(
            np.mean([expected_accuracy(self.rec, ex.x, ex.y) for ex in self.data])
        )
        assert robust_accuracy(self.rec, pgd_first, self.data, cfg) == clean

    def test_singleton_matches_single_model_attack(self):
        cfg = AttackConfig(eps=1.0, p="inf", steps=10)
        via_rec = robust_accuracy(self.rec, pgd_first, self.data, cfg)
        direct = float(
            np.mean(
                [pgd(self.model, ex.x, ex.y, cfg).l_after for ex in self.data]
            )
        )
        assert via_rec == direct

    def test_threads_do_not_change_the_result(self):
        cfg = AttackConfig(eps=1.0, p="inf", steps=5, init="random")
        serial = robust_accuracy(self.rec, pgd_first, self.data, cfg, master_seed=3)
        threaded = robust_accuracy(
            self.rec, pgd_first, self.data, cfg, master_seed=3, threads=3
        )
        assert serial == threaded


class TestCrossRobustnessMatrix:
    def test_zero_radius_columns_are_clean_accuracies(self):
        models = [blc([1.0, 0.0]), blc([0.0, 1.0])]
        data = [
            LabeledExample(np.array([1.0, 1.0]), 1),
            LabeledExample(np.array([1.0, -1.0]), 1),
        ]
        cfg = AttackConfig(eps=0.0, p="inf", steps=2)
        matrix = cross_robustness_matrix(models, pgd_first, data, cfg)
        clean = [
            float(np.mean([m.decide(ex.x) == ex.y for ex in data])) for m in models
        ]
        for j in range(2):
            assert_allclose(matrix[:, j], clean)

    def test_reproducible_under_fixed_seed(self):
        rng = np.random.default_rng(5)
        models = [blc(rng.standard_normal(2)) for _ in range(2)]
        data = [LabeledExample(rng.standard_normal(2), 1) for _ in range(4)]
        cfg = AttackConfig(eps=0.5, p="inf", steps=4, init="random")
        m1 = cross_robustness_matrix(models, pgd_first, data, cfg, master_seed=9)
        m2 = cross_robustness_matrix(models, pgd_first, data, cfg, master_seed=9)
        assert_array_equal(m1, m2)
        m3 = cross_robustness_matrix(
            models, pgd_first, data, cfg, master_seed=9, threads=2
        )
        assert_array_equal(m1, m3)


class TestDatasetFiles:
    def test_round_trip(self, tmp_path):
        data = [
            LabeledExample(np.array([0.25, -1.5]), 1),
            LabeledExample(np.array([1.0 / 3.0, 2.0]), 0),
        ]
        path = tmp_path / "data.json"
        save_dataset(data, path)
        loaded = load_dataset(path)
        assert len(loaded) == 2
        for a, b in zip(data, loaded):
            assert_array_equal(a.x, b.x)
            assert a.y == b.y

    def test_malformed_record_is_reported(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('[{"x": [1.0]}]')
        with pytest.raises(ValueError, match="record 0"):
            load_dataset(path)
