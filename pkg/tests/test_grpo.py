import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lexpipe.grpo import (
    GroupTooSmall,
    GrpoConfig,
    GrpoLog,
    NonFiniteRatio,
    SupportMismatch,
    advantages,
    categorical_kl,
    clipped_term,
    kl_divergence,
    make_group,
    surrogate,
    total_variation,
    train_grpo,
    visited_contexts,
)
from lexpipe.policy import ToyPolicy, Vocab, log_prob


def policy(seed: int = 0, V: int = 5) -> ToyPolicy:
    vocab = Vocab([f"t{i}" for i in range(V - 2)])
    return ToyPolicy(vocab, np.random.default_rng(seed).normal(size=(V, V)))


class TestAdvantages:
    def test_examples(self):
        np.testing.assert_allclose(advantages([1, 2, 3]), [-math.sqrt(1.5), 0, math.sqrt(1.5)])
        assert np.array_equal(advantages([5, 5, 5]), np.zeros(3))

    def test_too_small(self):
        with pytest.raises(GroupTooSmall):
            advantages([1.0])
        with pytest.raises(GroupTooSmall):
            GrpoConfig(G=1)

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=16))
    def test_standardized(self, r):
        a = advantages(r)
        assert abs(a.sum()) < 1e-9
        if np.any(a):
            assert abs(np.mean(a**2) - 1) < 1e-9


class TestClipped:
    @pytest.mark.parametrize(
        "ratio,adv,expected",
        [(2.0, 1.0, 1.2), (2.0, -1.0, -2.0), (0.5, -1.0, -0.8), (0.5, 1.0, 0.5), (1.0, 2.0, 2.0)],
    )
    def test_examples(self, ratio, adv, expected):
        assert math.isclose(float(clipped_term(ratio, adv, 0.2)), expected)

    @given(st.floats(0, 10), st.floats(-5, 5), st.floats(0.01, 0.99))
    def test_pessimistic(self, ratio, adv, eps):
        t = float(clipped_term(ratio, adv, eps))
        assert t <= ratio * adv + 1e-12


class TestKl:
    def test_self_zero(self):
        p = policy()
        assert kl_divergence(p, p, range(5)) == 0.0

    def test_support_mismatch(self):
        with pytest.raises(SupportMismatch):
            categorical_kl(np.array([0.5, 0.5]), np.array([1.0, 0.0]))

    def test_zero_mass_terms_vanish(self):
        assert math.isclose(float(categorical_kl(np.array([1.0, 0.0]), np.array([0.5, 0.5]))), math.log(2))

    def test_empty_contexts(self):
        assert kl_divergence(policy(0), policy(1), []) == 0.0

    def test_vocab_mismatch(self):
        with pytest.raises(ValueError):
            kl_divergence(policy(0, 5), policy(0, 6), [0])

    @given(st.integers(0, 1000), st.integers(0, 1000))
    def test_nonnegative(self, a, b):
        assert kl_divergence(policy(a), policy(b), range(5)) >= 0


class TestSurrogate:
    def test_nonfinite_ratio(self):
        p = policy()
        g = make_group([], [[2], [3]], [-1e6, log_prob(p, [], [3])], [1.0, 0.0])
        with pytest.raises(NonFiniteRatio):
            surrogate(g, p, GrpoConfig(beta=0.0))

    def test_on_policy_value(self):
        # at pi = pi_old every ratio is 1 and the objective is mean(A) = 0
        p = policy(3)
        outs = [[2, 1], [3, 1], [4, 1]]
        g = make_group([], outs, [log_prob(p, [], o) for o in outs], [0.0, 1.0, 2.0])
        obj, grad = surrogate(g, p, GrpoConfig(beta=0.0))
        assert abs(obj) < 1e-12 and np.linalg.norm(grad) > 0

    def test_flat_rewards_give_only_kl_gradient(self):
        p, ref = policy(1), policy(2)
        outs = [[2, 1], [3, 1]]
        g = make_group([], outs, [log_prob(p, [], o) for o in outs], [1.0, 1.0])
        obj, grad = surrogate(g, p, GrpoConfig(beta=0.5), ref)
        assert math.isclose(obj, -0.5 * kl_divergence(p, ref, g.contexts(p)))
        touched = set(np.flatnonzero(np.abs(grad).sum(axis=1)))
        assert touched <= set(g.contexts(p))

    def test_visited_contexts(self):
        p = policy()
        assert visited_contexts(p, [3], [[2, 4], [1]]) == [2, 3]
        assert visited_contexts(p, [], [[]]) == []


class TestTraining:
    def test_constant_reward_with_zero_beta_is_a_no_op(self):
        p = policy(4)
        before = p.logits.copy()
        train_grpo(p, lambda o, q: 1.0, GrpoConfig(G=4, beta=0.0, lr=1.0, updates=5))
        assert np.array_equal(p.logits, before)

    def test_large_beta_stays_close(self):
        p = policy(5)
        ref = p.copy()
        reward = lambda o, q: float(o.startswith("t0"))
        train_grpo(p, reward, GrpoConfig(G=8, beta=1e3, lr=1e-4, updates=30, max_len=4))
        assert total_variation(p, ref).max() < 0.01

    def test_reward_increases(self):
        p = policy(6)
        reward = lambda o, q: float(o.startswith("t0"))
        _, log = train_grpo(p, reward, GrpoConfig(G=8, beta=0.0, lr=1.0, updates=150, max_len=3))
        assert np.mean(log.mean_reward[-20:]) > np.mean(log.mean_reward[:20]) + 0.3

    def test_seeded(self):
        reward = lambda o, q: float(len(o))
        a, la = train_grpo(policy(7), reward, GrpoConfig(G=4, updates=10))
        b, lb = train_grpo(policy(7), reward, GrpoConfig(G=4, updates=10))
        assert la.mean_reward == lb.mean_reward and np.array_equal(a.logits, b.logits)

    def test_log_csv(self, tmp_path):
        log = GrpoLog([0.1, 0.2], [1.0, 0.5], [0.0, 0.01])
        log.write_csv(tmp_path / "g.csv")
        assert (tmp_path / "g.csv").read_text().splitlines() == [
            "step,objective,mean_reward,kl", "0,0.1,1.0,0.0", "1,0.2,0.5,0.01",
        ]


def test_config_validation():
    with pytest.raises(ValueError):
        GrpoConfig(eps=0)
    with pytest.raises(ValueError):
        GrpoConfig(beta=-1)
