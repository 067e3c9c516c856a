"""Environment generator tests: sizes, thresholds, dynamics, reproducibility."""

from __future__ import annotations

import numpy as np
import pytest

from safe_lcmdp.cmdp import dp_optimal, env_to_json, evaluate_policy
from safe_lcmdp.envs import (
    FAST,
    SLOW,
    derive_safe_policy,
    gen_linear,
    gen_streaming,
    gen_tabular,
    generate,
)
from safe_lcmdp.exceptions import InvalidInputError, NoSlackError


class TestTabular:
    def test_sizes_and_feature_norms(self):
        cm, safe = gen_tabular(1)
        assert (cm.num_states, cm.num_actions, cm.H, cm.d) == (5, 3, 4, 15)
        norms = np.linalg.norm(cm.features, axis=2)
        assert np.allclose(norms, 1.0, atol=0.0)

    def test_threshold_is_exactly_point_six_of_max(self):
        for seed in range(1, 6):
            cm, safe = gen_tabular(seed)
            _, max_u = dp_optimal(cm, cm.utilities)
            assert cm.b == pytest.approx(0.6 * max_u, abs=0.0)
            assert safe.slack == pytest.approx(0.4 * max_u, abs=1e-12)

    def test_rewards_are_binary(self):
        cm, _ = gen_tabular(2)
        assert set(np.unique(cm.rewards)) <= {0.0, 1.0}
        assert set(np.unique(cm.utilities)) <= {0.0, 1.0}


class TestStreaming:
    def test_clamping_dynamics(self):
        cm, _ = gen_streaming(1)
        # state 0 cannot go below 0 and state L cannot exceed L
        assert cm.transitions[0, 0, SLOW, :][0] + cm.transitions[0, 0, SLOW, 1] == pytest.approx(1.0, abs=1e-12)
        assert np.all(cm.transitions[:, 0, :, 2:] == 0.0)
        L = cm.num_states - 1
        assert np.all(cm.transitions[:, L, :, : L - 1] == 0.0)

    def test_reward_and_utility_structure(self):
        cm, _ = gen_streaming(2)
        # reward marks buffer >= 0.3 * L, i.e. states 2..5; utility marks slow
        for s in range(cm.num_states):
            expected = 1.0 if s >= 2 else 0.0
            assert np.all(cm.rewards[:, s, :] == expected)
        assert np.all(cm.utilities[:, :, SLOW] == 1.0)
        assert np.all(cm.utilities[:, :, FAST] == 0.0)

    def test_threshold_and_slack_exact(self):
        cm, safe = gen_streaming(3)
        # always-slow earns utility 1 per step: max utility = H = 4, b = 2.4
        assert cm.b == pytest.approx(2.4, abs=0.0)
        assert safe.slack == pytest.approx(1.6, abs=1e-12)
        assert np.allclose(safe.policy.probs[:, :, SLOW], 1.0)
        _, v_u = evaluate_policy(cm, safe.policy, cm.utilities)
        assert v_u == pytest.approx(4.0, abs=1e-12)

    def test_initial_state_is_empty_buffer(self):
        cm, _ = gen_streaming(4)
        assert cm.s1 == 0


class TestLinear:
    def test_sizes_and_threshold_factor(self):
        cm, safe = gen_linear(1)
        assert (cm.num_states, cm.num_actions, cm.d, cm.H) == (100, 3, 5, 4)
        _, max_u = dp_optimal(cm, cm.utilities)
        assert cm.b == pytest.approx(0.68 * max_u, rel=0.0, abs=1e-12)

    def test_rows_are_distributions(self):
        cm, _ = gen_linear(2)
        sums = cm.transitions.sum(axis=3)
        assert np.max(np.abs(sums - 1.0)) < 1e-9
        assert cm.transitions.min() >= -1e-15

    def test_custom_sizes(self):
        cm, _ = gen_linear(3, num_states=20, d=4)
        assert (cm.num_states, cm.d) == (20, 4)

    def test_rejects_degenerate_dimensions(self):
        with pytest.raises(InvalidInputError):
            gen_linear(1, num_states=4, d=5)


class TestDeriveSafePolicy:
    def test_slack_matches_exact_evaluation(self):
        for gen, seed in ((gen_tabular, 1), (gen_streaming, 2), (gen_linear, 3)):
            cm, safe = gen(seed)
            _, v_u = evaluate_policy(cm, safe.policy, cm.utilities)
            assert v_u - cm.b == pytest.approx(safe.slack, abs=1e-10)

    def test_no_slack_rejected(self, rng):
        cm, _ = gen_tabular(1)
        _, max_u = dp_optimal(cm, cm.utilities)
        flat = type(cm)(
            H=cm.H, features=cm.features, transitions=cm.transitions,
            theta_r=cm.theta_r, theta_u=cm.theta_u, b=max_u, s1=cm.s1,
        )
        with pytest.raises(NoSlackError):
            derive_safe_policy(flat)


class TestReproducibility:
    def test_identical_seed_bit_identical_serialization(self):
        for gen in (gen_tabular, gen_streaming):
            a = env_to_json(*gen(11))
            b = env_to_json(*gen(11))
            assert a == b
        a = env_to_json(*gen_linear(11, num_states=20, d=4))
        b = env_to_json(*gen_linear(11, num_states=20, d=4))
        assert a == b

    def test_different_seeds_differ(self):
        assert env_to_json(*gen_tabular(1)) != env_to_json(*gen_tabular(2))

    def test_generate_dispatch(self):
        cm, _ = generate("streaming", 5)
        assert cm.num_states == 6
        with pytest.raises(InvalidInputError):
            generate("nonsense", 1)
