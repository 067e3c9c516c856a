"""Shared test fixtures and small random-model builders."""

from __future__ import annotations

import numpy as np
import pytest

from safe_lcmdp.cmdp import ExplicitPolicy, LinearCmdp


def random_tabular_cmdp(
    rng: np.random.Generator,
    S: int = 5,
    A: int = 3,
    H: int = 4,
    b: float = 0.0,
    alpha: float = 0.5,
) -> LinearCmdp:
    """Random dense CMDP with one-hot features and Dirichlet(alpha) rows."""
    d = S * A
    transitions = rng.gamma(alpha, size=(H, S, A, S))
    transitions /= transitions.sum(axis=3, keepdims=True)
    rewards = rng.random((H, S, A))
    utilities = rng.random((H, S, A))
    return LinearCmdp(
        H=H,
        features=np.eye(d).reshape(S, A, d),
        transitions=transitions,
        theta_r=rewards.reshape(H, d),
        theta_u=utilities.reshape(H, d),
        b=b,
        s1=int(rng.integers(S)),
    )


def random_policy(rng: np.random.Generator, H: int, S: int, A: int) -> ExplicitPolicy:
    probs = rng.gamma(1.0, size=(H, S, A))
    probs /= probs.sum(axis=2, keepdims=True)
    return ExplicitPolicy(probs)


def single_chain_cmdp(H: int = 4, reward: float = 1.0) -> LinearCmdp:
    """One state, one action, constant reward: values are analytic."""
    return LinearCmdp(
        H=H,
        features=np.ones((1, 1, 1)),
        transitions=np.ones((H, 1, 1, 1)),
        theta_r=np.full((H, 1), reward),
        theta_u=np.full((H, 1), reward),
        b=0.0,
        s1=0,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


# ---------------------------------------------------------------------------
# acceptance reporting: one [PASS]/[FAIL] line per criterion, echoed in the
# terminal summary so the lines survive pytest's output capture
# ---------------------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
