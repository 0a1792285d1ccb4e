"""Small deterministic MDPs for checking the policy-switching guarantee exactly.

Each base policy is a state -> action map. Values are finite-horizon sums
computed by backward recursion, which enumerates every (state, steps-to-go)
pair exactly. The switching policy picks, at each state and steps-to-go,
the base policy with the highest (optionally noisy) value estimate and takes
that policy's action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MockMDP:
    rewards: np.ndarray      # (states, actions)
    transitions: np.ndarray  # (states, actions) -> next state
    policies: np.ndarray     # (policies, states) -> action
    horizon: int

    @property
    def n_states(self) -> int:
        return self.rewards.shape[0]


def random_mock_mdp(rng: np.random.Generator, max_states: int = 6, max_policies: int = 3,
                    max_actions: int = 3, max_horizon: int = 5) -> MockMDP:
    s = int(rng.integers(1, max_states + 1))
    a = int(rng.integers(1, max_actions + 1))
    k = int(rng.integers(1, max_policies + 1))
    return MockMDP(
        rewards=rng.random((s, a)),
        transitions=rng.integers(0, s, size=(s, a)),
        policies=rng.integers(0, a, size=(k, s)),
        horizon=int(rng.integers(1, max_horizon + 1)),
    )


def policy_values(mdp: MockMDP) -> np.ndarray:
    """V[i, h, s]: value of following base policy i for h steps from s."""
    k, s = mdp.policies.shape
    V = np.zeros((k, mdp.horizon + 1, s))
    idx = np.arange(s)
    for i in range(k):
        act = mdp.policies[i]
        r, nxt = mdp.rewards[idx, act], mdp.transitions[idx, act]
        for h in range(1, mdp.horizon + 1):
            V[i, h] = r + V[i, h - 1][nxt]
    return V


def switching_values(
    mdp: MockMDP, noise: np.ndarray | None = None, noisy_steps: int | None = None
) -> np.ndarray:
    """W[h, s]: realized value of the switching policy for h steps from s.

    ``noise`` has the shape of :func:`policy_values` and is added to the
    estimates the switch sees (not to the realized rewards). With
    ``noisy_steps=k`` only the first k decisions of a horizon-length run see
    noise; later decisions use exact values. Each noisy decision can cost up
    to 2*eps, so the realized loss against the best base policy is bounded by
    2*eps*k, and only k=1 gives the flat 2*eps bound.
    """
    V = policy_values(mdp)
    est = V if noise is None else V + noise
    first_exact = 0 if noisy_steps is None else mdp.horizon - noisy_steps
    s = mdp.n_states
    W = np.zeros((mdp.horizon + 1, s))
    for h in range(1, mdp.horizon + 1):
        table = V if h <= first_exact else est
        for x in range(s):
            i = int(np.argmax(table[:, h, x]))
            a = mdp.policies[i, x]
            W[h, x] = mdp.rewards[x, a] + W[h - 1, mdp.transitions[x, a]]
    return W


def trajectory_value(mdp: MockMDP, start: int, chooser) -> float:
    """Walk one trajectory, asking ``chooser(h, state)`` for the action; brute-force check."""
    total, x = 0.0, start
    for h in range(mdp.horizon, 0, -1):
        a = chooser(h, x)
        total += mdp.rewards[x, a]
        x = mdp.transitions[x, a]
    return float(total)
