"""Rewards, rollouts, value estimates and the policy-switching rule.

Values are finite-horizon sums of discounted per-dispatch rewards. A
rollout that starts with a policy continues greedily: at every later
dispatch it takes whichever policy has the best value-to-go (an exhaustive
lookahead over the remaining dispatches), or does nothing once the system is
acceptable. Because a NoAction step from an acceptable, quiescent state
reproduces that state, padding a finished sequence with its last reward is
exact.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .case import LossMetrics
from .errors import PolicyUnavailableError, UsageError
from .protection import RasPolicy, TripEvent
from .simulator import Simulator

TABLE_COMPATIBLE = "table_compatible"
EQ4_LITERAL = "eq4_literal"
REWARD_MODES = (TABLE_COMPATIBLE, EQ4_LITERAL)
NEG_INF = -math.inf


@dataclass(frozen=True)
class SwitchingConfig:
    dispatch_interval: float = 5.0
    horizon_dispatches: int = 3
    beta: float = 1.0
    rollouts_per_policy: int = 1
    epsilon: float = 0.0
    reward_mode: str = TABLE_COMPATIBLE
    load_noise_sigma: float = 0.0
    workers: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise UsageError("beta must lie in [0, 1]")
        if self.horizon_dispatches < 1:
            raise UsageError("horizon_dispatches must be >= 1")
        if self.rollouts_per_policy < 1:
            raise UsageError("rollouts_per_policy must be >= 1")
        if self.epsilon < 0 or self.load_noise_sigma < 0:
            raise UsageError("epsilon and load_noise_sigma must be >= 0")
        if not self.dispatch_interval > 0:
            raise UsageError("dispatch_interval must be positive")
        if self.reward_mode not in REWARD_MODES:
            raise UsageError(f"reward_mode must be one of {REWARD_MODES}")
        if self.workers < 1:
            raise UsageError("workers must be >= 1")

    def to_dict(self) -> dict:
        # worker count never changes results, so it is not part of the record
        return {
            "dispatch_interval": self.dispatch_interval,
            "horizon_dispatches": self.horizon_dispatches,
            "beta": self.beta,
            "rollouts_per_policy": self.rollouts_per_policy,
            "epsilon": self.epsilon,
            "reward_mode": self.reward_mode,
            "load_noise_sigma": self.load_noise_sigma,
        }


@dataclass(frozen=True)
class ValueEstimate:
    policy: RasPolicy
    value: float
    rollouts: int
    spread: float = 0.0
    final_reward: float = NEG_INF

    @property
    def feasible(self) -> bool:
        return self.value > NEG_INF

    def to_dict(self) -> dict:
        return {
            "policy": self.policy.label,
            "feasible": self.feasible,
            "value": _num(self.value),
            "final_reward": _num(self.final_reward),
            "rollouts": self.rollouts,
            "spread": _num(self.spread),
        }


@dataclass(frozen=True)
class RewardRecord:
    clock: float
    operational_load: float
    saved: bool
    reward: float

    def to_dict(self) -> dict:
        return {
            "clock": round(self.clock, 9),
            "operational_load": self.operational_load,
            "saved": self.saved,
            "reward": self.reward,
        }


@dataclass
class DispatchRecord:
    clock: float
    policy: RasPolicy
    estimates: list[ValueEstimate]
    reward: RewardRecord
    losses: LossMetrics
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "clock": round(self.clock, 9),
            "policy": self.policy.to_dict(),
            "estimates": [e.to_dict() for e in self.estimates],
            "reward": self.reward.to_dict(),
            "losses": dict(zip(("buses", "generators", "loads", "lines"), self.losses.as_tuple())),
            "note": self.note,
        }


@dataclass
class SimulationTrace:
    """Everything needed to report and replay one run."""

    contingency: Any
    events: list[TripEvent] = field(default_factory=list)
    dispatches: list[DispatchRecord] = field(default_factory=list)
    saved: bool = False
    operational_load: float = 0.0
    cumulative_value: float = 0.0
    final_reward: float = 0.0
    feasible: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def sequence(self) -> tuple[str, ...]:
        return tuple(d.policy.label for d in self.dispatches)

    def to_dict(self) -> dict:
        spec = self.contingency
        return {
            "meta": self.meta,
            "contingency": spec.to_dict() if hasattr(spec, "to_dict") else spec,
            "events": [e.to_dict() for e in self.events],
            "dispatches": [d.to_dict() for d in self.dispatches],
            "final": {
                "feasible": self.feasible,
                "saved": self.saved,
                "operational_load": self.operational_load,
                "cumulative_value": _num(self.cumulative_value),
                "final_reward": _num(self.final_reward),
            },
        }


def _num(x: float):
    """JSON-safe number: infinities become None."""
    return None if math.isinf(x) or math.isnan(x) else x


def reward(l_t: float, l_prev: float, saved: bool, l_total: float, mode: str = TABLE_COMPATIBLE) -> float:
    """Per-dispatch reward: half load term, half saved flag."""
    if not l_total > 0:
        raise UsageError("l_total must be positive")
    b = 0.5 if saved else 0.0
    if mode == TABLE_COMPATIBLE:
        return l_t / (2.0 * l_total) + b
    if mode == EQ4_LITERAL:
        return (l_t - l_prev) / (2.0 * l_total) + b
    raise UsageError(f"unknown reward mode {mode!r}")


def rollout_rng(seed: int, policy_index: int, rollout_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, policy_index, rollout_index]))


# ---------------------------------------------------------------------------
# lookahead


class _Lookahead:
    """Exact value-to-go over a deterministic simulator, memoized per world."""

    def __init__(self, sim: Simulator, policy_set: Sequence[RasPolicy], cfg: SwitchingConfig):
        self.sim = sim
        self.policies = list(policy_set)
        self.cfg = cfg
        self.noop = RasPolicy.no_action()
        self._steps: dict = {}
        self._cont: dict = {}

    def step(self, node, policy: RasPolicy):
        """(next node, reward, events); raises PolicyUnavailableError."""
        k = (self.sim.key(node), policy)
        if k not in self._steps:
            try:
                nxt, events = self.sim.step(node, policy, self.cfg.dispatch_interval)
            except PolicyUnavailableError as exc:
                self._steps[k] = exc
            else:
                r = reward(self.sim.load(nxt), self.sim.load(node), self.sim.saved(nxt),
                           self.sim.l_total, self.cfg.reward_mode)
                self._steps[k] = (nxt, r, events)
        out = self._steps[k]
        if isinstance(out, Exception):
            raise out
        return out

    def q(self, node, policy: RasPolicy, remaining: int) -> tuple[float, float]:
        """(value, last reward) of ``policy`` now, best continuation afterwards."""
        try:
            nxt, r, _ = self.step(node, policy)
        except PolicyUnavailableError:
            return NEG_INF, NEG_INF
        if remaining <= 1:
            return r, r
        v, last = self.continuation(nxt, remaining - 1)
        return r + self.cfg.beta * v, last

    def decide(self, node, remaining: int) -> tuple[RasPolicy | None, list[tuple[float, float]]]:
        """The continuation's choice at ``node``: None means do nothing."""
        if self.sim.acceptable(node):
            return None, []
        scores = [self.q(node, p, remaining) for p in self.policies]
        best = _argmax([s[0] for s in scores])
        return (None if best is None else self.policies[best]), scores

    def continuation(self, node, remaining: int) -> tuple[float, float]:
        k = (self.sim.key(node), remaining)
        if k not in self._cont:
            policy, scores = self.decide(node, remaining)
            if policy is None:
                self._cont[k] = self.q(node, self.noop, remaining)
            else:
                self._cont[k] = scores[self.policies.index(policy)]
        return self._cont[k]


def _argmax(values: Sequence[float]) -> int | None:
    """Index of the largest finite value, lowest index on ties; None if all are -inf."""
    best = None
    for i, v in enumerate(values):
        if v > NEG_INF and (best is None or v > values[best]):
            best = i
    return best


def estimate_value(
    sim: Simulator,
    start,
    policy: RasPolicy,
    cfg: SwitchingConfig,
    seed: int,
    *,
    policy_set: Sequence[RasPolicy] | None = None,
    policy_index: int = 0,
    horizon: int | None = None,
) -> ValueEstimate:
    """Mean discounted value of ``policy`` followed by greedy switching.

    With no load noise every rollout is the same deterministic world, so it
    is evaluated once and the estimate carries ``rollouts_per_policy``.
    """
    policy_set = list(policy_set) if policy_set is not None else [policy]
    horizon = cfg.horizon_dispatches if horizon is None else horizon
    n = cfg.rollouts_per_policy
    draws = 1 if cfg.load_noise_sigma == 0 else n
    values, finals = [], []
    for k in range(draws):
        world = sim.perturb(start, rollout_rng(seed, policy_index, k), cfg.load_noise_sigma)
        v, last = _Lookahead(sim, policy_set, cfg).q(world, policy, horizon)
        if v == NEG_INF:
            return ValueEstimate(policy, NEG_INF, n, 0.0, NEG_INF)
        values.append(v)
        finals.append(last)
    spread = float(np.std(values, ddof=1)) if draws > 1 else 0.0
    return ValueEstimate(policy, float(np.mean(values)), n, spread, float(np.mean(finals)))


def switch(
    sim: Simulator,
    start,
    policy_set: Sequence[RasPolicy],
    cfg: SwitchingConfig,
    seed: int,
    *,
    horizon: int | None = None,
) -> tuple[RasPolicy, list[ValueEstimate]]:
    """Pick the policy with the highest estimate (lowest index on ties).

    If every policy is infeasible, NoAction is returned; callers can detect
    that case from the estimates.
    """
    policy_set = list(policy_set)
    if not policy_set:
        raise UsageError("policy_set must be non-empty")

    def one(i: int) -> ValueEstimate:
        return estimate_value(sim, start, policy_set[i], cfg, seed,
                              policy_set=policy_set, policy_index=i, horizon=horizon)

    idx = range(len(policy_set))
    if cfg.workers > 1 and len(policy_set) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            estimates = list(pool.map(one, idx))
    else:
        estimates = [one(i) for i in idx]
    best = _argmax([e.value for e in estimates])
    if best is None:
        return RasPolicy.no_action(), estimates
    return policy_set[best], estimates


def check_theorem1(estimates: Sequence[ValueEstimate | float], switched_value: float, epsilon: float) -> bool:
    """True iff the switched value is within 2*epsilon of the best base estimate."""
    if not estimates:
        raise UsageError("estimates must be non-empty")
    vals = [e.value if isinstance(e, ValueEstimate) else float(e) for e in estimates]
    return switched_value >= max(vals) - 2.0 * epsilon


def rollout(
    sim: Simulator,
    start,
    policy_sequence: Sequence[RasPolicy],
    cfg: SwitchingConfig,
    seed: int,
    *,
    policy_index: int = 0,
    rollout_index: int = 0,
) -> SimulationTrace:
    """Simulate one fixed sequence over the full horizon.

    At each dispatch the next listed policy is applied unless the system is
    already acceptable, in which case that step is not needed and nothing is
    done. Once the list is exhausted the controller does nothing. An
    unavailable policy ends the trace as infeasible with value -inf.
    """
    if len(policy_sequence) > cfg.horizon_dispatches:
        raise UsageError("policy_sequence is longer than the horizon")
    node = sim.perturb(start, rollout_rng(seed, policy_index, rollout_index), cfg.load_noise_sigma)
    trace = SimulationTrace(contingency=None)
    noop = RasPolicy.no_action()
    value, last = 0.0, 0.0
    for t in range(cfg.horizon_dispatches):
        listed = policy_sequence[t] if t < len(policy_sequence) else None
        policy, note = noop, ""
        if listed is not None:
            if sim.acceptable(node):
                note = "not needed"
            else:
                policy = listed
        clock = sim.clock(node)
        prev = sim.load(node)
        try:
            node, events = sim.step(node, policy, cfg.dispatch_interval)
        except PolicyUnavailableError as exc:
            trace.feasible = False
            trace.dispatches.append(DispatchRecord(
                clock, policy, [], RewardRecord(clock, prev, False, NEG_INF), sim.metrics(node),
                note=f"infeasible: {exc}",
            ))
            value = last = NEG_INF
            break
        trace.events += events
        last = reward(sim.load(node), prev, sim.saved(node), sim.l_total, cfg.reward_mode)
        value += cfg.beta ** t * last
        trace.dispatches.append(DispatchRecord(
            clock, policy, [], RewardRecord(sim.clock(node), sim.load(node), sim.saved(node), last),
            sim.metrics(node), note=note,
        ))
    trace.saved = trace.feasible and sim.saved(node)
    trace.operational_load = sim.load(node)
    trace.cumulative_value = value
    trace.final_reward = last
    return trace
