"""Simulator backends used by the switching controller.

A backend maps an opaque node (a point in the simulated history) and a
policy to the next node one dispatch interval later. The native backend
drives the power-flow and relay models; other backends (the scripted oracle
in :mod:`rasswitch.experiment`) implement the same small protocol.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Hashable, Protocol

import numpy as np

from .case import LossMetrics, NetworkCase, SystemState, loss_metrics, total_operational_load
from .powerflow import PowerFlowSolution, SolverOptions
from .protection import (
    NO_ACTION, RasPolicy, RelayClock, RelayOptions, TripEvent, _pending, apply_policy,
    is_stable_and_acceptable,
)


class Simulator(Protocol):
    l_total: float

    def load(self, node: Any) -> float: ...

    def saved(self, node: Any) -> bool: ...

    def acceptable(self, node: Any) -> bool: ...

    def metrics(self, node: Any) -> LossMetrics: ...

    def step(self, node: Any, policy: RasPolicy, duration: float) -> tuple[Any, list[TripEvent]]: ...

    def perturb(self, node: Any, rng: np.random.Generator, sigma: float) -> Any: ...

    def key(self, node: Any) -> Hashable: ...

    def clock(self, node: Any) -> float: ...


@dataclass(frozen=True)
class NativeNode:
    state: SystemState
    solution: PowerFlowSolution


class NativeSimulator:
    """Quasi-steady-state engine: policy action, then relay scans until the next dispatch."""

    def __init__(
        self,
        case: NetworkCase,
        relay: RelayOptions | None = None,
        solver: SolverOptions | None = None,
    ):
        self.case = case
        self.relay = relay or RelayOptions()
        self.solver = solver or SolverOptions()
        self.l_total = case.nominal_load
        self.baseline = SystemState.initial(case)

    def node(self, state: SystemState) -> NativeNode:
        return NativeNode(state, RelayClock(self.relay, self.solver).solve(state))

    def load(self, node: NativeNode) -> float:
        return total_operational_load(node.state)

    def saved(self, node: NativeNode) -> bool:
        return is_stable_and_acceptable(node.state, node.solution)

    def acceptable(self, node: NativeNode) -> bool:
        """Saved and nothing left for the relays to do."""
        return self.saved(node) and not _pending(node.state, node.solution, self.relay)

    def metrics(self, node: NativeNode) -> LossMetrics:
        return loss_metrics(node.state, self.baseline)

    def clock(self, node: NativeNode) -> float:
        return node.state.clock

    def key(self, node: NativeNode) -> bytes:
        return node.state.fingerprint()

    def step(self, node: NativeNode, policy: RasPolicy, duration: float) -> tuple[NativeNode, list[TripEvent]]:
        state, events = apply_policy(node.state, policy)
        if policy.kind == NO_ACTION and self.acceptable(node):
            # quiescent and nothing applied: the state only ages
            state.clock += duration
            return NativeNode(state, node.solution), events
        state, more, sol = RelayClock(self.relay, self.solver).advance(state, duration)
        return NativeNode(state, sol), events + more

    def perturb(self, node: NativeNode, rng: np.random.Generator, sigma: float) -> NativeNode:
        if sigma <= 0:
            return node
        state = node.state.copy()
        factor = np.clip(1.0 + sigma * rng.standard_normal(len(state.load_scale)), 0.0, None)
        state.load_scale = np.clip(state.load_scale * factor, 0.0, 1.0)
        return self.node(state)
