"""Protective relays and the two base remedial action policies.

Relays run at a fixed cadence (0.1 s by default). A bus whose voltage stays
outside its band for ``voltage_trip_delay_steps`` consecutive scans loses
every attached load and generator; a branch above its secure rating for
``overload_trip_delay_steps`` scans is opened; an island whose power flow
fails is de-energized at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .case import SystemState
from .errors import PolicyUnavailableError, UsageError
from .powerflow import PowerFlowSolution, SolverOptions, branch_loading, refresh_topology, solve_powerflow

LOAD_SHED = "LoadShed"
ISLAND = "Island"
NO_ACTION = "NoAction"

CAUSES = (
    "undervoltage", "overvoltage", "overload", "island_collapse", "contingency", "islanding_action",
)


@dataclass(frozen=True)
class RasPolicy:
    kind: str
    shed_ratio: float | None = None
    description: str = ""

    def __post_init__(self) -> None:
        if self.kind not in (LOAD_SHED, ISLAND, NO_ACTION):
            raise UsageError(f"unknown policy kind {self.kind!r}")
        if (self.shed_ratio is not None) != (self.kind == LOAD_SHED):
            raise UsageError("shed_ratio is required for LoadShed and forbidden otherwise")
        if self.kind == LOAD_SHED and not 0.0 < self.shed_ratio < 1.0:
            raise UsageError("shed_ratio must lie in (0, 1)")

    @classmethod
    def load_shed(cls, ratio: float = 0.2) -> "RasPolicy":
        return cls(LOAD_SHED, ratio, f"uniform load shedding, R={ratio:g}")

    @classmethod
    def island(cls) -> "RasPolicy":
        return cls(ISLAND, None, "next pre-computed islanding level")

    @classmethod
    def no_action(cls) -> "RasPolicy":
        return cls(NO_ACTION, None, "no remedial action")

    @property
    def label(self) -> str:
        return {LOAD_SHED: "LS", ISLAND: "I", NO_ACTION: "NA"}[self.kind]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "shed_ratio": self.shed_ratio, "label": self.label}


@dataclass(frozen=True)
class RelayOptions:
    relay_step: float = 0.1
    voltage_trip_delay_steps: int = 3
    overload_trip_delay_steps: int = 3

    def __post_init__(self) -> None:
        if not self.relay_step > 0:
            raise UsageError("relay_step must be positive")
        if self.voltage_trip_delay_steps < 1 or self.overload_trip_delay_steps < 1:
            raise UsageError("trip delays must be >= 1 step")


@dataclass(frozen=True)
class TripEvent:
    clock: float
    element: tuple[str, int]
    cause: str

    def to_dict(self) -> dict:
        return {"clock": round(self.clock, 9), "kind": self.element[0], "id": self.element[1], "cause": self.cause}


def service_changes(before: SystemState, after: SystemState, cause: str) -> list[TripEvent]:
    """One event per element that went out of service between two states."""
    old, new = before.out_of_service(), after.out_of_service()
    events = []
    for kind in ("branch", "generator", "load", "bus"):
        for eid in sorted(new[kind] - old[kind]):
            events.append(TripEvent(after.clock, (kind, eid), cause))
    return events


# ---------------------------------------------------------------------------
# base policies


def apply_load_shedding(state: SystemState, shed_ratio: float) -> SystemState:
    """Scale every in-service load by (1 - shed_ratio)."""
    if not 0.0 < shed_ratio < 1.0:
        raise UsageError("shed_ratio must lie in (0, 1)")
    out = state.copy()
    out.load_scale[out.load_on] *= 1.0 - shed_ratio
    return out


def apply_islanding(state: SystemState) -> SystemState:
    """Open the next islanding level's tie branches and rebuild islands."""
    levels = state.case.islanding_scheme.levels
    if state.islanding_level_applied >= len(levels):
        raise PolicyUnavailableError(
            f"no islanding level {state.islanding_level_applied + 1} (scheme has {len(levels)})"
        )
    level = levels[state.islanding_level_applied]
    out = state.open_branches(level.tie_branches)
    out.islanding_level_applied += 1
    return refresh_topology(out)


def apply_policy(state: SystemState, policy: RasPolicy) -> tuple[SystemState, list[TripEvent]]:
    if policy.kind == LOAD_SHED:
        return apply_load_shedding(state, policy.shed_ratio), []
    if policy.kind == ISLAND:
        out = apply_islanding(state)
        return out, service_changes(state, out, "islanding_action")
    return state.copy(), []


def islanding_available(state: SystemState) -> bool:
    return state.islanding_level_applied < len(state.case.islanding_scheme.levels)


# ---------------------------------------------------------------------------
# relays


def _island_mask(state: SystemState, island) -> np.ndarray:
    mask = np.zeros(len(state.case.buses), dtype=bool)
    mask[[state.case.bus_index[b] for b in island]] = True
    return mask


def relay_scan(
    state: SystemState, solution: PowerFlowSolution, opts: RelayOptions | None = None
) -> tuple[SystemState, list[TripEvent]]:
    """One relay evaluation against ``solution``; returns the new state and its trips."""
    opts = opts or RelayOptions()
    case = state.case
    out = state.copy()
    events: list[TripEvent] = []

    # collapsed islands go dark immediately
    collapsed = np.zeros(len(case.buses), dtype=bool)
    for island, ok in zip(solution.islands, solution.island_converged):
        if not ok:
            collapsed |= _island_mask(state, island)
    if collapsed.any():
        before = out.copy()
        f, t = case.branch_ends
        out.bus_on[collapsed] = False
        out.gen_on[collapsed[case.gen_bus_pos]] = False
        out.load_on[collapsed[case.load_bus_pos]] = False
        out.branch_on[collapsed[f] | collapsed[t]] = False
        events += service_changes(before, out, "island_collapse")

    live = out.bus_on & ~collapsed
    v_min = np.array([b.v_min for b in case.buses])
    v_max = np.array([b.v_max for b in case.buses])
    low = live & (solution.vm < v_min)
    high = live & (solution.vm > v_max)
    out.v_counter = np.where(low | high, out.v_counter + 1, 0)
    out.v_counter[~live] = 0

    ratio = branch_loading(solution, case)
    hot = out.branch_on & (ratio > 1.0)
    out.ol_counter = np.where(hot, out.ol_counter + 1, 0)

    trip_bus = out.v_counter >= opts.voltage_trip_delay_steps
    for pos in np.flatnonzero(trip_bus):
        cause = "undervoltage" if low[pos] else "overvoltage"
        before = out.copy()
        on_bus = case.gen_bus_pos == pos
        out.gen_on[on_bus] = False
        out.load_on[case.load_bus_pos == pos] = False
        events += service_changes(before, out, cause)
    out.v_counter[trip_bus] = 0

    trip_branch = out.ol_counter >= opts.overload_trip_delay_steps
    if trip_branch.any():
        before = out.copy()
        out.branch_on[trip_branch] = False
        out.ol_counter[trip_branch] = 0
        events += service_changes(before, out, "overload")

    changed = bool(events)
    out.vm = solution.vm.copy()
    out.va = solution.va.copy()
    if changed:
        before = out.copy()
        out = refresh_topology(out)
        events += service_changes(before, out, "island_collapse")
    return out, events


def voltage_violation(state: SystemState, solution: PowerFlowSolution) -> bool:
    """Contingency detection: any failed island or any live bus on/outside the open band."""
    if not solution.converged:
        return True
    live = state.bus_on
    v_min = np.array([b.v_min for b in state.case.buses])
    v_max = np.array([b.v_max for b in state.case.buses])
    vm = solution.vm
    return bool(np.any(live & ((vm <= v_min) | (vm >= v_max))))


def is_stable_and_acceptable(state: SystemState, solution: PowerFlowSolution) -> bool:
    """The reward's B flag: every island solved and every live bus within [v_min, v_max].

    A grid that serves no load at all (blackout, or only idle generator
    islands left) is not an operating point and returns False.
    """
    if not solution.islands or not all(solution.island_converged):
        return False
    if not np.any(state.load_on & (state.load_scale > 0)):
        return False
    live = state.bus_on
    v_min = np.array([b.v_min for b in state.case.buses])
    v_max = np.array([b.v_max for b in state.case.buses])
    vm = solution.vm
    return bool(np.all(~live | ((vm >= v_min) & (vm <= v_max))))


# ---------------------------------------------------------------------------
# relay-cadence evolution


class RelayClock:
    """Advance a state through relay scans, re-solving only after topology changes.

    Power-flow solutions are cached on the state's service fingerprint, so a
    quiescent interval costs one solve. The cache is private to each instance.
    """

    def __init__(self, relay: RelayOptions, solver: SolverOptions):
        self.relay = relay
        self.solver = solver
        self._key: bytes | None = None
        self._solution: PowerFlowSolution | None = None

    def solve(self, state: SystemState) -> PowerFlowSolution:
        key = _service_key(state)
        if key != self._key:
            opts = self.solver
            if not opts.flat_start or state.vm.any():
                opts = SolverOptions(
                    tolerance=opts.tolerance, max_iterations=opts.max_iterations,
                    flat_start=False, governor_sharing=opts.governor_sharing,
                    max_type_switches=opts.max_type_switches,
                )
            self._solution = solve_powerflow(state, opts)
            self._key = key
        return self._solution

    def advance(self, state: SystemState, duration: float) -> tuple[SystemState, list[TripEvent], PowerFlowSolution]:
        """Run ``duration`` seconds of relay scans starting at ``state.clock``.

        Returns the final state (clock advanced), all trip events, and the
        solution of the final state.
        """
        steps = max(int(math.floor(duration / self.relay.relay_step + 1e-9)), 0)
        start = state.clock
        events: list[TripEvent] = []
        for k in range(steps):
            sol = self.solve(state)
            if not _pending(state, sol, self.relay):
                state = state.copy()
                state.vm, state.va = sol.vm.copy(), sol.va.copy()
                break
            state, ev = relay_scan(state, sol, self.relay)
            events += ev
            state.clock = start + (k + 1) * self.relay.relay_step
        state.clock = start + steps * self.relay.relay_step
        return state, events, self.solve(state)


def _service_key(state: SystemState) -> bytes:
    return b"|".join([
        state.bus_on.tobytes(), state.branch_on.tobytes(), state.gen_on.tobytes(),
        state.load_on.tobytes(), state.load_scale.tobytes(),
    ])


def _pending(state: SystemState, solution: PowerFlowSolution, opts: RelayOptions) -> bool:
    """True if another relay scan could still change the state."""
    if not all(solution.island_converged):
        return True
    if state.v_counter.any() or state.ol_counter.any():
        return True
    v_min = np.array([b.v_min for b in state.case.buses])
    v_max = np.array([b.v_max for b in state.case.buses])
    live = state.bus_on
    if np.any(live & ((solution.vm < v_min) | (solution.vm > v_max))):
        return True
    return bool(np.any(state.branch_on & (branch_loading(solution, state.case) > 1.0)))
