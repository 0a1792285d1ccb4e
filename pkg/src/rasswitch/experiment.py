"""Experiment harness: contingencies, the dispatch loop, full enumeration, output files."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .case import LossMetrics, NetworkCase, SystemState
from .errors import PolicyUnavailableError, SimulationFatalError, UsageError
from .powerflow import SolverOptions, refresh_topology, solve_powerflow
from .protection import RasPolicy, RelayOptions, TripEvent, service_changes, voltage_violation
from .simulator import NativeSimulator, Simulator
from .switching import (
    NEG_INF, DispatchRecord, RewardRecord, SimulationTrace, SwitchingConfig, _num,
    reward, switch,
)

__all__ = [
    "ContingencySpec", "ScriptedOracle", "ScriptedSimulator", "EnumerationRow", "StepResult",
    "SimulationTrace", "inject_contingency", "run_experiment", "replay_trace", "best_row",
    "enumerate_policy_tree", "emit_results", "make_simulator", "parse_policies", "TABLE2_TREE",
]

EXPLICIT = "explicit"
RANDOM_N2 = "random_n2"


@dataclass(frozen=True)
class ContingencySpec:
    kind: str = EXPLICIT
    branch_ids: tuple[int, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in (EXPLICIT, RANDOM_N2):
            raise UsageError(f"unknown contingency kind {self.kind!r}")
        if self.kind == EXPLICIT and not self.branch_ids:
            raise UsageError("explicit contingency needs at least one branch")

    @classmethod
    def explicit(cls, branch_ids: Sequence[int]) -> "ContingencySpec":
        return cls(EXPLICIT, tuple(int(b) for b in branch_ids))

    @classmethod
    def random_n2(cls, seed: int) -> "ContingencySpec":
        return cls(RANDOM_N2, (), int(seed))

    @classmethod
    def from_bus_pairs(cls, case: NetworkCase, text: str) -> "ContingencySpec":
        """Parse ``"19-20,2-25"`` into the branches joining those bus pairs."""
        ids = []
        for item in text.split(","):
            try:
                a, b = (int(x) for x in item.strip().split("-"))
                ids.append(case.branch_between(a, b).id)
            except (ValueError, KeyError) as exc:
                raise UsageError(f"bad contingency element {item.strip()!r}: {exc}") from None
        return cls.explicit(ids)

    def resolve(self, state: SystemState) -> tuple[int, ...]:
        """Branch ids to open (sampling for random_n2)."""
        case = state.case
        if self.kind == EXPLICIT:
            for bid in self.branch_ids:
                if bid not in case.branch_index:
                    raise UsageError(f"contingency branch {bid} does not exist")
                if not state.branch_on[case.branch_index[bid]]:
                    raise UsageError(f"contingency branch {bid} is out of service")
            return self.branch_ids
        live = [br.id for br, on in zip(case.branches, state.branch_on) if on]
        if len(live) < 2:
            raise UsageError("random_n2 needs two in-service branches")
        rng = np.random.default_rng(self.seed)
        pick = rng.choice(len(live), size=2, replace=False)
        return tuple(sorted(live[i] for i in pick))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "branch_ids": list(self.branch_ids), "seed": self.seed}


def inject_contingency(
    state: SystemState, spec: ContingencySpec, solver: SolverOptions | None = None
) -> tuple[SystemState, bool, list[TripEvent]]:
    """Open the contingency branches and report whether the voltage rule fires."""
    opened = spec.resolve(state)
    out = refresh_topology(state.open_branches(opened))
    sol = solve_powerflow(out, solver or SolverOptions(flat_start=False))
    out.vm, out.va = sol.vm.copy(), sol.va.copy()
    events = service_changes(state, out, "contingency")
    return out, voltage_violation(out, sol), events


# ---------------------------------------------------------------------------
# scripted oracle

# prefix -> (operational load MVA, saved, buses/gens/loads/lines lost); transcribed from the
# published full enumeration of the example N-2 contingency
TABLE2_TREE: dict[tuple[str, ...], tuple[float, bool, tuple[int, int, int, int]]] = {
    (): (6501.0, False, (0, 0, 0, 0)),
    ("I",): (4759.0, False, (7, 2, 4, 13)),
    ("LS",): (5224.0, False, (3, 2, 1, 6)),
    ("I", "I"): (3848.0, False, (14, 3, 8, 21)),
    ("I", "LS"): (4283.0, True, (7, 2, 4, 13)),
    ("LS", "LS"): (2922.0, True, (21, 5, 9, 27)),
    ("LS", "I"): (4749.0, True, (5, 2, 3, 9)),
    ("I", "I", "LS"): (3463.0, True, (14, 3, 8, 21)),
}


@dataclass(frozen=True)
class ScriptedOracle:
    tree: dict = field(default_factory=lambda: dict(TABLE2_TREE))
    l_total: float = 6501.0

    def __post_init__(self) -> None:
        for prefix in self.tree:
            for k in range(len(prefix)):
                if prefix[:k] not in self.tree:
                    raise UsageError(f"oracle prefix {prefix[:k]} missing")


@dataclass(frozen=True)
class ScriptedNode:
    prefix: tuple[str, ...]
    clock: float = 0.0


class ScriptedSimulator:
    """Replays a transcribed enumeration; unknown extensions are unavailable."""

    def __init__(self, oracle: ScriptedOracle | None = None):
        self.oracle = oracle or ScriptedOracle()
        self.l_total = self.oracle.l_total

    def root(self) -> ScriptedNode:
        return ScriptedNode(())

    def load(self, node):
        return self.oracle.tree[node.prefix][0]

    def saved(self, node):
        return self.oracle.tree[node.prefix][1]

    acceptable = saved

    def metrics(self, node):
        return LossMetrics(*self.oracle.tree[node.prefix][2])

    def clock(self, node):
        return node.clock

    def key(self, node):
        return node.prefix

    def step(self, node, policy, duration):
        if policy.label == "NA":
            return ScriptedNode(node.prefix, node.clock + duration), []
        nxt = node.prefix + (policy.label,)
        if nxt not in self.oracle.tree:
            raise PolicyUnavailableError(f"no scripted outcome for {'-'.join(nxt)}")
        return ScriptedNode(nxt, node.clock + duration), []

    def perturb(self, node, rng, sigma):
        return node


# ---------------------------------------------------------------------------
# setup helpers


def parse_policies(text: str | Sequence[str], shed_ratio: float = 0.2) -> list[RasPolicy]:
    items = text.split(",") if isinstance(text, str) else list(text)
    out = []
    for item in items:
        name = item.strip().lower()
        if name in ("ls", "loadshed"):
            out.append(RasPolicy.load_shed(shed_ratio))
        elif name in ("i", "island"):
            out.append(RasPolicy.island())
        elif name in ("na", "none", "noaction"):
            out.append(RasPolicy.no_action())
        else:
            raise UsageError(f"unknown policy {item!r}")
    if not out:
        raise UsageError("policy set is empty")
    return out


def make_simulator(
    backend: str, case: NetworkCase | None, relay: RelayOptions | None = None,
    solver: SolverOptions | None = None,
):
    if backend == "native":
        if case is None:
            raise UsageError("native backend needs a case")
        return NativeSimulator(case, relay, solver)
    if backend == "scripted":
        return ScriptedSimulator()
    raise UsageError(f"unknown backend {backend!r}")


def _start(sim, case, spec) -> tuple[object, bool, list[TripEvent], dict]:
    """Post-contingency node, detection flag, contingency events, extra metadata."""
    if isinstance(sim, ScriptedSimulator):
        return sim.root(), True, [], {}
    base = SystemState.initial(case)
    sol = solve_powerflow(base, sim.solver)
    if not sol.converged:
        raise SimulationFatalError("base case does not solve")
    base.vm, base.va = sol.vm.copy(), sol.va.copy()
    state, detected, events = inject_contingency(base, spec, sim.solver)
    opened = sorted(spec.resolve(base))
    relay = {"relay_step": sim.relay.relay_step,
             "voltage_trip_delay_steps": sim.relay.voltage_trip_delay_steps,
             "overload_trip_delay_steps": sim.relay.overload_trip_delay_steps}
    return sim.node(state), detected, events, {"opened_branches": opened, "relay": relay}


# ---------------------------------------------------------------------------
# control loop


def run_experiment(
    case: NetworkCase | None,
    spec: ContingencySpec,
    policy_set: Sequence[RasPolicy],
    cfg: SwitchingConfig,
    seed: int = 0,
    *,
    sim: Simulator | None = None,
) -> SimulationTrace:
    """Contingency, then switch-and-apply at every dispatch until acceptable or out of horizon."""
    sim = sim or NativeSimulator(case)
    node, detected, events, meta = _start(sim, case, spec)
    trace = SimulationTrace(contingency=spec, events=list(events))
    trace.meta = {
        "backend": "scripted" if isinstance(sim, ScriptedSimulator) else "native",
        "policies": [p.to_dict() for p in policy_set],
        "config": cfg.to_dict(),
        "seed": seed,
        "detected": detected,
        **meta,
    }
    value, last, t = 0.0, reward(sim.load(node), sim.load(node), sim.saved(node), sim.l_total,
                                 cfg.reward_mode), 0
    h = cfg.horizon_dispatches
    while t < h and not sim.acceptable(node):
        policy, estimates = switch(sim, node, policy_set, cfg, seed + t, horizon=h - t)
        note = "" if any(e.feasible for e in estimates) else "no feasible policy; no action taken"
        clock, prev = sim.clock(node), sim.load(node)
        node, ev = sim.step(node, policy, cfg.dispatch_interval)
        trace.events += ev
        last = reward(sim.load(node), prev, sim.saved(node), sim.l_total, cfg.reward_mode)
        value += cfg.beta ** t * last
        trace.dispatches.append(DispatchRecord(
            clock, policy, estimates,
            RewardRecord(sim.clock(node), sim.load(node), sim.saved(node), last),
            sim.metrics(node), note,
        ))
        t += 1
    # acceptable before the horizon ran out: the remaining NoAction dispatches repeat `last`
    if t < h and sim.acceptable(node):
        if not trace.dispatches:
            last = reward(sim.load(node), sim.load(node), sim.saved(node), sim.l_total, cfg.reward_mode)
        value += sum(cfg.beta ** k for k in range(t, h)) * last
    trace.saved = sim.saved(node)
    trace.operational_load = sim.load(node)
    trace.cumulative_value = value
    trace.final_reward = last
    return trace


def replay_trace(doc: dict, case: NetworkCase | None = None) -> SimulationTrace:
    """Re-run the experiment recorded in a trace document (as written to trace.json)."""
    meta = doc["meta"]
    spec = ContingencySpec(doc["contingency"]["kind"], tuple(doc["contingency"]["branch_ids"]),
                           doc["contingency"]["seed"])
    policies = [RasPolicy(p["kind"], p["shed_ratio"]) for p in meta["policies"]]
    cfg = SwitchingConfig(**meta["config"])
    relay = RelayOptions(**meta["relay"]) if "relay" in meta else None
    sim = make_simulator(meta["backend"], case, relay)
    return run_experiment(case, spec, policies, cfg, meta["seed"], sim=sim)


# ---------------------------------------------------------------------------
# enumeration

EXECUTED = "executed"
NOT_NEEDED = "not_needed"
INFEASIBLE = "infeasible"
SKIPPED = "skipped"


@dataclass(frozen=True)
class StepResult:
    policy: str
    status: str
    load: float | None = None
    saved: bool | None = None
    reward: float | None = None
    losses: LossMetrics | None = None


@dataclass
class EnumerationRow:
    sequence: tuple[str, ...]
    steps: list[StepResult]
    feasible: bool
    cumulative_value: float
    final_reward: float

    @property
    def executed(self) -> tuple[str, ...]:
        return tuple(s.policy for s in self.steps if s.status == EXECUTED)

    def to_dict(self) -> dict:
        return {
            "sequence": list(self.sequence),
            "feasible": self.feasible,
            "cumulative_value": _num(self.cumulative_value),
            "final_reward": _num(self.final_reward),
            "steps": [
                {
                    "policy": s.policy, "status": s.status, "load": s.load, "saved": s.saved,
                    "reward": s.reward,
                    "losses": None if s.losses is None else list(s.losses.as_tuple()),
                }
                for s in self.steps
            ],
        }


def enumerate_policy_tree(
    case: NetworkCase | None,
    spec: ContingencySpec,
    policy_set: Sequence[RasPolicy],
    cfg: SwitchingConfig,
    seed: int = 0,
    *,
    sim: Simulator | None = None,
) -> list[EnumerationRow]:
    """Force every sequence over ``policy_set`` of length ``horizon_dispatches``.

    Steps taken once the system is acceptable are marked not needed (and
    score as NoAction); an unavailable policy marks the step infeasible and
    the rest of the row skipped.
    """
    sim = sim or NativeSimulator(case)
    root, _, _, _ = _start(sim, case, spec)
    noop = RasPolicy.no_action()
    memo: dict = {}

    def step(node, policy):
        k = (sim.key(node), policy)
        if k not in memo:
            try:
                memo[k] = sim.step(node, policy, cfg.dispatch_interval)[0]
            except PolicyUnavailableError as exc:
                memo[k] = exc
        if isinstance(memo[k], Exception):
            raise memo[k]
        return memo[k]

    rows = []
    for seq in itertools.product(policy_set, repeat=cfg.horizon_dispatches):
        node, steps, value, last, feasible = root, [], 0.0, NEG_INF, True
        for t, policy in enumerate(seq):
            if not feasible:
                steps.append(StepResult(policy.label, SKIPPED))
                continue
            needed = not sim.acceptable(node)
            prev = sim.load(node)
            try:
                node = step(node, policy if needed else noop)
            except PolicyUnavailableError:
                feasible = False
                steps.append(StepResult(policy.label, INFEASIBLE))
                continue
            last = reward(sim.load(node), prev, sim.saved(node), sim.l_total, cfg.reward_mode)
            value += cfg.beta ** t * last
            steps.append(StepResult(
                policy.label, EXECUTED if needed else NOT_NEEDED,
                sim.load(node), sim.saved(node), last, sim.metrics(node),
            ))
        rows.append(EnumerationRow(
            tuple(p.label for p in seq), steps, feasible,
            value if feasible else NEG_INF, last,
        ))
    return rows


def best_row(rows: Sequence[EnumerationRow]) -> EnumerationRow | None:
    """Highest cumulative value, first row on ties; None if nothing is feasible."""
    best = None
    for row in rows:
        if row.feasible and (best is None or row.cumulative_value > best.cumulative_value):
            best = row
    return best


# ---------------------------------------------------------------------------
# output

_STEP_COLS = ("policy", "status", "load_mva", "saved", "reward",
              "buses_lost", "generators_lost", "loads_lost", "lines_lost")


def summary_header(horizon: int) -> list[str]:
    head = ["sequence"]
    for d in range(1, horizon + 1):
        head += [f"{c}_d{d}" for c in _STEP_COLS]
    return head + ["feasible", "saved", "final_reward", "cumulative_value"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return "" if math.isinf(x) or math.isnan(x) else f"{x:.6f}"
    return str(x)


def _trace_rows(trace: SimulationTrace, horizon: int) -> list[list[str]]:
    row = ["-".join(trace.sequence)]
    for d in range(horizon):
        if d < len(trace.dispatches):
            rec = trace.dispatches[d]
            row += [rec.policy.label, EXECUTED, _fmt(rec.reward.operational_load), _fmt(rec.reward.saved),
                    _fmt(rec.reward.reward), *map(str, rec.losses.as_tuple())]
        else:
            row += ["NA", NOT_NEEDED] + [""] * 7
    row += [_fmt(trace.feasible), _fmt(trace.saved), _fmt(trace.final_reward), _fmt(trace.cumulative_value)]
    return [row]


def _table_rows(rows: Sequence[EnumerationRow]) -> list[list[str]]:
    out = []
    for r in rows:
        line = ["-".join(r.sequence)]
        for s in r.steps:
            losses = s.losses.as_tuple() if s.losses is not None and s.status == EXECUTED else (None,) * 4
            shown = s.status == EXECUTED
            line += [s.policy, s.status, _fmt(s.load if shown else None), _fmt(s.saved if shown else None),
                     _fmt(s.reward if shown else None), *map(_fmt, losses)]
        final_saved = next((s.saved for s in reversed(r.steps) if s.saved is not None), False)
        line += [_fmt(r.feasible), _fmt(bool(final_saved) and r.feasible), _fmt(r.final_reward),
                 _fmt(r.cumulative_value)]
        out.append(line)
    return out


def emit_results(
    result: SimulationTrace | Sequence[EnumerationRow], out_dir: str | Path, horizon: int,
    meta: dict | None = None,
) -> tuple[Path, Path]:
    """Write ``trace.json`` and ``summary.csv`` into ``out_dir``; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(result, SimulationTrace):
        doc = result.to_dict()
        rows = _trace_rows(result, horizon)
    else:
        doc = {"meta": meta or {}, "rows": [r.to_dict() for r in result]}
        rows = _table_rows(result)
    jpath, cpath = out / "trace.json", out / "summary.csv"
    jpath.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    with cpath.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(summary_header(horizon))
        w.writerows(rows)
    return jpath, cpath
