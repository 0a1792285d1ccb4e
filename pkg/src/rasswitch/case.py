"""Grid data model: static case description, JSON case files, and the dynamic state.

A :class:`NetworkCase` is immutable once parsed and can be shared between
rollouts. A :class:`SystemState` is a value object backed by small numpy
arrays; :meth:`SystemState.copy` is cheap and every transform in the package
returns a new state instead of mutating its input.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable

import jsonschema
import numpy as np

from .errors import CaseIntegrityError, CaseParseError, UsageError

SECURE_MARGIN = 1.1
BUS_KINDS = ("slack", "generation", "load")

IEEE39_RESOURCE = "ieee39.json"


@dataclass(frozen=True)
class Bus:
    id: int
    base_kv: float
    bus_kind: str
    v_min: float = 0.9
    v_max: float = 1.12


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_shunt: float
    rating: float
    in_service: bool = True

    @property
    def secure_rating(self) -> float:
        """Emergency limit used by the overload relay: rating plus 10%."""
        return SECURE_MARGIN * self.rating


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_set: float
    q_min: float
    q_max: float
    v_setpoint: float
    p_max: float
    in_service: bool = True


@dataclass(frozen=True)
class Load:
    id: int
    bus: int
    p_demand: float
    q_demand: float
    scale: float = 1.0
    in_service: bool = True

    @property
    def apparent(self) -> float:
        return math.hypot(self.p_demand, self.q_demand)


@dataclass(frozen=True)
class IslandLevel:
    partitions: tuple[frozenset[int], ...]
    tie_branches: tuple[int, ...]


@dataclass(frozen=True)
class IslandingScheme:
    levels: tuple[IslandLevel, ...] = ()

    def cumulative_ties(self, depth: int) -> tuple[int, ...]:
        """Tie branches of levels ``1..depth`` in declaration order."""
        ties: list[int] = []
        for level in self.levels[:depth]:
            ties.extend(t for t in level.tie_branches if t not in ties)
        return tuple(ties)


@dataclass(frozen=True, eq=False)
class NetworkCase:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    loads: tuple[Load, ...]
    islanding_scheme: IslandingScheme = field(default_factory=IslandingScheme)

    # Index maps and per-element arrays are derived once and cached; the
    # dataclass is frozen so they can never go stale.

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def branch_index(self) -> dict[int, int]:
        return {br.id: i for i, br in enumerate(self.branches)}

    @cached_property
    def gen_index(self) -> dict[int, int]:
        return {g.id: i for i, g in enumerate(self.generators)}

    @cached_property
    def load_index(self) -> dict[int, int]:
        return {ld.id: i for i, ld in enumerate(self.loads)}

    @cached_property
    def bus_ids(self) -> np.ndarray:
        return np.array([b.id for b in self.buses], dtype=np.int64)

    @cached_property
    def branch_ends(self) -> tuple[np.ndarray, np.ndarray]:
        """(from, to) bus positions of every branch."""
        idx = self.bus_index
        f = np.array([idx[br.from_bus] for br in self.branches], dtype=np.int64)
        t = np.array([idx[br.to_bus] for br in self.branches], dtype=np.int64)
        return f, t

    @cached_property
    def gen_bus_pos(self) -> np.ndarray:
        return np.array([self.bus_index[g.bus] for g in self.generators], dtype=np.int64)

    @cached_property
    def load_bus_pos(self) -> np.ndarray:
        return np.array([self.bus_index[ld.bus] for ld in self.loads], dtype=np.int64)

    @cached_property
    def load_apparent(self) -> np.ndarray:
        return np.array([ld.apparent for ld in self.loads])

    @cached_property
    def slack_bus(self) -> int:
        return next(b.id for b in self.buses if b.bus_kind == "slack")

    @property
    def nominal_load(self) -> float:
        """L_total: apparent demand of every load at full scale (MVA)."""
        return float(self.load_apparent.sum())

    def branch_between(self, a: int, b: int) -> Branch:
        """Return the (first) branch joining buses ``a`` and ``b`` in either direction."""
        for br in self.branches:
            if {br.from_bus, br.to_bus} == {a, b}:
                return br
        raise UsageError(f"no branch between bus {a} and bus {b}")


# ---------------------------------------------------------------------------
# JSON case files


_NUM = {"type": "number"}
_INT = {"type": "integer"}
_BOOL = {"type": "boolean"}


def _obj(required: dict, optional: dict | None = None) -> dict:
    props = dict(required)
    props.update(optional or {})
    return {
        "type": "object",
        "properties": props,
        "required": sorted(required),
        "additionalProperties": False,
    }


CASE_SCHEMA = {
    "type": "object",
    "properties": {
        "base_mva": {"type": "number", "exclusiveMinimum": 0},
        "buses": {
            "type": "array",
            "minItems": 1,
            "items": _obj(
                {"id": _INT, "base_kv": _NUM, "bus_kind": {"enum": list(BUS_KINDS)}},
                {"v_min": _NUM, "v_max": _NUM},
            ),
        },
        "branches": {
            "type": "array",
            "items": _obj(
                {
                    "id": _INT, "from_bus": _INT, "to_bus": _INT,
                    "r": _NUM, "x": _NUM, "b_shunt": _NUM, "rating": _NUM,
                },
                {"secure_rating": _NUM, "in_service": _BOOL},
            ),
        },
        "generators": {
            "type": "array",
            "items": _obj(
                {
                    "id": _INT, "bus": _INT, "p_set": _NUM, "q_min": _NUM,
                    "q_max": _NUM, "v_setpoint": _NUM, "p_max": _NUM,
                },
                {"in_service": _BOOL},
            ),
        },
        "loads": {
            "type": "array",
            "items": _obj(
                {"id": _INT, "bus": _INT, "p_demand": _NUM, "q_demand": _NUM},
                {"scale": {"type": "number", "minimum": 0, "maximum": 1}, "in_service": _BOOL},
            ),
        },
        "islanding_scheme": _obj(
            {
                "levels": {
                    "type": "array",
                    "maxItems": 2,
                    "items": _obj(
                        {
                            "partitions": {
                                "type": "array",
                                "items": {"type": "array", "items": _INT},
                            },
                            "tie_branches": {"type": "array", "items": _INT},
                        }
                    ),
                }
            }
        ),
    },
    "required": ["base_mva", "buses", "branches", "generators", "loads"],
    "additionalProperties": False,
}


def _location(err: jsonschema.ValidationError) -> str:
    path = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
    return path.lstrip(".") or "<root>"


def parse_case(text: str | bytes) -> NetworkCase:
    """Parse JSON case text into a validated :class:`NetworkCase`.

    Raises :class:`CaseParseError` for malformed JSON or schema violations and
    :class:`CaseIntegrityError` for duplicate ids, dangling bus references and
    violated physical invariants.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    validator = jsonschema.Draft7Validator(CASE_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        raise CaseParseError(f"{_location(err)}: {err.message}")
    return _build(raw)


def _unique(kind: str, ids: Iterable[int]) -> None:
    seen: set[int] = set()
    for i in ids:
        if i in seen:
            raise CaseIntegrityError(f"duplicate {kind} id {i}")
        seen.add(i)


def _build(raw: dict) -> NetworkCase:
    buses = tuple(Bus(**b) for b in raw["buses"])
    _unique("bus", (b.id for b in buses))
    bus_ids = {b.id for b in buses}
    for b in buses:
        if not 0 < b.v_min < b.v_max:
            raise CaseIntegrityError(f"bus {b.id}: need 0 < v_min < v_max")
    slacks = [b.id for b in buses if b.bus_kind == "slack"]
    if len(slacks) != 1:
        raise CaseIntegrityError(f"expected exactly one slack bus, found {len(slacks)}")

    branches = []
    for rec in raw["branches"]:
        rec = dict(rec)
        secure = rec.pop("secure_rating", None)
        br = Branch(**rec)
        for end in (br.from_bus, br.to_bus):
            if end not in bus_ids:
                raise CaseIntegrityError(f"branch {br.id} references missing bus {end}")
        if br.x == 0:
            raise CaseIntegrityError(f"branch {br.id}: x must be non-zero")
        if secure is not None and not math.isclose(secure, br.secure_rating, rel_tol=1e-12, abs_tol=1e-9):
            raise CaseIntegrityError(f"branch {br.id}: secure_rating must equal 1.1 x rating")
        branches.append(br)
    _unique("branch", (br.id for br in branches))

    generators = tuple(Generator(**g) for g in raw["generators"])
    _unique("generator", (g.id for g in generators))
    for g in generators:
        if g.bus not in bus_ids:
            raise CaseIntegrityError(f"generator {g.id} references missing bus {g.bus}")
        if g.q_min > g.q_max:
            raise CaseIntegrityError(f"generator {g.id}: q_min > q_max")
        if not 0 <= g.p_set <= g.p_max:
            raise CaseIntegrityError(f"generator {g.id}: need 0 <= p_set <= p_max")

    loads = tuple(Load(**ld) for ld in raw["loads"])
    _unique("load", (ld.id for ld in loads))
    for ld in loads:
        if ld.bus not in bus_ids:
            raise CaseIntegrityError(f"load {ld.id} references missing bus {ld.bus}")

    branch_ids = {br.id for br in branches}
    levels = []
    for n, lvl in enumerate(raw.get("islanding_scheme", {}).get("levels", []), start=1):
        parts = tuple(frozenset(p) for p in lvl["partitions"])
        members = [b for p in parts for b in p]
        if len(members) != len(set(members)):
            raise CaseIntegrityError(f"islanding level {n}: partitions overlap")
        if not set(members) <= bus_ids:
            raise CaseIntegrityError(f"islanding level {n}: partition references missing bus")
        for t in lvl["tie_branches"]:
            if t not in branch_ids:
                raise CaseIntegrityError(f"islanding level {n}: tie branch {t} does not exist")
        levels.append(IslandLevel(parts, tuple(lvl["tie_branches"])))

    return NetworkCase(
        base_mva=float(raw["base_mva"]),
        buses=buses,
        branches=tuple(branches),
        generators=generators,
        loads=loads,
        islanding_scheme=IslandingScheme(tuple(levels)),
    )


def case_to_dict(case: NetworkCase) -> dict:
    """Inverse of :func:`parse_case` (up to JSON formatting)."""
    return {
        "base_mva": case.base_mva,
        "buses": [
            {"id": b.id, "base_kv": b.base_kv, "bus_kind": b.bus_kind, "v_min": b.v_min, "v_max": b.v_max}
            for b in case.buses
        ],
        "branches": [
            {
                "id": br.id, "from_bus": br.from_bus, "to_bus": br.to_bus,
                "r": br.r, "x": br.x, "b_shunt": br.b_shunt,
                "rating": br.rating, "secure_rating": br.secure_rating,
                "in_service": br.in_service,
            }
            for br in case.branches
        ],
        "generators": [
            {
                "id": g.id, "bus": g.bus, "p_set": g.p_set, "q_min": g.q_min, "q_max": g.q_max,
                "v_setpoint": g.v_setpoint, "p_max": g.p_max, "in_service": g.in_service,
            }
            for g in case.generators
        ],
        "loads": [
            {
                "id": ld.id, "bus": ld.bus, "p_demand": ld.p_demand, "q_demand": ld.q_demand,
                "scale": ld.scale, "in_service": ld.in_service,
            }
            for ld in case.loads
        ],
        "islanding_scheme": {
            "levels": [
                {"partitions": [sorted(p) for p in lvl.partitions], "tie_branches": list(lvl.tie_branches)}
                for lvl in case.islanding_scheme.levels
            ]
        },
    }


def serialize_case(case: NetworkCase) -> str:
    return json.dumps(case_to_dict(case), indent=2) + "\n"


def load_case(path: str | Path) -> NetworkCase:
    return parse_case(Path(path).read_text(encoding="utf-8"))


def ieee39_path() -> Path:
    """Filesystem path of the bundled IEEE 39-bus fixture."""
    return Path(str(resources.files("rasswitch.data").joinpath(IEEE39_RESOURCE)))


def load_ieee39() -> NetworkCase:
    return load_case(ieee39_path())


# ---------------------------------------------------------------------------
# Dynamic state


@dataclass(eq=False)
class SystemState:
    """Snapshot of service status, voltages, islands and relay timers.

    Arrays are positional (same order as the case's element tuples). Relay
    persistence counters live here so that a state fully determines the
    future of a deterministic simulation.
    """

    case: NetworkCase
    bus_on: np.ndarray
    branch_on: np.ndarray
    gen_on: np.ndarray
    load_on: np.ndarray
    load_scale: np.ndarray
    vm: np.ndarray
    va: np.ndarray
    islands: tuple[tuple[int, ...], ...] = ()
    island_slacks: tuple[int, ...] = ()
    clock: float = 0.0
    islanding_level_applied: int = 0
    v_counter: np.ndarray | None = None
    ol_counter: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.v_counter is None:
            self.v_counter = np.zeros(len(self.case.buses), dtype=np.int64)
        if self.ol_counter is None:
            self.ol_counter = np.zeros(len(self.case.branches), dtype=np.int64)

    @classmethod
    def initial(cls, case: NetworkCase) -> "SystemState":
        """Pristine state: case service flags, flat voltages, one island per component."""
        from .powerflow import assign_island_slacks, find_islands

        nb = len(case.buses)
        gen_v = {g.bus: g.v_setpoint for g in case.generators if g.in_service}
        state = cls(
            case=case,
            bus_on=np.ones(nb, dtype=bool),
            branch_on=np.array([br.in_service for br in case.branches], dtype=bool),
            gen_on=np.array([g.in_service for g in case.generators], dtype=bool),
            load_on=np.array([ld.in_service for ld in case.loads], dtype=bool),
            load_scale=np.array([ld.scale for ld in case.loads], dtype=float),
            vm=np.array([gen_v.get(b.id, 1.0) for b in case.buses]),
            va=np.zeros(nb),
        )
        state.islands = tuple(tuple(sorted(c)) for c in find_islands(state))
        return assign_island_slacks(state)

    def copy(self) -> "SystemState":
        return SystemState(
            case=self.case,
            bus_on=self.bus_on.copy(),
            branch_on=self.branch_on.copy(),
            gen_on=self.gen_on.copy(),
            load_on=self.load_on.copy(),
            load_scale=self.load_scale.copy(),
            vm=self.vm.copy(),
            va=self.va.copy(),
            islands=self.islands,
            island_slacks=self.island_slacks,
            clock=self.clock,
            islanding_level_applied=self.islanding_level_applied,
            v_counter=self.v_counter.copy(),
            ol_counter=self.ol_counter.copy(),
        )

    def open_branches(self, branch_ids: Iterable[int]) -> "SystemState":
        out = self.copy()
        for bid in branch_ids:
            out.branch_on[self.case.branch_index[bid]] = False
        return out

    def bus_voltage(self, bus_id: int) -> complex:
        i = self.case.bus_index[bus_id]
        return complex(self.vm[i] * math.cos(self.va[i]), self.vm[i] * math.sin(self.va[i]))

    def out_of_service(self) -> dict[str, frozenset[int]]:
        """Ids of every element currently out of service, keyed by element kind."""
        c = self.case
        return {
            "bus": frozenset(int(b.id) for b, on in zip(c.buses, self.bus_on) if not on),
            "branch": frozenset(br.id for br, on in zip(c.branches, self.branch_on) if not on),
            "generator": frozenset(g.id for g, on in zip(c.generators, self.gen_on) if not on),
            "load": frozenset(ld.id for ld, on in zip(c.loads, self.load_on) if not on),
        }

    def fingerprint(self) -> bytes:
        """Byte key of everything that influences future evolution (voltages excluded)."""
        parts = [
            self.bus_on.tobytes(), self.branch_on.tobytes(), self.gen_on.tobytes(),
            self.load_on.tobytes(), self.load_scale.tobytes(),
            self.v_counter.tobytes(), self.ol_counter.tobytes(),
            repr(self.islanding_level_applied).encode(),
        ]
        return b"|".join(parts)


def total_operational_load(state: SystemState) -> float:
    """Apparent power (MVA) of all in-service loads at their current scale."""
    s = state.case.load_apparent * state.load_scale
    return float(s[state.load_on].sum())


@dataclass(frozen=True)
class LossMetrics:
    buses: int = 0
    generators: int = 0
    loads: int = 0
    lines: int = 0

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.buses, self.generators, self.loads, self.lines)


def loss_metrics(state: SystemState, baseline: SystemState) -> LossMetrics:
    """Count elements energized in ``baseline`` that are lost in ``state``.

    A load counts as fully lost when it is out of service or shed to scale 0.
    """
    if state.case is not baseline.case:
        raise UsageError("loss_metrics needs two states of the same NetworkCase")
    load_alive = lambda s: s.load_on & (s.load_scale > 0)  # noqa: E731
    return LossMetrics(
        buses=int(np.sum(baseline.bus_on & ~state.bus_on)),
        generators=int(np.sum(baseline.gen_on & ~state.gen_on)),
        loads=int(np.sum(load_alive(baseline) & ~load_alive(state))),
        lines=int(np.sum(baseline.branch_on & ~state.branch_on)),
    )
