"""Topology analysis and per-island Newton-Raphson AC power flow.

Each energized island is solved independently with its own slack bus. Before
the solve, island generation follows a governor-style redistribution: the
gap between island demand and scheduled output is shared among in-service
units in proportion to ``p_max``. An island whose demand exceeds its total
``p_max`` cannot be balanced and is reported as not converged, which the
relay layer treats as a collapse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .case import NetworkCase, SystemState

INF = math.inf


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-6
    max_iterations: int = 20
    flat_start: bool = True
    governor_sharing: bool = True
    max_type_switches: int = 10

    def __post_init__(self) -> None:
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class PowerFlowSolution:
    converged: bool
    vm: np.ndarray
    va: np.ndarray
    s_from: np.ndarray          # complex MVA injected at the from-end of each branch
    s_to: np.ndarray
    mismatch: float
    iterations: int
    islands: tuple[tuple[int, ...], ...]
    island_converged: tuple[bool, ...]
    gen_p: np.ndarray           # MW
    gen_q: np.ndarray           # MVAr

    @property
    def branch_flows(self) -> np.ndarray:
        """(n_branch, 2) array of apparent flow magnitudes in MVA (from-end, to-end)."""
        return np.column_stack([np.abs(self.s_from), np.abs(self.s_to)])

    def voltage(self, pos: int) -> complex:
        return self.vm[pos] * complex(math.cos(self.va[pos]), math.sin(self.va[pos]))


# ---------------------------------------------------------------------------
# topology


def find_islands(state: SystemState) -> list[set[int]]:
    """Connected components of in-service buses over in-service branches.

    Sorted by the smallest bus id each component contains.
    """
    case = state.case
    f, t = case.branch_ends
    labels = kernels.components(len(case.buses), f, t, state.branch_on, state.bus_on)
    groups: dict[int, set[int]] = {}
    for pos, lab in enumerate(labels):
        if lab >= 0:
            groups.setdefault(int(lab), set()).add(int(case.bus_ids[pos]))
    return sorted(groups.values(), key=min)


def assign_island_slacks(state: SystemState) -> SystemState:
    """Pick a slack bus for every island and de-energize generator-less islands.

    The case-wide slack keeps its role while it is in service; every other
    island uses the bus of its largest in-service unit (by ``p_max``).
    """
    case = state.case
    out = state.copy()
    gen_pos_by_bus: dict[int, list[int]] = {}
    for gi, g in enumerate(case.generators):
        if out.gen_on[gi]:
            gen_pos_by_bus.setdefault(g.bus, []).append(gi)

    kept, slacks = [], []
    for island in out.islands:
        gens = [gi for b in island for gi in gen_pos_by_bus.get(b, [])]
        if not gens:
            _deenergize(out, island)
            continue
        if case.slack_bus in island and case.slack_bus in gen_pos_by_bus:
            slack = case.slack_bus
        else:
            best = max(gens, key=lambda gi: (case.generators[gi].p_max, -gi))
            slack = case.generators[best].bus
        kept.append(island)
        slacks.append(slack)
    out.islands = tuple(kept)
    out.island_slacks = tuple(slacks)
    return out


def _deenergize(state: SystemState, island) -> None:
    case = state.case
    pos = np.array([case.bus_index[b] for b in island], dtype=np.int64)
    mask = np.zeros(len(case.buses), dtype=bool)
    mask[pos] = True
    state.bus_on[mask] = False
    state.vm[mask] = 0.0
    state.va[mask] = 0.0
    state.gen_on[mask[case.gen_bus_pos]] = False
    state.load_on[mask[case.load_bus_pos]] = False
    f, t = case.branch_ends
    state.branch_on[mask[f] | mask[t]] = False


def refresh_topology(state: SystemState) -> SystemState:
    """Recompute islands and slacks after service changes."""
    out = state.copy()
    out.islands = tuple(tuple(sorted(c)) for c in find_islands(out))
    return assign_island_slacks(out)


# ---------------------------------------------------------------------------
# power flow


@lru_cache(maxsize=32)
def _branch_admittances(case: NetworkCase) -> tuple[np.ndarray, np.ndarray]:
    r = np.array([br.r for br in case.branches])
    x = np.array([br.x for br in case.branches])
    b = np.array([br.b_shunt for br in case.branches])
    return 1.0 / (r + 1j * x), 0.5j * b


def _share_generation(demand: float, p_set: np.ndarray, p_max: np.ndarray) -> np.ndarray:
    """Water-fill ``demand - sum(p_set)`` over units by ``p_max`` weight within [0, p_max]."""
    p = p_set.astype(float).copy()
    free = np.ones(len(p), dtype=bool)
    gap = demand - p.sum()
    for _ in range(len(p) + 1):
        if abs(gap) < 1e-12 or not free.any():
            break
        w = p_max * free
        p = p + gap * w / w.sum()
        low, high = p < 0.0, p > p_max
        p = np.clip(p, 0.0, p_max)
        free &= ~(low | high)
        gap = demand - p.sum()
    return p


def solve_powerflow(state: SystemState, opts: SolverOptions | None = None) -> PowerFlowSolution:
    """Newton-Raphson solve of every energized island of ``state``."""
    opts = opts or SolverOptions()
    case = state.case
    nb, nl = len(case.buses), len(case.branches)
    base = case.base_mva

    vm = np.zeros(nb)
    va = np.zeros(nb)
    gen_p = np.zeros(len(case.generators))
    gen_q = np.zeros(len(case.generators))
    s_from = np.zeros(nl, dtype=complex)
    s_to = np.zeros(nl, dtype=complex)

    y_series, y_half_shunt = _branch_admittances(case)
    f_all, t_all = case.branch_ends
    load_p = np.array([ld.p_demand for ld in case.loads]) * state.load_scale * state.load_on
    load_q = np.array([ld.q_demand for ld in case.loads]) * state.load_scale * state.load_on

    converged_flags = []
    worst = 0.0
    iterations = 0
    for island, slack in zip(state.islands, state.island_slacks):
        pos = np.array(sorted(case.bus_index[b] for b in island), dtype=np.int64)
        res = _solve_island(
            state, opts, pos, case.bus_index[slack], y_series, y_half_shunt,
            f_all, t_all, load_p, load_q,
        )
        ok, mis, its, v_m, v_a, gp, gq, gens = res
        converged_flags.append(ok)
        worst = max(worst, mis)
        iterations = max(iterations, its)
        vm[pos] = v_m
        va[pos] = v_a
        gen_p[gens] = gp
        gen_q[gens] = gq

    # branch flows from the final voltages (last iterate for failed islands)
    V = vm * np.exp(1j * va)
    on = state.branch_on & state.bus_on[f_all] & state.bus_on[t_all]
    vf, vt = V[f_all], V[t_all]
    i_f = y_series * (vf - vt) + y_half_shunt * vf
    i_t = y_series * (vt - vf) + y_half_shunt * vt
    s_from[on] = (vf * np.conj(i_f))[on] * base
    s_to[on] = (vt * np.conj(i_t))[on] * base

    return PowerFlowSolution(
        converged=all(converged_flags),
        vm=vm,
        va=va,
        s_from=s_from,
        s_to=s_to,
        mismatch=worst,
        iterations=iterations,
        islands=state.islands,
        island_converged=tuple(converged_flags),
        gen_p=gen_p,
        gen_q=gen_q,
    )


def _solve_island(state, opts, pos, slack_pos, y_series, y_half_shunt, f_all, t_all, load_p, load_q):
    case = state.case
    base = case.base_mva
    n = len(pos)
    local = {int(p): i for i, p in enumerate(pos)}
    in_island = np.zeros(len(case.buses), dtype=bool)
    in_island[pos] = True

    # admittance matrix of the island
    br = state.branch_on & in_island[f_all] & in_island[t_all]
    fl = np.array([local[int(p)] for p in f_all[br]], dtype=np.int64)
    tl = np.array([local[int(p)] for p in t_all[br]], dtype=np.int64)
    ys, ysh = y_series[br], y_half_shunt[br]
    Y = np.zeros((n, n), dtype=complex)
    np.add.at(Y, (fl, fl), ys + ysh)
    np.add.at(Y, (tl, tl), ys + ysh)
    np.add.at(Y, (fl, tl), -ys)
    np.add.at(Y, (tl, fl), -ys)
    G = np.ascontiguousarray(Y.real)
    B = np.ascontiguousarray(Y.imag)

    # loads and generators mapped to local positions
    ld_mask = in_island[case.load_bus_pos] & state.load_on
    pd = np.zeros(n)
    qd = np.zeros(n)
    np.add.at(pd, [local[int(p)] for p in case.load_bus_pos[ld_mask]], load_p[ld_mask])
    np.add.at(qd, [local[int(p)] for p in case.load_bus_pos[ld_mask]], load_q[ld_mask])

    gens = np.flatnonzero(in_island[case.gen_bus_pos] & state.gen_on)
    g_local = np.array([local[int(case.gen_bus_pos[g])] for g in gens], dtype=np.int64)
    p_set = np.array([case.generators[g].p_set for g in gens])
    p_max = np.array([case.generators[g].p_max for g in gens])
    q_min = np.array([case.generators[g].q_min for g in gens])
    q_max = np.array([case.generators[g].q_max for g in gens])
    s_loc = local[int(slack_pos)]

    vm0 = np.ones(n)
    va0 = np.zeros(n)
    if not opts.flat_start:
        warm = state.vm[pos] > 0
        vm0[warm] = state.vm[pos][warm]
        va0[warm] = state.va[pos][warm] - state.va[slack_pos]
    vset = {}
    for g, gl in zip(gens, g_local):
        vset.setdefault(int(gl), case.generators[g].v_setpoint)
    for gl, v in vset.items():
        vm0[gl] = v

    def failed(mis, its):
        return False, mis, its, vm0, va0, p_set, np.zeros(len(gens)), gens

    demand = pd.sum()
    if opts.governor_sharing:
        if demand > p_max.sum() + 1e-9:
            return failed((demand - p_max.sum()) / base, 0)
        p_disp = _share_generation(demand, p_set, p_max)
    else:
        p_disp = p_set.copy()

    pg = np.zeros(n)
    np.add.at(pg, g_local, p_disp)
    p_spec = (pg - pd) / base

    qlo = np.zeros(n)
    qhi = np.zeros(n)
    np.add.at(qlo, g_local, q_min)
    np.add.at(qhi, g_local, q_max)

    pv = np.zeros(n, dtype=bool)
    pv[g_local] = True
    pv[s_loc] = False
    q_fixed = np.zeros(n)   # generator Q held at a limit after PV->PQ switching (MVAr)
    vm_it, va_it = vm0.copy(), va0.copy()
    total_its = 0
    for _ in range(opts.max_type_switches + 1):
        pq = ~pv
        pq[s_loc] = False
        q_spec = (q_fixed - qd) / base
        ok, mis, its, vm_it, va_it = _newton(G, B, vm_it, va_it, p_spec, q_spec, s_loc, pv, pq, opts)
        total_its += its
        if not ok:
            return False, mis, total_its, vm_it, va_it, p_disp, np.zeros(len(gens)), gens
        _, q_inj = kernels.injections(G, B, vm_it, va_it)
        q_gen_bus = q_inj * base + qd
        over = pv & (q_gen_bus > qhi + 1e-6)
        under = pv & (q_gen_bus < qlo - 1e-6)
        if not (over.any() or under.any()):
            break
        q_fixed[over] = qhi[over]
        q_fixed[under] = qlo[under]
        pv &= ~(over | under)
    else:
        return False, mis, total_its, vm_it, va_it, p_disp, np.zeros(len(gens)), gens

    p_inj, q_inj = kernels.injections(G, B, vm_it, va_it)
    p_bus_gen = p_inj * base + pd
    q_bus_gen = q_inj * base + qd
    gp = p_disp.copy()
    gq = np.zeros(len(gens))
    # slack units absorb the residual; units sharing a bus split Q by q range
    for gl in np.unique(g_local):
        members = np.flatnonzero(g_local == gl)
        if gl == s_loc:
            share = p_max[members] / p_max[members].sum()
            gp[members] = p_bus_gen[gl] * share
        span = q_max[members] - q_min[members]
        w = span / span.sum() if span.sum() > 0 else np.full(len(members), 1.0 / len(members))
        gq[members] = q_bus_gen[gl] * w
    return True, mis, total_its, vm_it, va_it, gp, gq, gens


def _newton(G, B, vm, va, p_spec, q_spec, s_loc, pv, pq, opts):
    n = len(vm)
    vm = vm.copy()
    va = va.copy()
    va_idx = np.flatnonzero(pv | pq)
    vm_idx = np.flatnonzero(pq)
    rows = np.concatenate([va_idx, n + vm_idx])
    cols = rows

    def residual():
        p, q = kernels.injections(G, B, vm, va)
        return np.concatenate([p[va_idx] - p_spec[va_idx], q[vm_idx] - q_spec[vm_idx]])

    F = residual()
    mis = float(np.max(np.abs(F))) if len(F) else 0.0
    its = 0
    while mis > opts.tolerance:
        if its >= opts.max_iterations:
            return False, mis, its, vm, va
        J = kernels.jacobian(G, B, vm, va)[np.ix_(rows, cols)]
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return False, INF, its, vm, va
        if not np.all(np.isfinite(dx)):
            return False, INF, its, vm, va
        va[va_idx] += dx[: len(va_idx)]
        vm[vm_idx] += dx[len(va_idx):]
        its += 1
        if np.any(vm[vm_idx] <= 0.05) or np.any(vm > 3.0):
            return False, INF, its, vm, va
        F = residual()
        mis = float(np.max(np.abs(F))) if len(F) else 0.0
    return True, mis, its, vm, va


def branch_loading(solution: PowerFlowSolution, case: NetworkCase) -> np.ndarray:
    """max(|S_from|, |S_to|) / secure_rating per branch (0 where no flow)."""
    secure = np.array([br.secure_rating for br in case.branches])
    flows = solution.branch_flows.max(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(secure > 0, flows / secure, np.where(flows > 0, INF, 0.0))
    return ratio


def island_balance(solution: PowerFlowSolution, state: SystemState) -> list[complex]:
    """Per-island complex residual: generation - load - branch losses (pu)."""
    case = state.case
    f, t = case.branch_ends
    load_p = np.array([ld.p_demand for ld in case.loads]) * state.load_scale * state.load_on
    load_q = np.array([ld.q_demand for ld in case.loads]) * state.load_scale * state.load_on
    out = []
    for island in solution.islands:
        mask = np.zeros(len(case.buses), dtype=bool)
        mask[[case.bus_index[b] for b in island]] = True
        g = mask[case.gen_bus_pos] & state.gen_on
        ld = mask[case.load_bus_pos]
        br = mask[f] & mask[t]
        gen = solution.gen_p[g].sum() + 1j * solution.gen_q[g].sum()
        load = load_p[ld].sum() + 1j * load_q[ld].sum()
        loss = (solution.s_from[br] + solution.s_to[br]).sum()
        out.append((gen - load - loss) / case.base_mva)
    return out
