"""Regenerate ``src/rasswitch/data/ieee39.json`` from the raw IEEE 39-bus tables.

Steps:
1. Scale active/reactive demand so the fixture totals 6254.2 MW and
   6501 MVA (sum of per-load apparent power).
2. Re-dispatch generation with the solver's governor sharing and store the
   resulting set points.
3. Set every branch rating to its worst flow over the base case and all
   solvable N-1 branch outages (rounded up to whole MVA), so the base case and
   every N-1 case stay below the secure (1.1x) limit.
4. Search for a two-level islanding scheme: level 1 splits the grid into two
   connected halves, level 2 splits each half once more; every island must
   keep |load - generation| under 15% of its load.

Run:  python tools/build_ieee39.py [--check]
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

sys.path.insert(0, str(Path(__file__).resolve().parent))
from ieee39_raw import BASE_MVA, BRANCHES, BUSES, GENERATORS  # noqa: E402

from rasswitch.case import SystemState, parse_case, serialize_case  # noqa: E402
from rasswitch.powerflow import SolverOptions, refresh_topology, solve_powerflow  # noqa: E402

OUT = Path(__file__).resolve().parents[1] / "src" / "rasswitch" / "data" / "ieee39.json"
TARGET_MW = 6254.2
TARGET_MVA = 6501.0
IMBALANCE = 0.15


def load_scaling() -> tuple[float, float]:
    P = [b[2] for b in BUSES]
    Q = [b[3] for b in BUSES]
    kp = TARGET_MW / sum(P)
    kq = brentq(lambda k: sum(math.hypot(kp * p, k * q) for p, q in zip(P, Q)) - TARGET_MVA, 0.0, 3.0)
    return kp, kq


def raw_case(ratings=None, p_set=None, scheme=None) -> dict:
    kp, kq = load_scaling()
    kinds = {1: "load", 2: "generation", 3: "slack"}
    buses = [
        {"id": b, "base_kv": float(kv), "bus_kind": kinds[t], "v_min": 0.9, "v_max": 1.12}
        for b, t, _, _, kv in BUSES
    ]
    loads = []
    for b, _, pd, qd, _ in BUSES:
        if pd or qd:
            loads.append({
                "id": len(loads) + 1, "bus": b,
                "p_demand": round(kp * pd, 4), "q_demand": round(kq * qd, 4),
                "scale": 1.0, "in_service": True,
            })
    gens = []
    for i, (b, pg, qmax, qmin, vg, pmax) in enumerate(GENERATORS):
        p = pg if p_set is None else p_set[i]
        gens.append({
            "id": i + 1, "bus": b, "p_set": round(min(p, pmax), 3),
            "q_min": qmin, "q_max": qmax, "v_setpoint": vg, "p_max": pmax, "in_service": True,
        })
    branches = []
    for i, (f, t, r, x, bsh, rate) in enumerate(BRANCHES):
        rating = float(rate if ratings is None else ratings[i])
        branches.append({
            "id": i + 1, "from_bus": f, "to_bus": t, "r": r, "x": x, "b_shunt": bsh,
            "rating": rating, "secure_rating": 1.1 * rating, "in_service": True,
        })
    return {
        "base_mva": BASE_MVA, "buses": buses, "branches": branches,
        "generators": gens, "loads": loads,
        "islanding_scheme": scheme or {"levels": []},
    }


def solve(case, opened=()):
    st = SystemState.initial(case)
    if opened:
        st = refresh_topology(st.open_branches(opened))
    return st, solve_powerflow(st, SolverOptions())


def redispatch(case) -> list[float]:
    _, sol = solve(case)
    assert sol.converged
    return [float(p) for p in sol.gen_p]


def n1_ratings(case) -> list[float]:
    worst = np.zeros(len(case.branches))
    _, base = solve(case)
    worst = np.maximum(worst, base.branch_flows.max(axis=1))
    for br in case.branches:
        st, sol = solve(case, [br.id])
        if not sol.converged:
            print(f"  N-1 outage of branch {br.id} ({br.from_bus}-{br.to_bus}) does not solve; skipped")
            continue
        worst = np.maximum(worst, sol.branch_flows.max(axis=1))
    return [math.ceil(w / 1.1 * 10 - 1e-9) / 10 for w in worst]


def _components(nodes, edges):
    adj = {n: set() for n in nodes}
    for a, b in edges:
        if a in adj and b in adj:
            adj[a].add(b)
            adj[b].add(a)
    seen, comps = set(), []
    for n in sorted(nodes):
        if n in seen:
            continue
        stack, comp = [n], set()
        while stack:
            u = stack.pop()
            if u in comp:
                continue
            comp.add(u)
            stack.extend(adj[u] - comp)
        seen |= comp
        comps.append(comp)
    return comps


def _balance_ok(part, case) -> bool:
    load = sum(ld.p_demand for ld in case.loads if ld.bus in part)
    gen = sum(g.p_set for g in case.generators if g.bus in part)
    cap = sum(g.p_max for g in case.generators if g.bus in part)
    return load > 0 and gen > 0 and abs(load - gen) < IMBALANCE * load and load < cap


def _bisections(nodes, case, trials=20000, seed=39):
    """Connected bisections of ``nodes`` found by seeded random region growth.

    Returns a list of (cut_size, part_a, part_b, tie_ids) with both parts
    connected and balanced, deduplicated and sorted by cut size.
    """
    rng = np.random.default_rng(seed)
    edges = [(br.id, br.from_bus, br.to_bus) for br in case.branches
             if br.from_bus in nodes and br.to_bus in nodes]
    adj = {n: set() for n in nodes}
    for _, a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    order = sorted(nodes)
    n = len(order)
    if n < 2:
        return []
    seen, found = set(), []
    for _ in range(trials):
        target = int(rng.integers(1, n))
        start = order[int(rng.integers(n))]
        part = {start}
        frontier = set(adj[start])
        while len(part) < target and frontier:
            nxt = sorted(frontier)[int(rng.integers(len(frontier)))]
            part.add(nxt)
            frontier |= adj[nxt]
            frontier -= part
        rest = set(nodes) - part
        key = frozenset(part) if min(part) == min(nodes) else frozenset(rest)
        if key in seen or not rest:
            continue
        seen.add(key)
        if len(_components(rest, [(a, b) for _, a, b in edges])) != 1:
            continue
        if not (_balance_ok(part, case) and _balance_ok(rest, case)):
            continue
        ties = sorted(i for i, a, b in edges if (a in part) != (b in part))
        a, b = sorted([part, rest], key=min)
        found.append((len(ties), a, b, ties))
    found.sort(key=lambda o: (o[0], _score([o[1], o[2]], case), o[3]))
    return found


def _score(parts, case):
    s = 0.0
    for p in parts:
        load = sum(ld.p_demand for ld in case.loads if ld.bus in p)
        gen = sum(g.p_set for g in case.generators if g.bus in p)
        s += abs(load - gen) / load
    return s


def islanding_scheme(case) -> dict:
    nodes = {b.id for b in case.buses}
    best = None
    for k, a, b, ties in _bisections(nodes, case)[:200]:
        if not _acceptable(case, ties):
            continue
        sub = []
        for half in (a, b):
            pick = next(
                (o for o in _bisections(half, case, trials=4000) if _acceptable(case, ties + o[3])),
                None,
            )
            if pick is None:
                break
            sub.append(pick)
        if len(sub) != 2 or not _acceptable(case, ties + sub[0][3] + sub[1][3]):
            continue
        key = (k + sub[0][0] + sub[1][0], abs(len(a) - len(b)), _score([a, b], case), ties)
        if best is None or key < best[0]:
            best = (key, a, b, ties, sub)
    if best is None:
        raise SystemExit("no admissible islanding scheme found")
    _, a, b, ties, sub = best
    l2_parts = [sorted(p) for s in sub for p in (s[1], s[2])]
    l2_ties = sorted(t for s in sub for t in s[3])
    return {
        "levels": [
            {"partitions": sorted([sorted(a), sorted(b)]), "tie_branches": ties},
            {"partitions": sorted(l2_parts), "tie_branches": l2_ties},
        ]
    }


def _acceptable(case, opened) -> bool:
    """Islands formed by opening ``opened`` all solve with voltages in [0.9, 1.12]."""
    st, sol = solve(case, opened)
    if not sol.converged or len(st.islands) != len(sol.islands):
        return False
    live = sol.vm[st.bus_on]
    return bool(live.min() >= 0.9 and live.max() <= 1.12)


def build() -> str:
    case = parse_case(json.dumps(raw_case()))
    p_set = redispatch(case)
    case = parse_case(json.dumps(raw_case(p_set=p_set)))
    ratings = n1_ratings(case)
    case = parse_case(json.dumps(raw_case(ratings=ratings, p_set=p_set)))
    scheme = islanding_scheme(case)
    case = parse_case(json.dumps(raw_case(ratings=ratings, p_set=p_set, scheme=scheme)))
    return serialize_case(case)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true", help="fail if the committed fixture is stale")
    args = ap.parse_args()
    text = build()
    if args.check:
        if OUT.read_text(encoding="utf-8") != text:
            raise SystemExit("fixture out of date; rerun tools/build_ieee39.py")
        print("fixture up to date")
        return
    OUT.write_text(text, encoding="utf-8")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
