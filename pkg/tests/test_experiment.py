import json

import pytest

from rasswitch.case import SystemState
from rasswitch.cli import main
from rasswitch.errors import SimulationFatalError, UsageError
from rasswitch.experiment import (
    TABLE2_TREE, ContingencySpec, ScriptedOracle, ScriptedSimulator, best_row, emit_results,
    enumerate_policy_tree, inject_contingency, parse_policies, replay_trace, run_experiment, summary_header,
)
from rasswitch.powerflow import solve_powerflow
from rasswitch.protection import RasPolicy
from rasswitch.switching import SwitchingConfig

from .conftest import SEC4_BRANCHES, make_case, two_bus_dict

I, LS, NA = RasPolicy.island(), RasPolicy.load_shed(), RasPolicy.no_action()
SPEC = ContingencySpec.explicit(SEC4_BRANCHES)
# found by brute force over all branch pairs: the lightest-loaded pair (3-18, 12-11)
# whose outage keeps one island with every voltage inside the band
QUIET_PAIR = (7, 21)

# (sequence) -> per-dispatch (status, load, saved, reward, losses) transcribed from the published table
TABLE2 = {
    ("I", "I", "I"): [("executed", 4759, False, 0.366, (7, 2, 4, 13)),
                      ("executed", 3848, False, 0.296, (14, 3, 8, 21)), ("infeasible",)],
    ("LS", "LS", "LS"): [("executed", 5224, False, 0.401, (3, 2, 1, 6)),
                         ("executed", 2922, True, 0.725, (21, 5, 9, 27)), ("not_needed",)],
    ("I", "I", "LS"): [("executed", 4759, False, 0.366, (7, 2, 4, 13)),
                       ("executed", 3848, False, 0.296, (14, 3, 8, 21)),
                       ("executed", 3463, True, 0.766, (14, 3, 8, 21))],
    ("I", "LS", "I"): [("executed", 4759, False, 0.366, (7, 2, 4, 13)),
                       ("executed", 4283, True, 0.829, (7, 2, 4, 13)), ("not_needed",)],
    ("I", "LS", "LS"): [("executed", 4759, False, 0.366, (7, 2, 4, 13)),
                        ("executed", 4283, True, 0.829, (7, 2, 4, 13)), ("not_needed",)],
    ("LS", "LS", "I"): [("executed", 5224, False, 0.401, (3, 2, 1, 6)),
                        ("executed", 2922, True, 0.725, (21, 5, 9, 27)), ("not_needed",)],
    ("LS", "I", "LS"): [("executed", 5224, False, 0.401, (3, 2, 1, 6)),
                        ("executed", 4749, True, 0.865, (5, 2, 3, 9)), ("not_needed",)],
    ("LS", "I", "I"): [("executed", 5224, False, 0.401, (3, 2, 1, 6)),
                       ("executed", 4749, True, 0.865, (5, 2, 3, 9)), ("not_needed",)],
}


def _base(case):
    st = SystemState.initial(case)
    sol = solve_powerflow(st)
    st.vm, st.va = sol.vm.copy(), sol.va.copy()
    return st


def test_section_four_contingency_detected(ieee39):
    _, detected, events = inject_contingency(_base(ieee39), SPEC)
    assert detected
    assert {e.element for e in events if e.element[0] == "branch"} >= {("branch", 32), ("branch", 4)}


def test_quiet_pair_not_detected(ieee39):
    state, detected, events = inject_contingency(_base(ieee39), ContingencySpec.explicit(QUIET_PAIR))
    assert not detected and len(state.islands) == 1
    assert [e.element for e in events] == [("branch", 7), ("branch", 21)]


def test_random_n2_is_seeded(ieee39):
    base = _base(ieee39)
    a = ContingencySpec.random_n2(5).resolve(base)
    assert a == ContingencySpec.random_n2(5).resolve(base) and len(set(a)) == 2
    draws = {ContingencySpec.random_n2(s).resolve(base) for s in range(30)}
    assert len(draws) > 20


def test_contingency_errors(ieee39):
    base = _base(ieee39)
    with pytest.raises(UsageError):
        ContingencySpec.explicit([999]).resolve(base)
    with pytest.raises(UsageError):
        ContingencySpec.explicit([1]).resolve(base.open_branches([1]))
    with pytest.raises(UsageError):
        ContingencySpec.from_bus_pairs(ieee39, "1-99")
    with pytest.raises(UsageError):
        ContingencySpec.explicit([])


def test_oracle_prefix_closure():
    assert TABLE2_TREE[()][0] == 6501.0
    with pytest.raises(UsageError):
        ScriptedOracle(tree={(): (1.0, False, (0, 0, 0, 0)), ("I", "I"): (1.0, True, (0, 0, 0, 0))})


def test_parse_policies():
    assert parse_policies("i,ls") == [I, LS]
    assert parse_policies("LS", 0.3)[0].shed_ratio == 0.3
    with pytest.raises(UsageError):
        parse_policies("x")


# --- scripted oracle runs


def _scripted(policies, cfg=None):
    return run_experiment(None, SPEC, policies, cfg or SwitchingConfig(), 0, sim=ScriptedSimulator())


def test_scripted_shaded_path():
    tr = _scripted([I, LS])
    assert tr.sequence == ("LS", "I")
    assert tr.final_reward == pytest.approx(0.865, abs=1e-3)
    assert tr.operational_load == 4749.0 and tr.saved
    assert tr.dispatches[-1].losses.as_tuple() == (5, 2, 3, 9)
    assert tr.cumulative_value == pytest.approx(0.401784 + 2 * 0.865251, abs=1e-5)


def test_scripted_single_policy_experiments():
    ls = _scripted([LS])
    assert ls.final_reward == pytest.approx(0.725, abs=1e-3) and ls.operational_load == 2922.0
    only_i = _scripted([I])
    assert only_i.final_reward == pytest.approx(0.296, abs=1e-3) and only_i.operational_load == 3848.0
    assert only_i.dispatches[-1].note.startswith("no feasible policy") and not only_i.saved


def test_scripted_enumeration_matches_table():
    rows = enumerate_policy_tree(None, SPEC, [I, LS], SwitchingConfig(), sim=ScriptedSimulator())
    assert {r.sequence for r in rows} == set(TABLE2)
    for row in rows:
        for step, want in zip(row.steps, TABLE2[row.sequence]):
            assert step.status == want[0]
            if want[0] == "executed":
                assert (step.load, step.saved, step.losses.as_tuple()) == (want[1], want[2], want[4])
                assert step.reward == pytest.approx(want[3], abs=1e-3)


def test_table_consistency_property():
    sim = ScriptedSimulator()
    rows = enumerate_policy_tree(None, SPEC, [I, LS], SwitchingConfig(), sim=sim)
    assert _scripted([I, LS]).sequence == best_row(rows).executed


def test_singleton_island_enumeration():
    rows = enumerate_policy_tree(None, SPEC, [I], SwitchingConfig(), sim=ScriptedSimulator())
    assert len(rows) == 1
    assert [s.status for s in rows[0].steps] == ["executed", "executed", "infeasible"]
    assert not rows[0].feasible


def test_horizon_one_enumeration():
    rows = enumerate_policy_tree(None, SPEC, [I, LS], SwitchingConfig(horizon_dispatches=1),
                                 sim=ScriptedSimulator())
    assert [r.sequence for r in rows] == [("I",), ("LS",)]


@pytest.mark.parametrize("policies", [[I, LS], [LS], [I], [LS, I]])
def test_row_count_bound(policies):
    rows = enumerate_policy_tree(None, SPEC, policies, SwitchingConfig(), sim=ScriptedSimulator())
    assert len(rows) == len(policies) ** 3


# --- native runs


def test_native_no_action_cascades(ieee39):
    tr = run_experiment(ieee39, SPEC, [NA], SwitchingConfig(), 0)
    assert not tr.saved and tr.operational_load == 0.0
    assert tr.meta["detected"]


def test_native_switching_dominates_singletons(ieee39):
    cfg = SwitchingConfig()
    sw = run_experiment(ieee39, SPEC, [I, LS], cfg, 0)
    assert sw.saved
    for single in ([I], [LS], [NA]):
        assert sw.cumulative_value >= run_experiment(ieee39, SPEC, single, cfg, 0).cumulative_value


@pytest.mark.parametrize("seed", [3, 8, 21])
def test_native_dominance_on_random_n2(ieee39, seed):
    spec = ContingencySpec.random_n2(seed)
    cfg = SwitchingConfig()
    sw = run_experiment(ieee39, spec, [I, LS], cfg, seed)
    for single in ([I], [LS]):
        assert sw.cumulative_value >= run_experiment(ieee39, spec, single, cfg, seed).cumulative_value - 1e-12


def test_native_trace_invariants(ieee39):
    tr = run_experiment(ieee39, SPEC, [I, LS], SwitchingConfig(), 0)
    clocks = [d.clock for d in tr.dispatches]
    assert clocks == sorted(clocks) and clocks[0] == 0.0
    loads = [ieee39.nominal_load] + [d.reward.operational_load for d in tr.dispatches]
    assert all(b <= a + 1e-9 for a, b in zip(loads, loads[1:]))
    assert all(0.0 <= d.reward.reward <= 1.0 for d in tr.dispatches)
    assert 0.0 <= tr.cumulative_value <= 3.0


def test_quiet_contingency_needs_no_dispatch(ieee39):
    tr = run_experiment(ieee39, ContingencySpec.explicit(QUIET_PAIR), [I, LS], SwitchingConfig(), 0)
    assert tr.dispatches == [] and tr.saved and not tr.meta["detected"]
    assert tr.cumulative_value == pytest.approx(3 * tr.final_reward)


def test_unsolvable_base_case_is_fatal():
    case = make_case(two_bus_dict(p=300.0, p_max=100.0))
    with pytest.raises(SimulationFatalError):
        run_experiment(case, ContingencySpec.explicit([1]), [LS], SwitchingConfig(), 0)


# --- output


def test_emit_table_csv(tmp_path):
    rows = enumerate_policy_tree(None, SPEC, [I, LS], SwitchingConfig(), sim=ScriptedSimulator())
    jpath, cpath = emit_results(rows, tmp_path, 3)
    lines = cpath.read_text().splitlines()
    assert lines[0].split(",") == summary_header(3) and len(lines) == 9
    assert json.loads(jpath.read_text())["rows"][0]["sequence"] == ["I", "I", "I"]


def test_emit_empty_table(tmp_path):
    _, cpath = emit_results([], tmp_path, 2)
    assert cpath.read_text().splitlines() == [",".join(summary_header(2))]


def test_emit_is_byte_identical(tmp_path, ieee39):
    outs = []
    for k in range(2):
        tr = run_experiment(ieee39, SPEC, [I, LS], SwitchingConfig(), 4)
        j, c = emit_results(tr, tmp_path / str(k), 3)
        outs.append((j.read_bytes(), c.read_bytes()))
    assert outs[0] == outs[1]


def test_emit_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_results([], blocker / "sub", 1)


def test_replay_reproduces_trace(tmp_path, ieee39):
    tr = run_experiment(ieee39, SPEC, [I, LS], SwitchingConfig(rollouts_per_policy=2, load_noise_sigma=0.02), 9)
    jpath, _ = emit_results(tr, tmp_path, 3)
    doc = json.loads(jpath.read_text())
    assert replay_trace(doc, ieee39).to_dict() == doc
    again = emit_results(replay_trace(doc, ieee39), tmp_path / "again", 3)[0]
    assert again.read_bytes() == jpath.read_bytes()


@pytest.mark.parametrize("workers", [2, 8])
def test_worker_count_does_not_change_trace(tmp_path, ieee39, workers):
    cfg1 = SwitchingConfig(rollouts_per_policy=3, load_noise_sigma=0.02)
    cfgn = SwitchingConfig(rollouts_per_policy=3, load_noise_sigma=0.02, workers=workers)
    a = emit_results(run_experiment(ieee39, SPEC, [I, LS], cfg1, 2), tmp_path / "a", 3)[0]
    b = emit_results(run_experiment(ieee39, SPEC, [I, LS], cfgn, 2), tmp_path / "b", 3)[0]
    assert a.read_bytes() == b.read_bytes()


# --- CLI


def test_cli_run_and_enumerate(tmp_path, capsys):
    assert main(["run", "--backend", "scripted", "--out", str(tmp_path / "r")]) == 0
    assert "LS-I" in capsys.readouterr().out
    assert main(["enumerate", "--backend", "scripted", "--out", str(tmp_path / "e")]) == 0
    assert len((tmp_path / "e" / "summary.csv").read_text().splitlines()) == 9


def test_cli_native_run(tmp_path):
    assert main(["run", "--contingency", "19-20,2-25", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "trace.json").read_text())
    assert doc["final"]["saved"] and doc["meta"]["opened_branches"] == [4, 32]


def test_cli_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"backend": "scripted", "horizon": 1, "policies": "ls"}))
    assert main(["enumerate", "--config", str(cfg), "--horizon", "2", "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "trace.json").read_text())
    assert doc["meta"]["config"]["horizon_dispatches"] == 2
    assert [r["sequence"] for r in doc["rows"]] == [["LS", "LS"]]


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["validate-case", "--case", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert main(["validate-case", "--case", str(bad)]) == 1
    assert main(["run", "--policies", "zz", "--out", str(tmp_path)]) == 1
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert main(["run", "--config", str(cfg)]) == 1
    dead = tmp_path / "dead.json"
    dead.write_text(json.dumps(two_bus_dict(p=300.0, p_max=100.0)))
    assert main(["run", "--case", str(dead), "--contingency", "1-2", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["run", "--reward-mode", "bogus"])
    assert exc.value.code == 1


def test_cli_validate_fixture(capsys):
    from rasswitch.case import ieee39_path
    assert main(["validate-case", "--case", str(ieee39_path())]) == 0
    assert "39 buses" in capsys.readouterr().out
