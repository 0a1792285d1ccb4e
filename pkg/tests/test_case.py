import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rasswitch.case import (
    CASE_SCHEMA, LossMetrics, SystemState, case_to_dict, load_ieee39, loss_metrics, parse_case,
    serialize_case, total_operational_load,
)
from rasswitch.errors import CaseIntegrityError, CaseParseError, UsageError
from rasswitch.powerflow import refresh_topology

from .conftest import SEC4_BRANCHES, make_case, two_bus_dict


def test_minimal_two_bus_case():
    case = make_case(two_bus_dict())
    assert len(case.buses) == 2 and len(case.branches) == 1
    assert case.slack_bus == 1
    assert case.branches[0].secure_rating == pytest.approx(220.0)
    assert case.nominal_load == pytest.approx(np.hypot(50, 20))


def test_ieee39_fixture_totals(ieee39):
    assert (len(ieee39.buses), len(ieee39.branches), len(ieee39.generators)) == (39, 46, 10)
    assert sum(ld.p_demand for ld in ieee39.loads) == pytest.approx(6254.2, abs=0.05)
    assert ieee39.nominal_load == pytest.approx(6501.0, abs=0.05)
    assert total_operational_load(SystemState.initial(ieee39)) == pytest.approx(6501.0, abs=0.05)


def test_ieee39_reference_branches(ieee39):
    assert ieee39.branch_between(19, 20).id == 32
    assert ieee39.branch_between(25, 2).id == 4
    assert ieee39.slack_bus == 31


def test_dangling_bus_reference():
    d = two_bus_dict()
    d["branches"][0]["to_bus"] = 99
    with pytest.raises(CaseIntegrityError, match="99"):
        make_case(d)


@pytest.mark.parametrize("kind", ["buses", "branches", "generators", "loads"])
def test_duplicate_ids(kind):
    d = two_bus_dict()
    if kind == "buses":
        d["buses"].append(dict(d["buses"][1]))
    else:
        d[kind].append(dict(d[kind][0]))
    with pytest.raises(CaseIntegrityError, match="duplicate"):
        make_case(d)


def test_schema_error_names_location():
    d = two_bus_dict()
    d["branches"][0]["x"] = "big"
    with pytest.raises(CaseParseError, match=r"branches\[0\]\.x"):
        make_case(d)


def test_not_json():
    with pytest.raises(CaseParseError):
        parse_case("{not json")


@pytest.mark.parametrize(
    "mutate, msg",
    [
        (lambda d: d["branches"][0].update(x=0.0), "x must be non-zero"),
        (lambda d: d["branches"][0].update(secure_rating=250.0), "secure_rating"),
        (lambda d: d["generators"][0].update(q_min=5.0, q_max=1.0), "q_min"),
        (lambda d: d["generators"][0].update(p_set=600.0), "p_set"),
        (lambda d: d["buses"][1].update(bus_kind="slack"), "exactly one slack"),
        (lambda d: d["buses"][0].update(v_min=1.2), "v_min"),
    ],
)
def test_integrity_rules(mutate, msg):
    d = two_bus_dict()
    mutate(d)
    with pytest.raises(CaseIntegrityError, match=msg):
        make_case(d)


def test_scale_outside_unit_interval_rejected():
    d = two_bus_dict()
    d["loads"][0]["scale"] = 1.5
    with pytest.raises(CaseParseError):
        make_case(d)


def test_three_levels_rejected():
    d = two_bus_dict()
    lvl = {"partitions": [[1], [2]], "tie_branches": [1]}
    d["islanding_scheme"] = {"levels": [lvl, lvl, lvl]}
    with pytest.raises(CaseParseError):
        make_case(d)


def test_overlapping_partitions_rejected():
    d = two_bus_dict()
    d["islanding_scheme"] = {"levels": [{"partitions": [[1, 2], [2]], "tie_branches": [1]}]}
    with pytest.raises(CaseIntegrityError, match="overlap"):
        make_case(d)


def test_round_trip(ieee39, ieee39_text):
    again = parse_case(serialize_case(ieee39))
    assert case_to_dict(again) == case_to_dict(ieee39)
    assert serialize_case(again) == ieee39_text


@given(
    p=st.floats(0, 500), q=st.floats(-200, 200), r=st.floats(0, 0.1), x=st.floats(0.001, 0.5),
    scale=st.floats(0, 1),
)
def test_round_trip_random_two_bus(p, q, r, x, scale):
    d = two_bus_dict(r=r, x=x, p=p, q=q)
    d["loads"][0]["scale"] = scale
    case = make_case(d)
    assert case_to_dict(parse_case(serialize_case(case))) == case_to_dict(case)


def test_schema_is_closed():
    assert CASE_SCHEMA["additionalProperties"] is False
    d = two_bus_dict()
    d["extra"] = 1
    with pytest.raises(CaseParseError):
        make_case(d)


def test_total_operational_load_examples():
    d = two_bus_dict(p=100.0, q=0.0)
    d["loads"].append({"id": 2, "bus": 2, "p_demand": 40.0, "q_demand": 30.0, "in_service": False})
    d["loads"][0]["scale"] = 0.5
    case = make_case(d)
    st_ = SystemState.initial(case)
    assert total_operational_load(st_) == pytest.approx(50.0)
    st_.load_on[:] = False
    assert total_operational_load(st_) == 0.0


def test_loss_metrics_examples(ieee39):
    base = SystemState.initial(ieee39)
    assert loss_metrics(base, base) == LossMetrics(0, 0, 0, 0)
    after = refresh_topology(base.open_branches(SEC4_BRANCHES))
    assert loss_metrics(after, base).as_tuple() == (0, 0, 0, 2)
    shed = after.copy()
    shed.load_scale[0] = 0.0
    assert loss_metrics(shed, base).loads == 1


def test_loss_metrics_other_case(ieee39):
    other = load_ieee39()
    with pytest.raises(UsageError):
        loss_metrics(SystemState.initial(other), SystemState.initial(ieee39))


def test_state_copy_is_independent(ieee39):
    a = SystemState.initial(ieee39)
    b = a.copy()
    b.load_scale[:] = 0.5
    b.branch_on[0] = False
    assert a.load_scale.min() == 1.0 and a.branch_on[0]
    assert a.fingerprint() != b.fingerprint()


def test_islands_partition_live_buses(ieee39):
    st_ = refresh_topology(SystemState.initial(ieee39).open_branches(
        ieee39.islanding_scheme.cumulative_ties(2)))
    members = [b for isl in st_.islands for b in isl]
    assert sorted(members) == sorted(int(b) for b, on in zip(ieee39.bus_ids, st_.bus_on) if on)
    gen_buses = {g.bus for g, on in zip(ieee39.generators, st_.gen_on) if on}
    assert all(s in gen_buses for s in st_.island_slacks)
    assert len(st_.island_slacks) == len(st_.islands)


def test_fixture_json_is_schema_valid(ieee39_text):
    raw = json.loads(ieee39_text)
    assert raw["branches"][31]["from_bus"] == 19 and raw["branches"][31]["to_bus"] == 20
