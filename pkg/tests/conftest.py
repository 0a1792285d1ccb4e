import json

import pytest
from hypothesis import settings

from rasswitch.case import ieee39_path, load_ieee39, parse_case

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# the example N-2 contingency: branches 19-20 and 2-25
SEC4_BRANCHES = (32, 4)


@pytest.fixture(scope="session")
def ieee39():
    return load_ieee39()


@pytest.fixture(scope="session")
def ieee39_text():
    return ieee39_path().read_text(encoding="utf-8")


def two_bus_dict(r=0.01, x=0.1, b=0.0, p=50.0, q=20.0, v_set=1.0, p_max=500.0, rating=200.0):
    return {
        "base_mva": 100.0,
        "buses": [
            {"id": 1, "base_kv": 345.0, "bus_kind": "slack"},
            {"id": 2, "base_kv": 345.0, "bus_kind": "load"},
        ],
        "branches": [{"id": 1, "from_bus": 1, "to_bus": 2, "r": r, "x": x, "b_shunt": b, "rating": rating}],
        "generators": [{"id": 1, "bus": 1, "p_set": 0.0, "q_min": -999.0, "q_max": 999.0,
                        "v_setpoint": v_set, "p_max": p_max}],
        "loads": [{"id": 1, "bus": 2, "p_demand": p, "q_demand": q}],
    }


def make_case(d):
    return parse_case(json.dumps(d))


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[2:])):
        ok, title = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}  {title}")
