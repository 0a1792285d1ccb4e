"""Command-line entry point: ``rasswitch run | enumerate | validate-case``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .case import ieee39_path, load_case
from .errors import CaseIntegrityError, CaseParseError, RasSwitchError, SimulationFatalError, UsageError
from .experiment import (
    ContingencySpec, emit_results, enumerate_policy_tree, make_simulator, parse_policies, run_experiment,
)
from .protection import RelayOptions
from .switching import EQ4_LITERAL, TABLE_COMPATIBLE, SwitchingConfig

DEFAULTS = {
    "case": None,
    "contingency": "19-20,2-25",
    "random_n2": False,
    "seed": 0,
    "policies": "i,ls",
    "shed_ratio": 0.2,
    "horizon": 3,
    "dispatch_interval": 5.0,
    "relay_step": 0.1,
    "rollouts": 1,
    "noise": 0.0,
    "reward_mode": "table",
    "backend": "native",
    "workers": 1,
    "out": "results",
}
_MODES = {"table": TABLE_COMPATIBLE, "eq4": EQ4_LITERAL}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    # defaults are None so that only explicit flags override the config file
    p.add_argument("--config", type=Path, help="JSON file with any of the flags below (underscored keys)")
    p.add_argument("--case", help="case JSON (default: bundled IEEE 39-bus fixture)")
    p.add_argument("--contingency", help='bus pairs of the branches to open, e.g. "19-20,2-25"')
    p.add_argument("--random-n2", action="store_const", const=True, default=None,
                   help="draw two in-service branches at random (uses --seed)")
    p.add_argument("--seed", type=int)
    p.add_argument("--policies", help="comma list from i, ls, na (default i,ls)")
    p.add_argument("--shed-ratio", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--dispatch-interval", type=float)
    p.add_argument("--relay-step", type=float)
    p.add_argument("--rollouts", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--reward-mode", choices=sorted(_MODES))
    p.add_argument("--backend", choices=["native", "scripted"])
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory (default results)")


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; here 2 is reserved for fatal simulation errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rasswitch", description="Policy-switching remedial action experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add_run_flags(sub.add_parser("run", help="run the switching controller after a contingency"))
    _add_run_flags(sub.add_parser("enumerate", help="force every policy sequence up to the horizon"))
    v = sub.add_parser("validate-case", help="parse and check a case file")
    v.add_argument("--case", required=True)
    return ap


def resolve_options(args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(raw, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(raw) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        opts.update(raw)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    if opts["reward_mode"] not in _MODES:
        raise UsageError(f"reward_mode must be one of {sorted(_MODES)}")
    return opts


def _execute(command: str, opts: dict) -> int:
    case = load_case(opts["case"]) if opts["case"] else load_case(ieee39_path())
    cfg = SwitchingConfig(
        dispatch_interval=float(opts["dispatch_interval"]),
        horizon_dispatches=int(opts["horizon"]),
        rollouts_per_policy=int(opts["rollouts"]),
        reward_mode=_MODES[opts["reward_mode"]],
        load_noise_sigma=float(opts["noise"]),
        workers=int(opts["workers"]),
    )
    policies = parse_policies(opts["policies"], float(opts["shed_ratio"]))
    if opts["random_n2"]:
        spec = ContingencySpec.random_n2(int(opts["seed"]))
    else:
        spec = ContingencySpec.from_bus_pairs(case, opts["contingency"])
    sim = make_simulator(opts["backend"], case, RelayOptions(relay_step=float(opts["relay_step"])))
    seed = int(opts["seed"])
    if command == "run":
        trace = run_experiment(case, spec, policies, cfg, seed, sim=sim)
        paths = emit_results(trace, opts["out"], cfg.horizon_dispatches)
        print(f"sequence {'-'.join(trace.sequence) or '(none)'}: saved={trace.saved} "
              f"load={trace.operational_load:.1f} MVA final_reward={trace.final_reward:.3f} "
              f"value={trace.cumulative_value:.3f}")
    else:
        rows = enumerate_policy_tree(case, spec, policies, cfg, seed, sim=sim)
        meta = {"backend": opts["backend"], "config": cfg.to_dict(), "seed": seed,
                "contingency": spec.to_dict(), "policies": [p.to_dict() for p in policies]}
        paths = emit_results(rows, opts["out"], cfg.horizon_dispatches, meta)
        print(f"{len(rows)} sequences enumerated")
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate-case":
            case = load_case(args.case)
            print(f"ok: {len(case.buses)} buses, {len(case.branches)} branches, "
                  f"{len(case.generators)} generators, {len(case.loads)} loads, "
                  f"{len(case.islanding_scheme.levels)} islanding levels")
            return 0
        return _execute(args.command, resolve_options(args))
    except SimulationFatalError as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return 2
    except (UsageError, CaseParseError, CaseIntegrityError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RasSwitchError as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
