"""Command-line entry point.

Subcommands:

    run                   run a scenario file and write JSON reports
    validate-pattern      check a pattern file or a built-in gadget pair
    attack-demo NAME      print attack statistics (only ``six-of-nine``)
    enumerate-colourings  list the trap colourings of a pattern's graph
    selftest              quick end-to-end sanity checks

Exit codes: 0 success, 2 the protocol aborted, 1 any tool error.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np

from . import adversary, dbqc, dmpqc, mbqc, qsim, vbqc

EXIT_OK, EXIT_ERROR, EXIT_ABORT = 0, 1, 2

NAMED_STATES = {
    "zero": qsim.KET0,
    "one": qsim.KET1,
    "plus": qsim.PLUS,
    "minus": np.array([1, -1], dtype=complex) / np.sqrt(2),
    "plus_i": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "minus_i": np.array([1, -1j], dtype=complex) / np.sqrt(2),
}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise CliError(message)


# -- scenario files ------------------------------------------------------------------


def parse_state(raw: Any) -> np.ndarray:
    if isinstance(raw, str):
        if raw not in NAMED_STATES:
            raise CliError(f"unknown state name {raw!r}")
        return NAMED_STATES[raw]
    try:
        vec = np.array([complex(re, im) for re, im in raw], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad state {raw!r}") from exc
    if vec.shape != (2,) or np.linalg.norm(vec) < 1e-12:
        raise CliError("a state is two [re, im] amplitudes, not all zero")
    return vec / np.linalg.norm(vec)


def _vertex_lookup(vertices: Sequence) -> dict[str, Any]:
    return {str(v): v for v in vertices}


def parse_pattern(raw: Any) -> mbqc.Pattern:
    if isinstance(raw, dict) and raw.get("builtin") == "two-line":
        return mbqc.two_line(int(raw.get("phi", 0)))
    try:
        vertices = list(raw["vertices"])
        look = _vertex_lookup(vertices)
        edges = [tuple(look[str(v)] for v in e) for e in raw["edges"]]
        inputs = [look[str(v)] for v in raw["inputs"]]
        outputs = [look[str(v)] for v in raw["outputs"]]
        angles = {look[k]: int(a) % 8 for k, a in raw.get("angles", {}).items()}
        if "flow" in raw:
            flow = {look[k]: look[str(v)] for k, v in raw["flow"].items()}
        else:
            flow = mbqc.find_flow(vertices, edges, inputs, outputs)
        for v in vertices:
            if v not in outputs:
                angles.setdefault(v, 0)
        p = mbqc.Pattern(vertices, edges, inputs, outputs, flow, angles)
        p.validate()
        return p
    except (KeyError, TypeError) as exc:
        raise CliError(f"malformed pattern: {exc}") from exc


def load_scenario(path: str | Path) -> dmpqc.ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(data)


def scenario_from_dict(data: dict) -> dmpqc.ScenarioConfig:
    known = {
        "name", "clients", "pattern", "inputs", "outputs", "output_mode", "gadget", "malicious",
        "server_deviations", "client_deviations", "seed", "mode", "repetitions", "qubit_cap",
    }
    unknown = set(data) - known
    if unknown:
        raise CliError(f"unknown scenario fields {sorted(unknown)}")
    try:
        base = parse_pattern(data["pattern"])
        look = _vertex_lookup(base.vertices)
        inputs, positions = {}, {}
        for item in data["inputs"]:
            v = look[str(item["vertex"])]
            inputs[v] = dmpqc.InputSpec(int(item["client"]), parse_state(item["state"]))
            if "position" in item:
                positions[v] = int(item["position"])
        outputs = {look[str(item["vertex"])]: int(item["client"]) for item in data["outputs"]}
        cfg = dmpqc.ScenarioConfig(
            base=base,
            n_clients=int(data["clients"]),
            inputs=inputs,
            outputs=outputs,
            name=str(data.get("name", "scenario")),
            output_mode=data.get("output_mode", "quantum"),
            gadget=data.get("gadget", "hi"),
            input_positions=positions,
            server=adversary.from_entries(data.get("server_deviations", [])),
            clients=adversary.client_behaviours_from_entries(data.get("client_deviations", [])),
            malicious=[int(j) for j in data.get("malicious", [])],
            mode=data.get("mode", "sample"),
            seed=int(data.get("seed", 0)),
            repetitions=int(data.get("repetitions", 1)),
            qubit_cap=int(data.get("qubit_cap", qsim.DEFAULT_QUBIT_CAP)),
        )
        cfg.validate()
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"invalid scenario: {exc}") from exc
    return cfg


# -- subcommands --------------------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.mode is not None:
        cfg.mode = args.mode
    if args.repetitions is not None:
        cfg.repetitions = args.repetitions
    if args.qubit_cap is not None:
        cfg.qubit_cap = args.qubit_cap
    cfg.validate()
    base_seed = cfg.seed
    reports = []
    for k in range(cfg.repetitions):
        cfg.seed = base_seed + k
        reports.append(dmpqc.run_dmpqc(cfg).to_dict())
    text = json.dumps({"reports": reports}, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    for r in reports:
        status = "accepted" if r["accepted"] else "ABORT"
        print(f"seed {r['seed']}: {status} digest {r['transcript_digest'][:16]}", file=sys.stderr)
    return EXIT_OK if all(r["accepted"] for r in reports) else EXIT_ABORT


def cmd_validate_pattern(args: argparse.Namespace) -> int:
    if args.gadget:
        if args.gadget not in dbqc.GADGETS:
            raise CliError(f"unknown gadget {args.gadget!r}")
        make = dbqc.GADGETS[args.gadget]
        ok, reasons = dbqc.colouring_independence(make(True), make(False))
        print(json.dumps({"gadget": args.gadget, "valid": ok, "reasons": reasons}, indent=2))
        return EXIT_OK if ok else EXIT_ERROR
    if not args.pattern:
        raise CliError("give --pattern PATH or --gadget NAME")
    try:
        raw = json.loads(Path(args.pattern).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read pattern: {exc}") from exc
    reasons = []
    try:
        p = parse_pattern(raw)
        for i in p.inputs:
            if len(p.neighbours(i)) != 1:
                reasons.append(f"input {i!r} has degree {len(p.neighbours(i))}, need 1")
    except (CliError, ValueError) as exc:
        reasons.append(str(exc))
    print(json.dumps({"pattern": str(args.pattern), "valid": not reasons, "reasons": reasons}, indent=2))
    return EXIT_OK if not reasons else EXIT_ERROR


def cmd_attack_demo(args: argparse.Namespace) -> int:
    if args.name != "six-of-nine":
        raise CliError(f"unknown demo {args.name!r}")
    gadget = "hi" if args.compliant_gadget else "line"
    factory = dbqc.GADGETS[gadget]
    stats = adversary.run_six_of_nine_attack(gadget=gadget, seed=args.seed or 0)
    dist = adversary.effect_distinguishability(factory, compensate=not args.compliant_gadget)
    print(f"gadget: {gadget}")
    print(f"{'configuration':<16}{'runs':>6}{'detected':>10}{'corrupted':>11}")
    for sigma, (runs, det, cor) in stats.per_configuration.items():
        print(f"{str(sigma):<16}{runs:>6}{det:>10}{cor:>11}")
    print(f"total: detected {stats.detected}/{stats.runs} ({stats.detected_fraction:.4f}), "
          f"corrupted {stats.corrupted}/{stats.runs} ({stats.corrupted_fraction:.4f})")
    per_class = sorted({cor for _, cor in stats.per_colouring.values()})
    print(f"corrupted configurations per colouring: {per_class} of {len(stats.per_configuration)}")
    verdict = "colouring-independent" if dist <= 1e-9 else "colouring-dependent"
    print(f"gadget effect H vs I: distance {dist:.3e} ({verdict})")
    return EXIT_OK


def cmd_enumerate_colourings(args: argparse.Namespace) -> int:
    base = load_scenario(args.scenario).base if args.scenario else mbqc.two_line(0)
    dt = vbqc.build_dtg(base.vertices, base.edges)
    cols = vbqc.enumerate_colourings(dt)
    rows = [{str(v): list(pos) for v, pos in c.positions} for c in cols]
    print(json.dumps({"dt_vertices": len(dt.vertices), "colourings": len(cols), "positions": rows}))
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    checks = []
    rng = np.random.default_rng(args.seed or 0)
    for h in (True, False):
        effects = adversary.gadget_effects(dbqc.hi_gadget, h, flip=False, samples=2)
        checks.append((f"hi gadget {'H' if h else 'I'} exact", all(qsim.phase_distance(e, qsim.I2) < 1e-9 for e in effects)))
    ok, _ = dbqc.colouring_independence(dbqc.hi_gadget(True), dbqc.hi_gadget(False))
    checks.append(("hi gadget colouring independence", ok))
    res = vbqc.run_vbqc(mbqc.two_line(1), {1: qsim.PLUS}, rng)
    checks.append(("vbqc honest accept", res.leaves[0].accepted and res.leaves[0].fidelity > 1 - 1e-9))
    rep = dmpqc.run_dmpqc(dmpqc.two_line_scenario(1, 2, qsim.PLUS, seed=args.seed or 0))
    checks.append(("dmpqc honest two-line", rep.accepted and rep.min_fidelity > 1 - 1e-9))
    checks.append(("dmpqc smpc calls d+5", rep.smpc_calls == rep.layers + 5))
    for name, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
    return EXIT_OK if all(p for _, p in checks) else EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="verimpqc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("--scenario", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--repetitions", type=int)
    run.add_argument("--mode", choices=["sample", "enumerate"])
    run.add_argument("--out")
    run.add_argument("--qubit-cap", type=int)
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate-pattern", help="validate a pattern file or gadget pair")
    val.add_argument("--pattern")
    val.add_argument("--gadget")
    val.set_defaults(func=cmd_validate_pattern)

    att = sub.add_parser("attack-demo", help="print attack statistics")
    att.add_argument("name")
    att.add_argument("--compliant-gadget", action="store_true")
    att.add_argument("--seed", type=int)
    att.set_defaults(func=cmd_attack_demo)

    col = sub.add_parser("enumerate-colourings", help="list trap colourings")
    col.add_argument("--scenario")
    col.set_defaults(func=cmd_enumerate_colourings)

    st = sub.add_parser("selftest", help="quick sanity checks")
    st.add_argument("--seed", type=int)
    st.set_defaults(func=cmd_selftest)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except qsim.QubitCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
