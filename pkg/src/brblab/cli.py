"""Command-line entry point.

    brblab run <scenario.json> [--out DIR] [--seed N]
    brblab table [<suite.json>] [--csv PATH]
    brblab explore <protocol> --n N --f F [--max-executions K] [--seed N] [--out PATH]

Exit codes: 0 when every applicable check passes, 1 on a property failure,
2 on usage or parse errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .adversaries import scenario_from_json
from .network_sim import run
from .tables import DEFAULT_SUITE, build_table, render, to_csv
from .verifier import INCONCLUSIVE, Bounds, explore, verify

log = logging.getLogger("brblab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _load_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{path} is not valid JSON: {e}") from None


def cmd_run(scenario_path: str, out_dir=None, seed=None) -> int:
    doc = _load_json(scenario_path)
    if not isinstance(doc, dict):
        raise UsageError(f"{scenario_path}: a scenario must be a JSON object")
    try:
        scenario = scenario_from_json(doc)
        if seed is not None:
            scenario = dataclasses.replace(scenario, seed=seed)
        trace = run(scenario)
    except (KeyError, TypeError, ValueError) as e:
        raise UsageError(f"{scenario_path}: bad scenario: {e}") from None
    verdict = verify(trace)
    stem = Path(scenario_path).stem
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.trace.jsonl").write_text(trace.to_jsonl())
        (out / f"{stem}.verdict.json").write_text(json.dumps(verdict.to_json(), sort_keys=True, indent=2) + "\n")
    summary = {"scenario": scenario.name or stem, "expect_violation": scenario.expect_violation,
               "truncated": trace.truncated, "verdict": verdict.to_json()}
    print(json.dumps(summary, sort_keys=True, indent=2))
    if scenario.expect_violation:
        return EXIT_OK if verdict.violation else EXIT_FAIL
    checks = [verdict.agreement, verdict.validity, verdict.termination, *verdict.lemmas.values()]
    if verdict.ok and all(c.status != INCONCLUSIVE for c in checks):
        return EXIT_OK
    return EXIT_FAIL


def cmd_table(suite_path=None, csv_path=None) -> int:
    if suite_path is None:
        suite = DEFAULT_SUITE
    else:
        doc = _load_json(suite_path)
        suite = doc.get("rows", []) if isinstance(doc, dict) else doc
        if not isinstance(suite, list):
            raise UsageError(f"{suite_path}: a suite is a list of rows or {{\"rows\": [...]}}")
    try:
        rows = build_table(suite)
    except (KeyError, TypeError, ValueError) as e:
        raise UsageError(f"bad suite row: {e}") from None
    print(render(rows))
    if csv_path is not None:
        Path(csv_path).write_text(to_csv(rows))
    return EXIT_OK if all(r.matches for r in rows) else EXIT_FAIL


def cmd_explore(protocol, n, f, max_executions, seed, out_path=None) -> int:
    try:
        report = explore(protocol, n, f, Bounds(max_executions, seed))
    except ValueError as e:
        raise UsageError(str(e)) from None
    text = report.dumps()
    if out_path is not None:
        Path(out_path).write_text(text + "\n")
    print(text)
    return EXIT_FAIL if report.violation_count else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brblab", description="Byzantine reliable broadcast lab")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario and check it")
    p.add_argument("scenario")
    p.add_argument("--out", help="directory for the trace and verdict files")
    p.add_argument("--seed", type=int, help="override the scenario seed")

    p = sub.add_parser("table", help="measure good/bad-case rounds for a suite")
    p.add_argument("suite", nargs="?", help="suite JSON (default: the built-in suite)")
    p.add_argument("--csv", help="also write the table as CSV")

    p = sub.add_parser("explore", help="bounded exploration of the adversary family")
    p.add_argument("protocol")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--f", type=int, required=True)
    p.add_argument("--max-executions", type=int, default=10 ** 6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report JSON here")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args.scenario, args.out, args.seed)
        if args.command == "table":
            return cmd_table(args.suite, args.csv)
        return cmd_explore(args.protocol, args.n, args.f, args.max_executions, args.seed, args.out)
    except UsageError as e:
        print(f"brblab: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
