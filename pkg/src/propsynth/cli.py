"""Command line front end: ``synth run | check | match``."""

from __future__ import annotations

import argparse
import json
import sys
from importlib.resources import files
from pathlib import Path

from .config import SearchConfig
from .driver import Found, IncompatibleOracle, report, synthesize
from .oracle import Tolerance, UnknownOracle, lookup_oracle
from .query import RuleLibrary, head_key, match_rule, parse_rules
from .sigmodel import FunctionSpec, SpecError, check_eligible, parse_spec, print_spec

EXIT_FOUND, EXIT_NOT_FOUND, EXIT_INVALID, EXIT_UNKNOWN_ORACLE = 0, 1, 2, 3


class InputError(Exception):
    pass


def data_path(*parts: str):
    return files("propsynth").joinpath("data", *parts)


def _read(path: str | None, default) -> str:
    try:
        if path is None:
            return default.read_text()
        return Path(path).read_text()
    except OSError as e:
        raise InputError(f"cannot read {path or default}: {e.strerror or e}") from None


def load_spec(path: str | None, oracle: str | None = None) -> FunctionSpec:
    """Parse ``path``; without a path, the bundled spec named after ``oracle``."""
    if path is None:
        if oracle is None:
            raise InputError("--spec is required")
        default = data_path("specs", f"{oracle}.sig")
        if not default.is_file():
            raise InputError(f"no bundled spec for {oracle!r}; pass --spec")
        return parse_spec(default.read_text())
    return parse_spec(_read(path, None))


def load_rules(path: str | None) -> RuleLibrary:
    return parse_rules(_read(path, data_path("default.rules")))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="synth", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="synthesize a program matching an oracle")
    run.add_argument("--spec", help="signature + relations file (default: bundled spec for the oracle)")
    run.add_argument("--rules", help="rule library (default: bundled default.rules)")
    run.add_argument("--oracle", required=True, help="reference function name")
    d = SearchConfig()
    run.add_argument("--max-fragments", type=int, default=d.max_fragments)
    run.add_argument("--max-instr", type=int, default=d.max_instr_per_hole)
    run.add_argument("--mode", choices=("exhaustive", "random"), default=d.mode)
    run.add_argument("--strategy", choices=("staged", "enumerate"), default=d.strategy)
    run.add_argument("--max-candidates", type=int, default=d.max_candidates_per_composition)
    run.add_argument("--tests", type=int, default=d.n_tests)
    run.add_argument("--verify-tests", type=int, default=d.verify_tests)
    run.add_argument("--seed", type=int, default=d.seed)
    run.add_argument("--timeout-secs", type=float, default=d.timeout_seconds)
    run.add_argument("--tol-abs", type=float, default=d.tol.abs)
    run.add_argument("--tol-rel", type=float, default=d.tol.rel)
    run.add_argument("--emit", choices=("c", "json"), default="c")
    run.add_argument("--workers", type=int, default=d.workers)

    check = sub.add_parser("check", help="validate a spec file")
    check.add_argument("--spec", required=True)

    match = sub.add_parser("match", help="print the fragment heads the rules produce")
    match.add_argument("--spec", required=True)
    match.add_argument("--rules")
    return ap


def _config(args) -> SearchConfig:
    return SearchConfig(
        max_fragments=args.max_fragments,
        max_instr_per_hole=args.max_instr,
        mode=args.mode,
        max_candidates_per_composition=args.max_candidates,
        n_tests=args.tests,
        verify_tests=args.verify_tests,
        seed=args.seed,
        timeout_seconds=args.timeout_secs,
        tol=Tolerance(args.tol_abs, args.tol_rel),
        workers=args.workers,
        strategy=args.strategy,
    )


def _run(args) -> int:
    oracle = lookup_oracle(args.oracle)
    cfg = _config(args)
    spec = load_spec(args.spec, args.oracle)
    rules = load_rules(args.rules)
    result = synthesize(spec, rules, oracle, cfg)
    st = result.stats
    print(json.dumps({
        "status": type(result).__name__,
        "compositions_tried": st.compositions_tried,
        "candidates_tried": st.candidates_tried,
        "candidates_trapped": st.candidates_trapped,
        "wall_seconds": round(st.wall_seconds, 3),
        "winning_composition_index": st.winning_composition_index,
    }), file=sys.stderr)
    if args.emit == "json":
        sys.stdout.write(report(result, cfg))
    elif isinstance(result, Found):
        sys.stdout.write(result.c_text)
    return EXIT_FOUND if isinstance(result, Found) else EXIT_NOT_FOUND


def _check(args) -> int:
    spec = load_spec(args.spec)
    check_eligible(spec)
    sys.stdout.write(print_spec(spec))
    return EXIT_FOUND


def _match(args) -> int:
    spec = load_spec(args.spec)
    rules = load_rules(args.rules)
    heads = set()
    for rule in rules:
        heads |= match_rule(rule, spec)
    for h in sorted(heads, key=head_key):
        print(h)
    return EXIT_FOUND


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _run, "check": _check, "match": _match}[args.command]
    try:
        return handler(args)
    except UnknownOracle as e:
        print(f"synth: {e.args[0]}", file=sys.stderr)
        return EXIT_UNKNOWN_ORACLE
    except (SpecError, InputError, IncompatibleOracle, ValueError) as e:
        print(f"synth: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
