from __future__ import annotations

import json
from pathlib import Path

import pytest

from conftest import bundled_spec
from propsynth.cemit import parse_c, run_c
from propsynth.config import SearchConfig
from propsynth.driver import Exhausted, Found, IncompatibleOracle, Stats, TimedOut, report, synthesize
from propsynth.ir import interpret
from propsynth.oracle import Equivalent, equivalent, gen_tests, lookup_oracle
from propsynth.query import parse_rules
from propsynth.sigmodel import parse_spec

GOLDEN = Path(__file__).parent / "golden" / "dot_report.json"


@pytest.fixture(scope="module")
def dot_result(dot, rules):
    cfg = SearchConfig(mode="exhaustive", max_instr_per_hole=2)
    return synthesize(dot, rules, lookup_oracle("dot"), cfg), cfg


def test_dot_found(dot, dot_result):
    result, _ = dot_result
    assert isinstance(result, Found)
    text = result.c_text
    assert text.count("for (") == 1
    assert " * " in text and " + " in text
    assert text.rstrip().endswith("return acc0;\n}".rstrip())
    assert isinstance(equivalent(result.program, lookup_oracle("dot"), dot, 1000, seed=2024), Equivalent)


def test_dot_text_agrees_with_interpreter(dot, dot_result):
    result, _ = dot_result
    fn = parse_c(result.c_text)
    for tc in gen_tests(dot, 77, 50):
        got = interpret(result.program, tc)
        assert run_c(fn, tc.scalars, tc.buffers) == (got.ret, got.buffers)


def test_dot_report_golden(dot_result):
    result, cfg = dot_result
    text = report(result, cfg)
    doc = json.loads(text)
    assert doc["status"] == "found" and doc["stats"]["candidates_tried"] > 0
    assert text == GOLDEN.read_text()


def test_report_field_order(dot_result):
    result, cfg = dot_result
    doc = json.loads(report(result, cfg))
    assert list(doc) == ["status", "stats", "config", "composition", "program", "c"]
    assert list(doc["stats"]) == ["compositions_tried", "candidates_tried", "candidates_trapped", "winning_composition_index"]


def test_reproducible(dot, rules, dot_result):
    result, cfg = dot_result
    again = synthesize(dot, rules, lookup_oracle("dot"), cfg)
    assert report(again, cfg) == report(result, cfg)


def test_no_rules_is_exhausted(dot):
    result = synthesize(dot, parse_rules(""), lookup_oracle("dot"), SearchConfig())
    assert isinstance(result, Exhausted)
    assert result.stats.compositions_tried == 0
    assert json.loads(report(result))["status"] == "exhausted"


def test_timeout(gemv, rules):
    cfg = SearchConfig(timeout_seconds=1e-6)
    result = synthesize(gemv, rules, lookup_oracle("gemv"), cfg)
    assert isinstance(result, TimedOut)
    doc = json.loads(report(result, cfg))
    assert doc["status"] == "timeout"
    assert doc["stats"]["wall_seconds"] >= cfg.timeout_seconds
    assert "program" not in doc


def test_incompatible_oracle(gemv, rules):
    with pytest.raises(IncompatibleOracle):
        synthesize(gemv, rules, lookup_oracle("dot"), SearchConfig())


def test_ineligible_spec(rules):
    from propsynth.sigmodel import SpecError

    with pytest.raises(SpecError):
        synthesize(parse_spec("function f(x: float**) -> void\n"), rules, lookup_oracle("dot"), SearchConfig())


def test_literal_strategy_on_scal(rules):
    spec = bundled_spec("scal")
    cfg = SearchConfig(mode="exhaustive", max_instr_per_hole=1, max_fragments=2, strategy="enumerate")
    result = synthesize(spec, rules, lookup_oracle("scal"), cfg)
    assert isinstance(result, Found)
    assert isinstance(equivalent(result.program, lookup_oracle("scal"), spec, 500, seed=5), Equivalent)
    staged = synthesize(spec, rules, lookup_oracle("scal"), SearchConfig(mode="exhaustive", max_instr_per_hole=1, max_fragments=2))
    assert staged.c_text == result.c_text
    assert result.stats.candidates_tried > 0


def test_workers_agree_with_single(dot, rules, dot_result):
    result, cfg = dot_result
    multi = synthesize(dot, rules, lookup_oracle("dot"), SearchConfig(mode="exhaustive", max_instr_per_hole=2, workers=2))
    assert report(multi) == report(result)


def test_oracle_writing_unannotated_buffer_is_never_matched(rules):
    # scal overwrites x; without output(x) there is no store to reproduce that
    spec = parse_spec("function scal(n: int, alpha: float, x: float*) -> void\nrelations:\n    size(x, n)\n")
    result = synthesize(spec, rules, lookup_oracle("scal"), SearchConfig(mode="exhaustive", max_instr_per_hole=2))
    assert isinstance(result, Exhausted)


def test_config_validation():
    for bad in (dict(max_fragments=0), dict(mode="sideways"), dict(n_tests=0), dict(size_range=(0, 2)), dict(workers=0)):
        with pytest.raises(ValueError):
            SearchConfig(**bad)
    assert Stats().winning_composition_index is None
