from __future__ import annotations

import itertools
import random

import pytest

from conftest import bundled_spec
from programs import GEMV_WINNING, dot_solution, fill, gemv_solution, hole, program, skeleton
from propsynth.cemit import emit_c, parse_c, run_c
from propsynth.config import SearchConfig
from propsynth.holes import fill_holes, loads_consumed, registers_consumed, sequences
from propsynth.ir import COMMUTATIVE, Instr, Ok, Program, Skeleton, Trap, interpret
from propsynth.oracle import Equivalent, TestCase, Tolerance, equivalent, gen_tests, lookup_oracle
from propsynth.sigmodel import parse_spec


def cfg(**kw):
    return SearchConfig(**kw)


def key(p: Program) -> tuple:
    """Identity of a filling within one skeleton (cheaper than hashing the skeleton)."""
    return p.fills, p.affine, p.ret_bare


# --------------------------------------------------------------------------
# hole filling


def test_dot_filling_in_exhaustive_space(dot, rules):
    want = dot_solution(dot, rules)
    space = fill_holes(want.skeleton, cfg(mode="exhaustive", max_instr_per_hole=2), random.Random(0))
    assert any(key(p) == key(want) for p in space)
    assert isinstance(equivalent(want, lookup_oracle("dot"), dot, 200, seed=3), Equivalent)


def test_max_instr_zero_only_empty_fills(dot, rules):
    sk = skeleton(dot, rules, "[zip_loop(n, x, y)]", 1)
    got = list(fill_holes(sk, cfg(mode="exhaustive", max_instr_per_hole=0), random.Random(0)))
    assert all(not f for p in got for f in p.fills)
    # nothing can read the loads with zero instructions
    assert got == []


def test_gemv_filling_is_within_budget(gemv, rules):
    p = gemv_solution(gemv, rules)
    assert max(len(f) for f in p.fills) <= 3
    for h, f in zip(p.skeleton.holes, p.fills):
        assert registers_consumed(f, len(h.scope))
        for ins in f:
            if ins.op in COMMUTATIVE:
                assert ins.lhs <= ins.rhs
        if len(f) <= 2:
            assert f in set(sequences(len(h.scope), len(f)))
    assert loads_consumed(p.skeleton, p.fills)


def _all_instrs(n):
    for op in ("fadd", "fsub", "fmul"):
        for a, b in itertools.product(range(n), repeat=2):
            yield Instr(op, a, b)
    for a in range(n):
        yield Instr("fabs", a)


def _brute_space(sk: Skeleton):
    """All fillings with at most one instruction per hole, canonicalized and pruned."""
    per_hole = []
    for h in sk.holes:
        s = len(h.scope)
        opts = set()
        if h.kind != "store":
            opts.add(((), None))
        if h.kind == "return":
            opts = {((), i) for i in range(s)}
        for ins in _all_instrs(s):
            if ins.op in COMMUTATIVE and ins.lhs > ins.rhs:
                ins = Instr(ins.op, ins.rhs, ins.lhs)
            opts.add(((ins,), None))
        per_hole.append(sorted(opts, key=repr))
    out = set()
    for combo in itertools.product(*per_hole):
        fills = tuple(c[0] for c in combo)
        if not loads_consumed(sk, fills):
            continue
        ret = combo[sk.return_hole][1] if sk.return_hole is not None else None
        for affine in itertools.product(*(range(len(s.candidates)) for s in sk.sites)):
            out.add((fills, affine, ret))
    return out


@pytest.mark.parametrize(
    "name, text",
    [
        ("scal", "[loop(n, x) { store(x) }]"),
        ("copy", "[loop(n, x)]"),
        ("asum", "[loop(n, x)]"),
        ("dot", "[zip_loop(n, x, y)]"),
    ],
)
def test_exhaustive_matches_brute_force_at_budget_one(rules, name, text):
    spec = bundled_spec(name)
    sk = skeleton(spec, rules, text)
    got = [key(p) for p in fill_holes(sk, cfg(mode="exhaustive", max_instr_per_hole=1), random.Random(0))]
    assert len(got) == len(set(got))
    assert set(got) == _brute_space(sk)


def test_random_mode_reproducible_and_in_space(rules):
    spec = bundled_spec("scal")
    sk = skeleton(spec, rules, "[loop(n, x) { store(x) }]")
    c = cfg(mode="random", max_instr_per_hole=1, max_candidates_per_composition=50)
    a = [key(p) for p in fill_holes(sk, c, random.Random(5))]
    b = [key(p) for p in fill_holes(sk, c, random.Random(5))]
    assert a == b
    assert len(a) == len(set(a)) <= 50
    assert set(a) <= _brute_space(sk)
    assert [key(p) for p in fill_holes(sk, c, random.Random(6))] != a


def test_exhaustive_order_is_deterministic(dot, rules):
    sk = skeleton(dot, rules, "[zip_loop(n, x, y)]", 1)
    c = cfg(mode="exhaustive", max_instr_per_hole=1)
    assert [key(p) for p in fill_holes(sk, c, random.Random(0))] == [key(p) for p in fill_holes(sk, c, random.Random(9))]


# --------------------------------------------------------------------------
# interpreter


def test_gemv_small_case(gemv, rules):
    p = gemv_solution(gemv, rules)
    tc = TestCase({"m": 1, "n": 2, "alpha": 1.0, "beta": 0.0}, {"a": [2.0, 3.0], "x": [4.0, 5.0], "y": [9.0]})
    got = interpret(p, tc)
    assert got == Ok(None, {"a": [2.0, 3.0], "x": [4.0, 5.0], "y": [23.0]})
    assert tc.buffers["y"] == [9.0]  # inputs are not mutated


def test_zero_trip_loops(dot, rules):
    sk = skeleton(dot, rules, "[zip_loop(n, x, y)]", 1)
    init, body = hole(sk, "init"), hole(sk, "body")
    p = program(sk, {init.id: fill(init, ("fadd", "1.0", "1.0")), body.id: fill(body, ("fmul", "x[i]", "y[i]"))}, ret="acc0")
    tc = TestCase({"n": 0}, {"x": [], "y": []})
    assert interpret(p, tc) == Ok(2.0, {"x": [], "y": []})


def test_short_matrix_traps(gemv, rules):
    p = gemv_solution(gemv, rules)
    tc = TestCase({"m": 2, "n": 2, "alpha": 1.0, "beta": 1.0}, {"a": [1.0, 2.0, 3.0], "x": [1.0, 1.0], "y": [0.0, 0.0]})
    got = interpret(p, tc)
    assert isinstance(got, Trap) and got.reason == "out-of-bounds"


def test_loop_load_overrun_traps(dot, rules):
    p = dot_solution(dot, rules)
    got = interpret(p, TestCase({"n": 3}, {"x": [1.0, 2.0, 3.0], "y": [1.0]}))
    assert isinstance(got, Trap) and got.reason == "out-of-bounds"


def test_interpret_deterministic(gemv, rules):
    p = gemv_solution(gemv, rules)
    for tc in gen_tests(gemv, 11, 20):
        assert interpret(p, tc) == interpret(p, tc)


def test_gemv_solution_exact_against_oracle(gemv, rules):
    p = gemv_solution(gemv, rules)
    v = equivalent(p, lookup_oracle("gemv"), gemv, 500, tol=Tolerance(0.0, 0.0), seed=1)
    assert isinstance(v, Equivalent)


def test_ill_formed_program_rejected(dot, rules):
    sk = skeleton(dot, rules, "[zip_loop(n, x, y)]", 1)
    with pytest.raises(ValueError, match="operand"):
        Program(sk, tuple((Instr("fadd", 0, 99),) if h.kind == "body" else () for h in sk.holes), (), 0)
    with pytest.raises(ValueError, match="return hole is empty"):
        Program(sk, tuple(() for _ in sk.holes), (), None)


# --------------------------------------------------------------------------
# C emission


def test_gemv_emission_shape(gemv, rules):
    text = emit_c(gemv_solution(gemv, rules))
    lines = [ln.strip() for ln in text.splitlines()]
    assert lines[1] == "for (int i = 0; i < m; ++i) {"
    assert "for (int j = 0; j < n; ++j) {" in lines
    assert any(ln.endswith("= x[j];") for ln in lines)
    assert any(ln.endswith("= a[i * n + j];") for ln in lines)
    store = next(k for k, ln in enumerate(lines) if ln.startswith("y[i] = "))
    inner_close = lines.index("}")
    assert inner_close < store < len(lines) - 2


DOT_GOLDEN = """\
float dot(int n, float *x, float *y) {
  float acc0 = 0.0f;
  for (int i = 0; i < n; ++i) {
    float v0 = x[i];
    float v1 = y[i];
    float v2 = v0 * v1;
    float v3 = acc0 + v2;
    acc0 = v3;
  }
  return acc0;
}
"""


def test_dot_golden_and_reparse(dot, rules):
    p = dot_solution(dot, rules)
    text = emit_c(p)
    assert text == DOT_GOLDEN
    fn = parse_c(text)
    for tc in gen_tests(dot, 4, 20):
        ret, bufs = run_c(fn, tc.scalars, tc.buffers)
        got = interpret(p, tc)
        assert (ret, bufs) == (got.ret, got.buffers)


def test_empty_body_emission():
    spec = parse_spec("function nop(n: int) -> void\n")
    sk = Skeleton(spec.signature, (), (), (), None, 0, 0, ())
    text = emit_c(Program(sk, (), ()))
    assert text == "void nop(int n) {\n}\n"
    assert parse_c(text).body == []


def test_single_assignment(gemv, rules):
    text = emit_c(gemv_solution(gemv, rules))
    decls = [ln.split("=")[0].split()[1] for ln in text.splitlines() if ln.strip().startswith("float v")]
    assert len(decls) == len(set(decls))
