from __future__ import annotations

import time

from conftest import bundled_spec
from programs import GEMV_WINNING, skeleton
from propsynth.config import SearchConfig
from propsynth.ir import Instr
from propsynth.oracle import Equivalent, equivalent, gen_tests, lookup_oracle
from propsynth.search import CompositionSearch, HoleOptions, make_problem, plan


def problem(name, **kw):
    spec = bundled_spec(name)
    cfg = SearchConfig(**kw)
    return make_problem(spec, lookup_oracle(name), cfg, gen_tests(spec, cfg.seed, cfg.n_tests))


def test_gemv_plan(gemv, rules):
    sk = skeleton(gemv, rules, GEMV_WINNING)
    pl = plan(sk)
    kinds = {hid: (sk.holes[hid].kind, sk.holes[hid].loop_id) for hid in range(len(sk.holes))}
    assert sorted(kinds[h] for h in pl.upstream) == [("body", 1), ("init", 1)]
    assert sorted(kinds[h] for h in pl.dead) == [("body", 0), ("init", 0)]
    assert [kinds[h] for h in pl.outputs] == [("store", 0)]


def test_unreadable_load_rejects_plan(gemv, rules):
    # a lone y-loop has nothing that could ever read y[i] on a void function
    sk = skeleton(gemv, rules, "[loop(m, y)]")
    assert plan(sk) is None


def test_hole_options_collapse_equivalent_fills(gemv, rules):
    sk = skeleton(gemv, rules, GEMV_WINNING)
    body = next(h for h in sk.holes if h.kind == "body" and h.loop_id == 1)
    opts = HoleOptions(body, 3)
    assert opts.of_length(0) == [()]
    acc = len(body.scope) - 1
    ones = [f for f in opts.of_length(1)]
    # acc + 0.0 and acc * 1.0 behave like the empty (no update) fill
    assert (Instr("fadd", 0, acc),) not in ones
    assert (Instr("fmul", 1, acc),) not in ones
    assert len(ones) < 2 * len(body.scope) ** 2 + 2 * len(body.scope)


def test_gemv_found_at_tier_two(rules):
    prob = problem("gemv", mode="exhaustive", seed=42)
    sk = skeleton(prob.spec, rules, GEMV_WINNING)
    search = CompositionSearch(prob, sk, 0)
    assert search.run_tier(0, float("inf"), time.monotonic).program is None
    assert search.run_tier(1, float("inf"), time.monotonic).program is None
    out = search.run_tier(2, float("inf"), time.monotonic)
    assert out.program is not None
    assert isinstance(equivalent(out.program, prob.oracle, prob.spec, 1000, seed=7), Equivalent)


def test_deadline_is_respected(rules):
    prob = problem("gemv", mode="exhaustive")
    sk = skeleton(prob.spec, rules, GEMV_WINNING)
    out = CompositionSearch(prob, sk, 0).run_tier(2, time.monotonic() - 1, time.monotonic)
    assert out.timed_out and out.counters.candidates_tried == 0


def test_composition_without_needed_store_is_not_viable(gemv, rules):
    prob = problem("gemv")
    sk = skeleton(gemv, rules, "[loop(m, y) { loop(n, x) { affine_access(a) } }]")
    assert CompositionSearch(prob, sk, 0).max_tier() == -1
