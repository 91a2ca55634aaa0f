"""Hand-built programs for the tests, written against scope value names."""

from __future__ import annotations

from propsynth.fragments import enumerate_compositions, instantiate_fragments, lower
from propsynth.ir import Instr, Program, Skeleton

GEMV_WINNING = "[loop(m, y) { loop(n, x) { affine_access(a) }, store(y) }]"


def skeleton(spec, rules, text: str, max_fragments: int = 4) -> Skeleton:
    frags = instantiate_fragments(rules, spec)
    for comp in enumerate_compositions(frags, max_fragments, spec):
        if str(comp) == text:
            return lower(comp, spec)
    raise LookupError(text)


def hole(sk: Skeleton, kind: str, loop_id: int | None = None):
    for h in sk.holes:
        if h.kind == kind and (loop_id is None or h.loop_id == loop_id):
            return h
    raise LookupError((kind, loop_id))


def fill(h, *instrs: tuple) -> tuple[Instr, ...]:
    """Instructions over scope names; ``%k`` names the k-th register."""
    names = [v.name for v in h.scope]

    def operand(x: str) -> int:
        return len(names) + int(x[1:]) if x.startswith("%") else names.index(x)

    return tuple(Instr(op, *(operand(a) for a in args)) for op, *args in instrs)


def program(sk: Skeleton, fills: dict, affine=None, ret: str | None = None) -> Program:
    """``fills`` maps hole ids to instruction tuples; missing holes stay empty."""
    all_fills = tuple(fills.get(h.id, ()) for h in sk.holes)
    ret_bare = None
    if ret is not None:
        rh = sk.holes[sk.return_hole]
        ret_bare = [v.name for v in rh.scope].index(ret)
    return Program(sk, all_fills, tuple(affine or (0,) * len(sk.sites)), ret_bare)


def gemv_solution(spec, rules) -> Program:
    sk = skeleton(spec, rules, GEMV_WINNING)
    body, store = hole(sk, "body", 1), hole(sk, "store", 0)
    fills = {
        body.id: fill(body, ("fmul", "x[j]", "a[?]"), ("fadd", "acc1", "%0")),
        store.id: fill(store, ("fmul", "alpha", "acc1"), ("fmul", "beta", "y[i]"), ("fadd", "%0", "%1")),
    }
    row_major = [c.text for c in sk.sites[0].candidates].index("i * n + j")
    return program(sk, fills, (row_major,))


def dot_solution(spec, rules) -> Program:
    sk = skeleton(spec, rules, "[zip_loop(n, x, y)]", 1)
    body = hole(sk, "body")
    return program(sk, {body.id: fill(body, ("fmul", "x[i]", "y[i]"), ("fadd", "acc0", "%0"))}, ret="acc0")
