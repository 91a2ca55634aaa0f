"""Candidate program representation and a deterministic interpreter.

A :class:`Skeleton` is the control-flow shell produced from a composition:
loops with their loads and accumulators, affine loads with a set of index
candidates, stores, and typed holes.  A :class:`Program` fills every hole
with a straight-line instruction sequence over 64-bit floats.

Instruction operands index the hole's operand list: the hole's scope values
first, then the registers defined earlier in the same hole.  The register
written by instruction ``k`` of a hole with ``s`` scope values is operand
``s + k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, NamedTuple, Union

from .sigmodel import Signature

OPS = ("fadd", "fsub", "fmul", "fabs")
BINARY_OPS = ("fadd", "fsub", "fmul")
COMMUTATIVE = frozenset({"fadd", "fmul"})
_OPCODE = {op: i for i, op in enumerate(OPS)}


# --------------------------------------------------------------------------
# skeleton


@dataclass(frozen=True)
class Value:
    """A float value visible to holes: constant, scalar param, load or accumulator."""

    slot: int
    kind: str  # const | scalar | load | acc | affine
    name: str
    const: float | None = None

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class IndexExpr:
    """``inner`` alone, or ``outer * stride + inner`` (row/column-major)."""

    inner: int  # loop id
    outer: int | None = None
    stride: str | None = None  # int param name
    text: str = ""

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class Hole:
    id: int
    kind: str  # init | body | store | return
    scope: tuple[Value, ...]
    loop_id: int | None = None
    acc: Value | None = None

    @property
    def min_len(self) -> int:
        return 1 if self.kind == "store" else 0

    @property
    def allow_bare(self) -> bool:
        return self.kind == "return"


@dataclass(frozen=True)
class LoopNode:
    loop_id: int
    frag_id: int
    var: str
    bound: str
    loads: tuple[tuple[str, Value], ...]
    acc: Value
    init_hole: int
    body: tuple["Node", ...]
    body_hole: int


@dataclass(frozen=True)
class AffineNode:
    site: int
    frag_id: int
    array: str
    candidates: tuple[IndexExpr, ...]
    value: Value


@dataclass(frozen=True)
class StoreNode:
    frag_id: int
    array: str
    loop_id: int
    var: str
    hole: int


Node = Union[LoopNode, AffineNode, StoreNode]


@dataclass(frozen=True)
class Skeleton:
    signature: Signature
    root: tuple[LoopNode, ...]
    holes: tuple[Hole, ...]
    sites: tuple[AffineNode, ...]
    return_hole: int | None
    n_slots: int
    n_loops: int
    loop_vars: tuple[str, ...]
    composition: Any = field(default=None, compare=False)

    def loads(self) -> list[Value]:
        """Every fragment-provided load (loop loads and affine loads)."""
        out: list[Value] = []

        def walk(nodes: tuple[Node, ...]) -> None:
            for n in nodes:
                if isinstance(n, LoopNode):
                    out.extend(v for _, v in n.loads)
                    walk(n.body)
                elif isinstance(n, AffineNode):
                    out.append(n.value)

        walk(self.root)
        return out

    def hole_markers(self) -> list[str]:
        return [f"{h.kind}#{h.id}" for h in self.holes]

    def __str__(self) -> str:
        from .cemit import emit_skeleton

        return emit_skeleton(self)


# --------------------------------------------------------------------------
# programs


class Instr(NamedTuple):
    op: str
    lhs: int
    rhs: int | None = None

    def operands(self) -> tuple[int, ...]:
        return (self.lhs,) if self.rhs is None else (self.lhs, self.rhs)


Fill = tuple[Instr, ...]


@dataclass(frozen=True)
class Program:
    skeleton: Skeleton
    fills: tuple[Fill, ...]
    affine: tuple[int, ...]
    ret_bare: int | None = None  # scope index of the return hole when its fill is empty

    def __post_init__(self) -> None:
        problems = program_problems(self)
        if problems:
            raise ValueError("ill-formed program: " + "; ".join(problems))

    @cached_property
    def compiled(self) -> "_Compiled":
        return compile_fills(self.skeleton, self.fills, self.affine, self.ret_bare)

    def to_json(self) -> dict:
        sk = self.skeleton
        holes = []
        for h, fill in zip(sk.holes, self.fills):
            entry: dict[str, Any] = {
                "hole": h.id,
                "kind": h.kind,
                "scope": [v.name for v in h.scope],
                "instructions": [[i.op, i.lhs] + ([] if i.rhs is None else [i.rhs]) for i in fill],
            }
            if h.kind == "return" and not fill:
                entry["value"] = h.scope[self.ret_bare].name if self.ret_bare is not None else None
            holes.append(entry)
        return {
            "holes": holes,
            "affine": [
                {"site": s.site, "array": s.array, "index": s.candidates[c].text}
                for s, c in zip(sk.sites, self.affine)
            ],
        }


def program_problems(p: Program) -> list[str]:
    sk = p.skeleton
    out = []
    if len(p.fills) != len(sk.holes):
        return [f"expected {len(sk.holes)} hole fills, got {len(p.fills)}"]
    if len(p.affine) != len(sk.sites):
        return [f"expected {len(sk.sites)} affine choices, got {len(p.affine)}"]
    for site, c in zip(sk.sites, p.affine):
        if not 0 <= c < len(site.candidates):
            out.append(f"affine site {site.site}: choice {c} out of range")
    for h, fill in zip(sk.holes, p.fills):
        s = len(h.scope)
        for k, ins in enumerate(fill):
            if ins.op not in OPS:
                out.append(f"hole {h.id}: unknown op {ins.op}")
            if (ins.op == "fabs") != (ins.rhs is None):
                out.append(f"hole {h.id}: wrong operand count for {ins.op}")
            for o in ins.operands():
                if not 0 <= o < s + k:
                    out.append(f"hole {h.id}: operand {o} undefined at instruction {k}")
        if len(fill) < h.min_len:
            out.append(f"hole {h.id}: {h.kind} hole needs at least {h.min_len} instruction(s)")
        if h.kind == "return" and not fill:
            if p.ret_bare is None or not 0 <= p.ret_bare < s:
                out.append("return hole is empty and has no value designation")
    return out


# --------------------------------------------------------------------------
# run results


@dataclass(frozen=True)
class Ok:
    ret: float | None
    buffers: dict[str, list[float]]


@dataclass(frozen=True)
class Trap:
    reason: str  # out-of-bounds | undefined-register
    detail: str = ""


RunResult = Union[Ok, Trap]


class _TrapSignal(Exception):
    def __init__(self, reason: str, detail: str):
        self.reason = reason
        self.detail = detail


# --------------------------------------------------------------------------
# compilation to a slot machine

# compiled node forms:
#   ("loop", loop_id, bound, loads[(array, slot)], acc_slot, init_code, init_res,
#            body, body_code, body_res)
#   ("affine", array, index, slot)
#   ("store", array, loop_id, code, res, hole_id)


@dataclass
class _Compiled:
    root: list
    ret_code: list
    ret_res: int | None
    ret_hole: int | None
    n_slots: int
    n_loops: int
    consts: list[tuple[int, float]]
    scalars: list[tuple[int, str]]


def compile_fills(sk: Skeleton, fills: tuple[Fill, ...], affine: tuple[int, ...], ret_bare: int | None = None) -> _Compiled:
    """Compile hole fills for ``sk``; holes may be left open (empty) for probing."""
    next_slot = sk.n_slots
    hole_code: dict[int, tuple[list, int | None]] = {}
    for h, fill in zip(sk.holes, fills):
        slots = [v.slot for v in h.scope]
        code = []
        for ins in fill:
            dst = next_slot
            next_slot += 1
            a = slots[ins.lhs]
            b = slots[ins.rhs] if ins.rhs is not None else -1
            code.append((_OPCODE[ins.op], dst, a, b))
            slots.append(dst)
        if fill:
            res: int | None = slots[-1]
        elif h.kind == "return" and ret_bare is not None:
            res = h.scope[ret_bare].slot
        else:
            res = None
        hole_code[h.id] = (code, res)

    def conv(nodes: tuple[Node, ...]) -> list:
        out = []
        for n in nodes:
            if isinstance(n, LoopNode):
                ic, ir = hole_code[n.init_hole]
                bc, br = hole_code[n.body_hole]
                out.append(
                    ("loop", n.loop_id, n.bound, [(a, v.slot) for a, v in n.loads], n.acc.slot,
                     ic, ir, conv(n.body), bc, br)
                )
            elif isinstance(n, AffineNode):
                out.append(("affine", n.array, n.candidates[affine[n.site]], n.value.slot))
            else:
                sc, sr = hole_code[n.hole]
                out.append(("store", n.array, n.loop_id, sc, sr, n.hole))
        return out

    consts = []
    scalars = []
    seen = set()

    def collect(values: tuple[Value, ...]) -> None:
        for v in values:
            if v.slot in seen:
                continue
            seen.add(v.slot)
            if v.kind == "const":
                consts.append((v.slot, float(v.const)))  # type: ignore[arg-type]
            elif v.kind == "scalar":
                scalars.append((v.slot, v.name))

    for h in sk.holes:
        collect(h.scope)
    rc, rr = hole_code[sk.return_hole] if sk.return_hole is not None else ([], None)
    return _Compiled(conv(sk.root), rc, rr, sk.return_hole, next_slot, sk.n_loops, consts, scalars)


def _exec(code: list, env: list) -> None:
    for op, d, a, b in code:
        if op == 0:
            env[d] = env[a] + env[b]
        elif op == 1:
            env[d] = env[a] - env[b]
        elif op == 2:
            env[d] = env[a] * env[b]
        else:
            env[d] = math.fabs(env[a])


def _index(ix: IndexExpr, ivars: list, ints: dict) -> int:
    if ix.outer is None:
        return ivars[ix.inner]
    return ivars[ix.outer] * ints[ix.stride] + ivars[ix.inner]


def _run_block(nodes: list, env: list, ivars: list, ints: dict, bufs: dict, probe: dict | None) -> None:
    for n in nodes:
        tag = n[0]
        if tag == "loop":
            _, lid, bound, loads, acc, ic, ir, body, bc, br = n
            _exec(ic, env)
            env[acc] = env[ir] if ir is not None else 0.0
            count = ints[bound]
            for it in range(count):
                ivars[lid] = it
                for array, slot in loads:
                    buf = bufs[array]
                    if it >= len(buf):
                        raise _TrapSignal("out-of-bounds", f"{array}[{it}] with length {len(buf)}")
                    env[slot] = buf[it]
                _run_block(body, env, ivars, ints, bufs, probe)
                if br is not None:
                    _exec(bc, env)
                    env[acc] = env[br]
        elif tag == "affine":
            _, array, ix, slot = n
            k = _index(ix, ivars, ints)
            buf = bufs[array]
            if not 0 <= k < len(buf):
                raise _TrapSignal("out-of-bounds", f"{array}[{ix.text} = {k}] with length {len(buf)}")
            env[slot] = buf[k]
        else:
            _, array, lid, sc, sr, hid = n
            k = ivars[lid]
            buf = bufs[array]
            if not 0 <= k < len(buf):
                raise _TrapSignal("out-of-bounds", f"store {array}[{k}] with length {len(buf)}")
            if probe is not None and hid in probe:
                probe[hid].append((tuple(env), k))
                continue
            if sr is None:
                raise _TrapSignal("undefined-register", f"store to {array} has no value")
            _exec(sc, env)
            buf[k] = env[sr]


def run_compiled(c: _Compiled, scalars: dict[str, float], buffers: dict[str, list[float]], probe: dict | None = None) -> RunResult:
    env: list = [0.0] * c.n_slots
    for slot, value in c.consts:
        env[slot] = value
    for slot, name in c.scalars:
        env[slot] = float(scalars[name])
    ints = {k: v for k, v in scalars.items() if isinstance(v, int)}
    bufs = {k: list(v) for k, v in buffers.items()}
    ivars = [0] * c.n_loops
    try:
        _run_block(c.root, env, ivars, ints, bufs, probe)
        ret = None
        if c.ret_hole is not None:
            if probe is not None and c.ret_hole in probe:
                probe[c.ret_hole].append((tuple(env), None))
            else:
                if c.ret_res is None:
                    raise _TrapSignal("undefined-register", "return has no value")
                _exec(c.ret_code, env)
                ret = env[c.ret_res]
    except _TrapSignal as t:
        return Trap(t.reason, t.detail)
    return Ok(ret, bufs)


def interpret(p: Program, inputs: Any) -> RunResult:
    """Run ``p`` on a test case (anything with ``scalars`` and ``buffers``).

    Input buffers are copied; the returned buffers are the final contents.
    """
    return run_compiled(p.compiled, inputs.scalars, inputs.buffers)
