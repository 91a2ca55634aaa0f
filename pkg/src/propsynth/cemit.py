"""C-like rendering of skeletons and programs, and a checker that re-parses
and executes the rendered text."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .ir import AffineNode, LoopNode, Node, Program, Skeleton, StoreNode, Value
from .sigmodel import Void

_OP_SYMBOL = {"fadd": "+", "fsub": "-", "fmul": "*"}
INDENT = "  "


def _header(sk: Skeleton) -> str:
    sig = sk.signature
    params = []
    for p in sig.params:
        t = str(p.ctype)
        params.append(f"{t[:-1]} *{p.name}" if t.endswith("*") else f"{t} {p.name}")
    return f"{sig.return_type} {sig.name}({', '.join(params)})"


def _const_text(v: Value) -> str:
    return f"{v.const:.1f}f"


def emit_skeleton(sk: Skeleton) -> str:
    """Render the shell with ``?`` for unresolved values and hole markers."""
    lines = [_header(sk) + " {"]

    def name(v: Value) -> str:
        return _const_text(v) if v.kind == "const" else v.name

    def block(nodes: tuple[Node, ...], depth: int) -> None:
        pad = INDENT * depth
        for n in nodes:
            if isinstance(n, LoopNode):
                lines.append(f"{pad}// hole init#{n.init_hole} -> {n.acc.name}")
                lines.append(f"{pad}for (int {n.var} = 0; {n.var} < {n.bound}; ++{n.var}) {{")
                for array, v in n.loads:
                    lines.append(f"{pad}{INDENT}float {array}_{n.var} = {name(v)};")
                block(n.body, depth + 1)
                lines.append(f"{pad}{INDENT}// hole body#{n.body_hole} -> {n.acc.name}")
                lines.append(f"{pad}}}")
            elif isinstance(n, AffineNode):
                lines.append(f"{pad}float {n.array}_{n.site} = {n.array}[?];")
            else:
                lines.append(f"{pad}// hole store#{n.hole}")
                lines.append(f"{pad}{n.array}[{n.var}] = ?;")

    block(sk.root, 1)
    if sk.return_hole is not None:
        lines.append(f"{INDENT}// hole return#{sk.return_hole}")
        lines.append(f"{INDENT}return ?;")
    lines.append("}")
    return "\n".join(lines) + "\n"


def used_values(p: Program) -> set[int]:
    """Slots of scope values read by some instruction or the bare return."""
    used: set[int] = set()
    for h, fill in zip(p.skeleton.holes, p.fills):
        s = len(h.scope)
        for ins in fill:
            for o in ins.operands():
                if o < s:
                    used.add(h.scope[o].slot)
        if h.kind == "return" and not fill and p.ret_bare is not None:
            used.add(h.scope[p.ret_bare].slot)
    return used


def emit_c(p: Program) -> str:
    sk = p.skeleton
    used = used_values(p)
    names: dict[int, str] = {}
    counter = [0]
    lines = [_header(sk) + " {"]

    def fresh() -> str:
        n = f"v{counter[0]}"
        counter[0] += 1
        return n

    def ref(v: Value) -> str:
        if v.kind == "const":
            return _const_text(v)
        if v.kind == "scalar":
            return v.name
        return names[v.slot]

    def hole(hid: int, pad: str) -> str | None:
        h = sk.holes[hid]
        ops = [ref(v) if (v.kind in ("const", "scalar") or v.slot in names) else "?" for v in h.scope]
        result = None
        for ins in p.fills[hid]:
            dst = fresh()
            if ins.op == "fabs":
                expr = f"fabsf({ops[ins.lhs]})"
            else:
                expr = f"{ops[ins.lhs]} {_OP_SYMBOL[ins.op]} {ops[ins.rhs]}"  # type: ignore[index]
            lines.append(f"{pad}float {dst} = {expr};")
            ops.append(dst)
            result = dst
        if result is None and h.kind == "return" and p.ret_bare is not None:
            result = ops[p.ret_bare]
        return result

    def block(nodes: tuple[Node, ...], depth: int) -> None:
        pad = INDENT * depth
        for n in nodes:
            if isinstance(n, LoopNode):
                live = bool(p.fills[n.init_hole] or p.fills[n.body_hole]) or n.acc.slot in used
                if live:
                    init = hole(n.init_hole, pad)
                    acc = f"acc{n.loop_id}"
                    names[n.acc.slot] = acc
                    lines.append(f"{pad}float {acc} = {init if init is not None else '0.0f'};")
                lines.append(f"{pad}for (int {n.var} = 0; {n.var} < {n.bound}; ++{n.var}) {{")
                inner = pad + INDENT
                for array, v in n.loads:
                    names[v.slot] = fresh()
                    lines.append(f"{inner}float {names[v.slot]} = {array}[{n.var}];")
                block(n.body, depth + 1)
                if live:
                    upd = hole(n.body_hole, inner)
                    if upd is not None:
                        lines.append(f"{inner}{names[n.acc.slot]} = {upd};")
                lines.append(f"{pad}}}")
            elif isinstance(n, AffineNode):
                names[n.value.slot] = fresh()
                ix = n.candidates[p.affine[n.site]]
                lines.append(f"{pad}float {names[n.value.slot]} = {n.array}[{ix.text}];")
            else:
                e = hole(n.hole, pad)
                lines.append(f"{pad}{n.array}[{n.var}] = {e};")

    block(sk.root, 1)
    if sk.return_hole is not None:
        r = hole(sk.return_hole, INDENT)
        lines.append(f"{INDENT}return {r};")
    lines.append("}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# checker: a small parser/evaluator for the emitted subset


class CheckError(ValueError):
    pass


_HEADER = re.compile(r"^(void|float)\s+(\w+)\((.*)\)\s*\{$")
_FOR = re.compile(r"^for \(int (\w+) = 0; (\w+) < (\w+); \+\+(\w+)\) \{$")
_DECL = re.compile(r"^float (\w+) = (.+);$")
_ASSIGN = re.compile(r"^(\w+) = (.+);$")
_STORE = re.compile(r"^(\w+)\[(.+)\] = (.+);$")
_RETURN = re.compile(r"^return (.+);$")
_BINOP = re.compile(r"^(\S+) ([-+*]) (\S+)$")
_FABS = re.compile(r"^fabsf\((\S+)\)$")
_LOAD = re.compile(r"^(\w+)\[(.+)\]$")
_IDX2 = re.compile(r"^(\w+) \* (\w+) \+ (\w+)$")
_NUM = re.compile(r"^(-?\d+\.\d+)f$")


@dataclass
class CFunction:
    name: str
    returns_value: bool
    params: list[tuple[str, str]]
    body: list


def parse_c(text: str) -> CFunction:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("//")]
    if not lines:
        raise CheckError("empty text")
    m = _HEADER.match(lines[0])
    if not m:
        raise CheckError(f"bad header: {lines[0]}")
    params = []
    if m.group(3).strip():
        for part in m.group(3).split(","):
            part = part.strip()
            pm = re.match(r"^(int|float)\s*(\*?)\s*(\w+)$", part)
            if not pm:
                raise CheckError(f"bad parameter: {part}")
            params.append((pm.group(1) + pm.group(2), pm.group(3)))
    pos = 1

    def parse_block() -> list:
        nonlocal pos
        out: list = []
        while pos < len(lines):
            ln = lines[pos]
            pos += 1
            if ln == "}":
                return out
            if m := _FOR.match(ln):
                var, v2, bound, v3 = m.groups()
                if not var == v2 == v3:
                    raise CheckError(f"malformed loop: {ln}")
                out.append(("for", var, bound, parse_block()))
            elif m := _DECL.match(ln):
                out.append(("decl", m.group(1), m.group(2)))
            elif m := _STORE.match(ln):
                out.append(("store", m.group(1), m.group(2), m.group(3)))
            elif m := _ASSIGN.match(ln):
                out.append(("assign", m.group(1), m.group(2)))
            elif m := _RETURN.match(ln):
                out.append(("return", m.group(1)))
            else:
                raise CheckError(f"unrecognised statement: {ln}")
        raise CheckError("missing closing brace")

    body = parse_block()
    if pos != len(lines):
        raise CheckError("trailing text after function body")
    return CFunction(m.group(2), m.group(1) == "float", params, body)


class _Scope:
    def __init__(self, parent: "_Scope | None" = None):
        self.vars: dict[str, float] = {}
        self.parent = parent

    def lookup(self, name: str) -> float:
        s: _Scope | None = self
        while s is not None:
            if name in s.vars:
                return s.vars[name]
            s = s.parent
        raise CheckError(f"undefined name {name}")

    def assign(self, name: str, value: float) -> None:
        s: _Scope | None = self
        while s is not None:
            if name in s.vars:
                s.vars[name] = value
                return
            s = s.parent
        raise CheckError(f"assignment to undeclared {name}")


class _Return(Exception):
    def __init__(self, value: float):
        self.value = value


def run_c(fn: CFunction, scalars: dict, buffers: dict[str, list[float]]) -> tuple[float | None, dict[str, list[float]]]:
    """Execute a parsed function; raises IndexError on out-of-bounds access."""
    bufs = {k: list(v) for k, v in buffers.items()}
    top = _Scope()
    for ptype, pname in fn.params:
        if not ptype.endswith("*"):
            top.vars[pname] = scalars[pname]

    def index(text: str, scope: _Scope) -> int:
        if m := _IDX2.match(text):
            return int(scope.lookup(m.group(1))) * int(scope.lookup(m.group(2))) + int(scope.lookup(m.group(3)))
        return int(scope.lookup(text.strip()))

    def atom(text: str, scope: _Scope) -> float:
        if m := _NUM.match(text):
            return float(m.group(1))
        if m := _LOAD.match(text):
            buf = bufs[m.group(1)]
            k = index(m.group(2), scope)
            if not 0 <= k < len(buf):
                raise IndexError(f"{m.group(1)}[{k}]")
            return buf[k]
        return scope.lookup(text)

    def expr(text: str, scope: _Scope) -> float:
        if m := _FABS.match(text):
            return math.fabs(atom(m.group(1), scope))
        if m := _BINOP.match(text):
            a, op, b = atom(m.group(1), scope), m.group(2), atom(m.group(3), scope)
            return a + b if op == "+" else a - b if op == "-" else a * b
        return atom(text, scope)

    def run(stmts: list, scope: _Scope) -> None:
        for st in stmts:
            tag = st[0]
            if tag == "for":
                _, var, bound, body = st
                for it in range(int(scope.lookup(bound))):
                    inner = _Scope(scope)
                    inner.vars[var] = it
                    run(body, inner)
            elif tag == "decl":
                scope.vars[st[1]] = expr(st[2], scope)
            elif tag == "assign":
                scope.assign(st[1], expr(st[2], scope))
            elif tag == "store":
                buf = bufs[st[1]]
                k = index(st[2], scope)
                if not 0 <= k < len(buf):
                    raise IndexError(f"{st[1]}[{k}]")
                buf[k] = expr(st[3], scope)
            else:
                raise _Return(expr(st[1], scope))

    try:
        run(fn.body, _Scope(top))
    except _Return as r:
        return r.value, bufs
    return None, bufs


def check_roundtrip(text: str) -> CFunction:
    """Parse emitted text; raises :class:`CheckError` when it is malformed."""
    return parse_c(text)


def returns_void(sk: Skeleton) -> bool:
    return isinstance(sk.signature.return_type, Void)
