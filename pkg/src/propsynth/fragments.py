"""Fragment instances, compositions and lowering to skeletons."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Iterator

from .ir import AffineNode, Hole, IndexExpr, LoopNode, Node as IRNode, Skeleton, StoreNode, Value
from .query import FragmentHead, RuleLibrary, head_key, match_rule
from .sigmodel import INT, FLOAT, Atom, FunctionSpec, ParamRef, TypeLit, check_eligible, is_pointer

log = logging.getLogger(__name__)

LOOP_KINDS = ("loop", "zip_loop")
LEAF_KINDS = ("store", "affine_access")
MAX_AFFINE_DEPTH = 2
LOOP_VARS = "ijklmn"


@dataclass(frozen=True)
class FragmentInstance:
    id: int
    kind: str
    args: tuple[Atom, ...]

    @property
    def is_loop(self) -> bool:
        return self.kind in LOOP_KINDS

    @property
    def bound(self) -> str:
        assert self.is_loop
        return self.args[0].name  # type: ignore[union-attr]

    @property
    def arrays(self) -> tuple[str, ...]:
        if self.kind == "loop":
            return (self.args[2].name,)  # type: ignore[union-attr]
        if self.kind == "zip_loop":
            return (self.args[2].name, self.args[4].name)  # type: ignore[union-attr]
        return (self.args[0].name,)  # type: ignore[union-attr]

    def short(self) -> str:
        """Compact form without type arguments, e.g. ``loop(n, x)``."""
        if self.is_loop:
            return f"{self.kind}({self.bound}, {', '.join(self.arrays)})"
        return f"{self.kind}({self.arrays[0]})"

    def __str__(self) -> str:
        return f"{self.kind}({', '.join(str(a) for a in self.args)})"


def _type_checks(head: FragmentHead, spec: FunctionSpec) -> bool:
    def param_type(a: Atom):
        if isinstance(a, ParamRef) and spec.signature.has_param(a.name):
            return spec.signature.param(a.name).ctype
        return None

    def array_ok(x: Atom, t: Atom) -> bool:
        pt = param_type(x)
        return pt is not None and is_pointer(pt) and isinstance(t, TypeLit) and t.ctype == pt

    a = head.args
    if head.kind == "loop":
        return param_type(a[0]) == INT and array_ok(a[2], a[1])
    if head.kind == "zip_loop":
        return param_type(a[0]) == INT and array_ok(a[2], a[1]) and array_ok(a[4], a[3])
    if head.kind in LEAF_KINDS:
        return array_ok(a[0], a[1])
    return False


def instantiate_fragments(lib: RuleLibrary, spec: FunctionSpec) -> tuple[FragmentInstance, ...]:
    check_eligible(spec)
    heads: set[FragmentHead] = set()
    for rule in lib:
        for h in match_rule(rule, spec):
            if _type_checks(h, spec):
                heads.add(h)
            else:
                log.debug("dropping ill-typed fragment %s", h)
    ordered = sorted(heads, key=head_key)
    return tuple(FragmentInstance(i, h.kind, h.args) for i, h in enumerate(ordered))


# --------------------------------------------------------------------------
# compositions


@dataclass(frozen=True)
class Node:
    frag: FragmentInstance
    children: tuple["Node", ...] = ()

    def key(self) -> tuple:
        return (self.frag.id, tuple(c.key() for c in self.children))

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)

    def walk(self) -> Iterator["Node"]:
        yield self
        for c in self.children:
            yield from c.walk()

    def __str__(self) -> str:
        if not self.children:
            return self.frag.short()
        return f"{self.frag.short()} {{ {', '.join(str(c) for c in self.children)} }}"


@dataclass(frozen=True)
class Composition:
    roots: tuple[Node, ...]

    def key(self) -> tuple:
        return tuple(r.key() for r in self.roots)

    @property
    def size(self) -> int:
        return sum(r.size() for r in self.roots)

    def instances(self) -> list[FragmentInstance]:
        return [n.frag for r in self.roots for n in r.walk()]

    def __str__(self) -> str:
        return "[" + ", ".join(str(r) for r in self.roots) + "]"


def _store_parent_ok(store: FragmentInstance, parent: FragmentInstance | None, spec: FunctionSpec) -> bool:
    if parent is None or not parent.is_loop:
        return False
    return ParamRef(parent.bound) in spec.size_params(store.arrays[0])


def composition_problems(comp: Composition, spec: FunctionSpec) -> list[str]:
    """Every violated composition invariant (empty when valid)."""
    out: list[str] = []
    if not comp.roots:
        out.append("empty composition")
    ids = [f.id for f in comp.instances()]
    if len(ids) != len(set(ids)):
        out.append("fragment instance used more than once")

    def check(node: Node, parent: FragmentInstance | None, loop_depth: int) -> None:
        f = node.frag
        if f.is_loop:
            if parent is not None and not parent.is_loop:
                out.append(f"{f.short()} nested under {parent.short()}")
        else:
            if node.children:
                out.append(f"{f.short()} cannot have children")
            if f.kind == "store" and not _store_parent_ok(f, parent, spec):
                out.append(f"{f.short()} needs a parent loop over its size")
            if f.kind == "affine_access" and not 1 <= loop_depth <= MAX_AFFINE_DEPTH:
                out.append(f"{f.short()} needs 1..{MAX_AFFINE_DEPTH} enclosing loops, has {loop_depth}")
        for c in node.children:
            check(c, f, loop_depth + (1 if f.is_loop else 0))

    for r in comp.roots:
        check(r, None, 0)
    return out


def _forests(items: tuple[FragmentInstance, ...], parent: FragmentInstance | None, depth: int, spec: FunctionSpec) -> list[tuple[Node, ...]]:
    """All valid ordered forests over exactly ``items`` placed under ``parent``."""
    if not items:
        return [()]
    out: list[tuple[Node, ...]] = []
    for r in items:
        rest = tuple(f for f in items if f is not r)
        if r.is_loop:
            if parent is not None and not parent.is_loop:
                continue
        else:
            if r.kind == "store" and not _store_parent_ok(r, parent, spec):
                continue
            if r.kind == "affine_access" and not 1 <= depth <= MAX_AFFINE_DEPTH:
                continue
        sub_choices = range(len(rest) + 1) if r.is_loop else [0]
        for k in sub_choices:
            for below in itertools.combinations(rest, k):
                after = tuple(f for f in rest if f not in below)
                for kids in _forests(below, r, depth + 1, spec):
                    for siblings in _forests(after, parent, depth, spec):
                        out.append((Node(r, kids),) + siblings)
    return out


def enumerate_compositions(frags, max_fragments: int, spec: FunctionSpec) -> Iterator[Composition]:
    """Valid compositions by nondecreasing size, canonical order within a size."""
    if max_fragments < 1:
        raise ValueError("max_fragments must be >= 1")
    frags = tuple(sorted(frags, key=lambda f: f.id))
    for k in range(1, min(max_fragments, len(frags)) + 1):
        level: dict[tuple, Composition] = {}
        for subset in itertools.combinations(frags, k):
            for forest in _forests(subset, None, 0, spec):
                comp = Composition(forest)
                level.setdefault(comp.key(), comp)
        for key in sorted(level):
            comp = level[key]
            assert not composition_problems(comp, spec), comp
            yield comp


# --------------------------------------------------------------------------
# lowering


def affine_candidates(ancestors: list[tuple[int, str, str]]) -> tuple[IndexExpr, ...]:
    """Index candidates over enclosing loops ``(loop_id, var, bound)``, outermost first."""
    if not 1 <= len(ancestors) <= MAX_AFFINE_DEPTH:
        raise ValueError(f"affine access needs 1..{MAX_AFFINE_DEPTH} enclosing loops")
    singles = tuple(IndexExpr(lid, text=var) for lid, var, _ in ancestors)
    if len(ancestors) == 1:
        return singles
    (l1, v1, b1), (l2, v2, b2) = ancestors
    return singles + (
        IndexExpr(l2, outer=l1, stride=b2, text=f"{v1} * {b2} + {v2}"),
        IndexExpr(l1, outer=l2, stride=b1, text=f"{v2} * {b1} + {v1}"),
    )


class _Lowering:
    def __init__(self, spec: FunctionSpec):
        self.spec = spec
        self.slots = 0
        self.holes: list[Hole] = []
        self.sites: list[AffineNode] = []
        self.loop_vars: list[str] = []

    def value(self, kind: str, name: str, const: float | None = None) -> Value:
        v = Value(self.slots, kind, name, const)
        self.slots += 1
        return v

    def hole(self, kind: str, scope: list[Value], loop_id: int | None = None, acc: Value | None = None) -> int:
        h = Hole(len(self.holes), kind, tuple(scope), loop_id, acc)
        self.holes.append(h)
        return h.id

    def loop(self, node: Node, scope: list[Value], ancestors: list[tuple[int, str, str]]) -> LoopNode:
        f = node.frag
        lid = len(self.loop_vars)
        var = LOOP_VARS[len(ancestors)] if len(ancestors) < len(LOOP_VARS) else f"i{len(ancestors)}"
        self.loop_vars.append(var)
        acc = self.value("acc", f"acc{lid}")
        init = self.hole("init", scope, lid, acc)
        loads = tuple((x, self.value("load", f"{x}[{var}]")) for x in f.arrays)
        inner = list(scope) + [v for _, v in loads]
        here = ancestors + [(lid, var, f.bound)]
        body: list[IRNode] = []
        for child in node.children:
            cf = child.frag
            if cf.is_loop:
                sub = self.loop(child, inner, here)
                body.append(sub)
                inner.append(sub.acc)
            elif cf.kind == "affine_access":
                cands = affine_candidates(here)
                v = self.value("affine", f"{cf.arrays[0]}[?]")
                site = AffineNode(len(self.sites), cf.id, cf.arrays[0], cands, v)
                self.sites.append(site)
                body.append(site)
                inner.append(v)
            else:
                h = self.hole("store", inner, lid)
                body.append(StoreNode(cf.id, cf.arrays[0], lid, var, h))
        body_hole = self.hole("body", inner + [acc], lid, acc)
        return LoopNode(lid, f.id, var, f.bound, loads, acc, init, tuple(body), body_hole)


def lower(comp: Composition, spec: FunctionSpec) -> Skeleton:
    problems = composition_problems(comp, spec)
    if problems:
        raise ValueError("invalid composition: " + "; ".join(problems))
    lw = _Lowering(spec)
    scope = [lw.value("const", "0.0", 0.0), lw.value("const", "1.0", 1.0)]
    for p in spec.params:
        if p.ctype == FLOAT:
            scope.append(lw.value("scalar", p.name))
    roots = []
    for r in comp.roots:
        ln = lw.loop(r, scope, [])
        roots.append(ln)
        scope.append(ln.acc)
    ret = None
    if spec.signature.return_type == FLOAT:
        ret = lw.hole("return", scope)
    return Skeleton(
        spec.signature, tuple(roots), tuple(lw.holes), tuple(lw.sites), ret,
        lw.slots, len(lw.loop_vars), tuple(lw.loop_vars), comp,
    )
