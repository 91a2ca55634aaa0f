"""Rule language: parsing, validation and conjunctive query solving.

A rules file is a sequence of rules::

    rule loop(N, T, X):
        size(X, N), type(N, int), type(X, T), pointer(T)

Upper-case identifiers are variables, ``_`` is a wildcard (negative
literals only) and everything else is a constant atom.  ``type/2`` and
``pointer/1`` are evaluated against the signature; every other predicate
names a relation of the spec.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Union

from .sigmodel import (
    Atom,
    FunctionSpec,
    ParamRef,
    SpecError,
    TypeLit,
    TokenStream,
    atom_key,
    is_pointer,
    parse_atom,
    tokenize,
)

HEAD_ARITY = {"loop": 3, "zip_loop": 5, "store": 2, "affine_access": 2}
BUILTINS = {"type": 2, "pointer": 1}


class RuleError(SpecError):
    """Malformed or invalid rules file."""


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Wildcard:
    def __str__(self) -> str:
        return "_"


@dataclass(frozen=True)
class Const:
    atom: Atom

    def __str__(self) -> str:
        return str(self.atom)


Term = Union[Var, Wildcard, Const]
WILDCARD = Wildcard()


@dataclass(frozen=True)
class Literal:
    positive: bool
    pred: str
    args: tuple[Term, ...]

    @property
    def builtin(self) -> bool:
        return self.pred in BUILTINS

    def variables(self) -> list[str]:
        return [t.name for t in self.args if isinstance(t, Var)]

    def __str__(self) -> str:
        s = f"{self.pred}({', '.join(str(a) for a in self.args)})"
        return s if self.positive else f"not {s}"


class FragmentHead(NamedTuple):
    kind: str
    args: tuple

    def __str__(self) -> str:
        return f"{self.kind}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Rule:
    name: str
    head: FragmentHead  # args are Var
    body: tuple[Literal, ...]

    def __str__(self) -> str:
        body = ", ".join(str(lit) for lit in self.body)
        return f"rule {self.head}:\n    {body}"


@dataclass(frozen=True)
class RuleLibrary:
    rules: tuple[Rule, ...]

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)


class Binding:
    """Total, immutable map from variable names to atoms."""

    __slots__ = ("_items",)

    def __init__(self, items: dict[str, Atom] | tuple[tuple[str, Atom], ...]):
        pairs = items.items() if isinstance(items, dict) else items
        self._items = tuple(sorted(pairs, key=lambda kv: kv[0]))

    def __getitem__(self, var: str) -> Atom:
        for k, v in self._items:
            if k == var:
                return v
        raise KeyError(var)

    def as_dict(self) -> dict[str, Atom]:
        return dict(self._items)

    def sort_key(self) -> tuple:
        return tuple((k, atom_key(v)) for k, v in self._items)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Binding) and self._items == other._items

    def __hash__(self) -> int:
        return hash(self._items)

    def __repr__(self) -> str:
        return "{" + ", ".join(f"{k}={v}" for k, v in self._items) + "}"


# --------------------------------------------------------------------------
# validation


def validate_body(body: tuple[Literal, ...] | list[Literal]) -> None:
    if not any(lit.positive for lit in body):
        raise RuleError("negative match requires positive conjunct")
    positive_vars: set[str] = set()
    for lit in body:
        if lit.builtin and len(lit.args) != BUILTINS[lit.pred]:
            raise RuleError(f"builtin {lit.pred} takes {BUILTINS[lit.pred]} arguments")
        if lit.positive:
            if any(isinstance(t, Wildcard) for t in lit.args):
                raise RuleError(f"wildcard in positive literal {lit}")
            positive_vars.update(lit.variables())
    for lit in body:
        if not lit.positive:
            for v in lit.variables():
                if v not in positive_vars:
                    raise RuleError(f"variable {v} in {lit} is not bound by a positive literal")


def validate_rule(rule: Rule) -> None:
    kind = rule.head.kind
    if kind not in HEAD_ARITY:
        raise RuleError(f"unknown fragment head kind {kind}")
    if len(rule.head.args) != HEAD_ARITY[kind]:
        raise RuleError(f"{kind} takes {HEAD_ARITY[kind]} arguments, got {len(rule.head.args)}")
    validate_body(rule.body)
    positive_vars = {v for lit in rule.body if lit.positive for v in lit.variables()}
    for arg in rule.head.args:
        if not isinstance(arg, Var):
            raise RuleError(f"rule head arguments must be variables, got {arg}")
        if arg.name not in positive_vars:
            raise RuleError(f"unbound head variable {arg.name}")


# --------------------------------------------------------------------------
# parsing


def _parse_term(ts: TokenStream) -> Term:
    tok = ts.peek()
    if tok.kind == "ident" and tok.text == "_":
        ts.next()
        return WILDCARD
    if tok.kind == "ident" and tok.text[0].isupper():
        ts.next()
        return Var(tok.text)
    return Const(parse_atom(ts, None))


def _parse_literal(ts: TokenStream) -> Literal:
    positive = True
    if ts.at("ident", "not"):
        ts.next()
        positive = False
    pred = ts.expect("ident")
    ts.expect("punct", "(")
    args: list[Term] = []
    if not ts.at("punct", ")"):
        while True:
            args.append(_parse_term(ts))
            if not ts.accept("punct", ","):
                break
    ts.expect("punct", ")")
    return Literal(positive, pred.text, tuple(args))


def parse_rules(text: str) -> RuleLibrary:
    ts = TokenStream(tokenize(text, RuleError), RuleError)
    rules: list[Rule] = []
    seen: dict[str, int] = {}
    while not ts.at("eof"):
        start = ts.expect("ident", "rule")
        kind = ts.expect("ident")
        ts.expect("punct", "(")
        head_args: list[Term] = []
        if not ts.at("punct", ")"):
            while True:
                head_args.append(_parse_term(ts))
                if not ts.accept("punct", ","):
                    break
        ts.expect("punct", ")")
        ts.expect("punct", ":")
        ts.expect("newline")
        if not ts.at("indent"):
            raise ts.error("rule body must be indented")
        body: list[Literal] = []
        while ts.at("indent"):
            ts.next()
            while True:
                body.append(_parse_literal(ts))
                if not ts.accept("punct", ","):
                    break
                if ts.accept("newline"):
                    # trailing comma continues the body on the next indented line
                    if not ts.at("indent"):
                        raise ts.error("expected a continuation line after ','")
                    ts.next()
            ts.expect("newline")
        seen[kind.text] = seen.get(kind.text, 0) + 1
        name = kind.text if seen[kind.text] == 1 else f"{kind.text}#{seen[kind.text]}"
        rule = Rule(name, FragmentHead(kind.text, tuple(head_args)), tuple(body))
        try:
            validate_rule(rule)
        except RuleError as exc:
            raise RuleError(str(exc), start.line, start.col) from None
        rules.append(rule)
    return RuleLibrary(tuple(rules))


# --------------------------------------------------------------------------
# solving


def spec_domain(spec: FunctionSpec) -> list[Atom]:
    """Atoms a variable may range over: params, their types, relation atoms."""
    atoms: set[Atom] = set()
    for p in spec.params:
        atoms.add(ParamRef(p.name))
        atoms.add(TypeLit(p.ctype))
    for rel in spec.relations.values():
        for tup in rel.tuples:
            atoms.update(tup)
    return sorted(atoms, key=atom_key)


def type_fact(spec: FunctionSpec, a: Atom) -> Atom | None:
    """The type/2 builtin relates each parameter to its declared type."""
    if isinstance(a, ParamRef) and spec.signature.has_param(a.name):
        return TypeLit(spec.signature.param(a.name).ctype)
    return None


def pointer_fact(a: Atom) -> bool:
    return isinstance(a, TypeLit) and is_pointer(a.ctype)


def _bind(env: dict[str, Atom], var: str, value: Atom) -> bool:
    """Extend env in place; False if inconsistent or not ParamRef-injective."""
    cur = env.get(var)
    if cur is not None:
        return cur == value
    if isinstance(value, ParamRef):
        for other in env.values():
            if other == value:
                return False
    env[var] = value
    return True


def _unify_args(args: tuple[Term, ...], values: tuple[Atom, ...], env: dict[str, Atom]) -> dict[str, Atom] | None:
    new = dict(env)
    for term, value in zip(args, values):
        if isinstance(term, Const):
            if term.atom != value:
                return None
        elif isinstance(term, Var):
            if not _bind(new, term.name, value):
                return None
    return new


def _builtin_facts(lit: Literal, spec: FunctionSpec, env: dict[str, Atom], domain: list[Atom]) -> Iterator[tuple[Atom, ...]]:
    """Ground instances of a builtin consistent with already-bound arguments."""

    def resolved(term: Term) -> Atom | None:
        if isinstance(term, Const):
            return term.atom
        if isinstance(term, Var):
            return env.get(term.name)
        return None

    if lit.pred == "type":
        first = resolved(lit.args[0])
        candidates = [first] if first is not None else [ParamRef(p.name) for p in spec.params]
        for a in candidates:
            t = type_fact(spec, a)
            if t is not None:
                yield (a, t)
    elif lit.pred == "pointer":
        first = resolved(lit.args[0])
        candidates = [first] if first is not None else domain
        for a in candidates:
            if pointer_fact(a):
                yield (a,)


def _facts(lit: Literal, spec: FunctionSpec, env: dict[str, Atom], domain: list[Atom]) -> Iterator[tuple[Atom, ...]]:
    if lit.builtin:
        return _builtin_facts(lit, spec, env, domain)
    return iter(spec.tuples(lit.pred))


def _negation_holds(lit: Literal, spec: FunctionSpec, env: dict[str, Atom], domain: list[Atom]) -> bool:
    """Negation as failure: no fact agrees with the bound args (``_`` matches anything)."""
    for fact in _facts(lit, spec, env, domain):
        ok = True
        for term, value in zip(lit.args, fact):
            if isinstance(term, Const) and term.atom != value:
                ok = False
            elif isinstance(term, Var) and env[term.name] != value:
                ok = False
            if not ok:
                break
        if ok:
            return False
    return True


def solve(body: tuple[Literal, ...] | list[Literal], spec: FunctionSpec) -> frozenset[Binding]:
    validate_body(tuple(body))
    positives = [lit for lit in body if lit.positive]
    negatives = [lit for lit in body if not lit.positive]
    domain = spec_domain(spec)
    results: set[Binding] = set()

    def search(i: int, env: dict[str, Atom]) -> None:
        if i == len(positives):
            if all(_negation_holds(lit, spec, env, domain) for lit in negatives):
                results.add(Binding(env))
            return
        lit = positives[i]
        for fact in _facts(lit, spec, env, domain):
            if len(fact) != len(lit.args):
                continue
            new = _unify_args(lit.args, fact, env)
            if new is not None:
                search(i + 1, new)

    search(0, {})
    return frozenset(results)


def sorted_bindings(bindings: frozenset[Binding] | set[Binding]) -> list[Binding]:
    return sorted(bindings, key=Binding.sort_key)


def match_rule(rule: Rule, spec: FunctionSpec) -> frozenset[FragmentHead]:
    heads = set()
    for b in solve(rule.body, spec):
        heads.add(FragmentHead(rule.head.kind, tuple(b[v.name] for v in rule.head.args)))
    return frozenset(heads)


def head_key(h: FragmentHead) -> tuple:
    order = list(HEAD_ARITY)
    return (order.index(h.kind) if h.kind in order else len(order), tuple(atom_key(a) for a in h.args))
