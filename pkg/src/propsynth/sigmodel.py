"""C-type subset, signatures, atoms and property relations.

A spec file looks like::

    function gemv(m: int, n: int, alpha: float, a: float*,
                  x: float*, beta: float, y: float*) -> void
    relations:
        size(x, n)
        size(y, m)
        output(y)

Parameters may wrap over several lines inside the parentheses.  Besides
``int``, ``float``, pointers and ``void``, the type model also accepts
fixed arrays (``float[10]``) and aggregates (``struct{x: int; y: int}``);
those parse but are not eligible for synthesis.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Iterable, Mapping, Union


class SpecError(ValueError):
    """Malformed or invalid spec file."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line is not None else ""
        super().__init__(f"{where}{message}")


# --------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class Int:
    def __str__(self) -> str:
        return "int"


@dataclass(frozen=True)
class Float:
    def __str__(self) -> str:
        return "float"


@dataclass(frozen=True)
class Void:
    def __str__(self) -> str:
        return "void"


@dataclass(frozen=True)
class PointerTo:
    pointee: "CType"

    def __str__(self) -> str:
        return f"{self.pointee}*"


@dataclass(frozen=True)
class Array:
    element: "CType"
    length: int

    def __post_init__(self) -> None:
        if self.length <= 0:
            raise SpecError(f"array length must be positive, got {self.length}")

    def __str__(self) -> str:
        return f"{self.element}[{self.length}]"


@dataclass(frozen=True)
class Aggregate:
    fields: tuple[tuple[str, "CType"], ...]

    def __post_init__(self) -> None:
        names = [n for n, _ in self.fields]
        if len(set(names)) != len(names):
            raise SpecError("duplicate aggregate field name")

    def __str__(self) -> str:
        inner = "; ".join(f"{n}: {t}" for n, t in self.fields)
        return f"struct{{{inner}}}"


CType = Union[Int, Float, PointerTo, Array, Aggregate]

INT = Int()
FLOAT = Float()
VOID = Void()
FLOAT_PTR = PointerTo(FLOAT)


def is_pointer(t: object) -> bool:
    return isinstance(t, PointerTo)


def pointer_depth(t: object) -> int:
    depth = 0
    while isinstance(t, PointerTo):
        depth += 1
        t = t.pointee
    return depth


# --------------------------------------------------------------------------
# atoms


@dataclass(frozen=True)
class ParamRef:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class TypeLit:
    ctype: CType

    def __str__(self) -> str:
        return str(self.ctype)


@dataclass(frozen=True)
class StringLit:
    text: str

    def __str__(self) -> str:
        escaped = self.text.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'


@dataclass(frozen=True)
class NumLit:
    value: Decimal

    def __str__(self) -> str:
        return str(self.value)


Atom = Union[ParamRef, TypeLit, StringLit, NumLit]

_ATOM_RANK = {ParamRef: 0, TypeLit: 1, StringLit: 2, NumLit: 3}


def atom_key(a: Atom) -> tuple:
    """Canonical sort key: variant first, then printed form."""
    if isinstance(a, NumLit):
        return (3, a.value, str(a))
    return (_ATOM_RANK[type(a)], str(a))


# --------------------------------------------------------------------------
# signatures and specs


@dataclass(frozen=True)
class Param:
    name: str
    ctype: CType
    position: int


@dataclass(frozen=True)
class Signature:
    name: str
    params: tuple[Param, ...]
    return_type: CType | Void

    def __post_init__(self) -> None:
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise SpecError(f"duplicate parameter {dup}")
        for i, p in enumerate(self.params):
            if p.position != i:
                raise SpecError(f"parameter {p.name} has position {p.position}, expected {i}")

    def param(self, name: str) -> Param:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    def has_param(self, name: str) -> bool:
        return any(p.name == name for p in self.params)


@dataclass(frozen=True)
class Relation:
    name: str
    tuples: frozenset[tuple[Atom, ...]]

    def __post_init__(self) -> None:
        if not self.name:
            raise SpecError("relation name must be nonempty")
        arities = {len(t) for t in self.tuples}
        if len(arities) > 1:
            raise SpecError(f"relation {self.name} mixes arities {sorted(arities)}")
        if 0 in arities:
            raise SpecError(f"relation {self.name} has a nullary tuple")

    @property
    def arity(self) -> int:
        return len(next(iter(self.tuples))) if self.tuples else 0

    def sorted_tuples(self) -> list[tuple[Atom, ...]]:
        return sorted(self.tuples, key=lambda t: tuple(atom_key(a) for a in t))


@dataclass(frozen=True)
class FunctionSpec:
    signature: Signature
    relations: Mapping[str, Relation] = field(default_factory=dict)

    def __post_init__(self) -> None:
        # freeze the mapping in canonical order
        frozen = {k: self.relations[k] for k in sorted(self.relations)}
        object.__setattr__(self, "relations", _FrozenDict(frozen))
        for rel in self.relations.values():
            for tup in rel.tuples:
                for a in tup:
                    if isinstance(a, ParamRef) and not self.signature.has_param(a.name):
                        raise SpecError(f"undeclared parameter {a.name}")

    def __hash__(self) -> int:
        return hash((self.signature, tuple(self.relations.items())))

    @property
    def name(self) -> str:
        return self.signature.name

    @property
    def params(self) -> tuple[Param, ...]:
        return self.signature.params

    def tuples(self, relation: str) -> list[tuple[Atom, ...]]:
        rel = self.relations.get(relation)
        return rel.sorted_tuples() if rel is not None else []

    def without_relation_tuple(self, relation: str, tup: tuple[Atom, ...]) -> "FunctionSpec":
        rels = dict(self.relations)
        remaining = rels[relation].tuples - {tup}
        if remaining:
            rels[relation] = Relation(relation, remaining)
        else:
            del rels[relation]
        return FunctionSpec(self.signature, rels)

    def size_params(self, buffer: str) -> list[Atom]:
        return [t[1] for t in self.tuples("size") if len(t) == 2 and t[0] == ParamRef(buffer)]

    def outputs(self) -> list[str]:
        return [t[0].name for t in self.tuples("output") if len(t) == 1 and isinstance(t[0], ParamRef)]


class _FrozenDict(dict):
    def _immutable(self, *args, **kwargs):
        raise TypeError("FunctionSpec relations are immutable")

    __setitem__ = __delitem__ = clear = pop = popitem = setdefault = update = _immutable  # type: ignore[assignment]

    def __hash__(self) -> int:  # type: ignore[override]
        return hash(tuple(self.items()))


def type_of(spec: FunctionSpec, a: Atom) -> CType:
    if isinstance(a, ParamRef):
        try:
            return spec.signature.param(a.name).ctype
        except KeyError:
            raise SpecError(f"undeclared parameter {a.name}") from None
    if isinstance(a, TypeLit):
        return a.ctype
    raise SpecError(f"untyped atom {a}")


def eligibility_problems(spec: FunctionSpec) -> list[str]:
    """Reasons the spec cannot be synthesized; empty when eligible."""
    problems = []
    for p in spec.params:
        t = p.ctype
        if isinstance(t, (Array, Aggregate)):
            problems.append(f"parameter {p.name}: {t} is not supported by synthesis")
        elif pointer_depth(t) > 1:
            problems.append(f"parameter {p.name}: pointer depth {pointer_depth(t)} exceeds 1")
        elif isinstance(t, PointerTo) and t != FLOAT_PTR:
            problems.append(f"parameter {p.name}: only float* buffers are supported, got {t}")
    rt = spec.signature.return_type
    if not isinstance(rt, (Void, Float)):
        problems.append(f"return type {rt} is not supported by synthesis (void or float only)")
    return problems


def check_eligible(spec: FunctionSpec) -> None:
    problems = eligibility_problems(spec)
    if problems:
        raise SpecError("spec is not synthesis-eligible: " + "; ".join(problems))


# --------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<number>[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)
  | (?P<arrow>->)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[()\[\]{},:;*])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str, error_cls: type[SpecError] = SpecError) -> list[Token]:
    """Tokenize, dropping comments and whitespace; NEWLINE/INDENT are explicit."""
    tokens: list[Token] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip(" \t"))
        if indent:
            tokens.append(Token("indent", line[:indent], lineno, 1))
        pos = indent
        while pos < len(line):
            m = _TOKEN_RE.match(line, pos)
            if m is None:
                raise error_cls(f"unexpected character {line[pos]!r}", lineno, pos + 1)
            kind = m.lastgroup
            assert kind is not None
            if kind != "ws":
                tokens.append(Token(kind, m.group(), lineno, pos + 1))
            pos = m.end()
        tokens.append(Token("newline", "\n", lineno, len(line) + 1))
    tokens.append(Token("eof", "", len(text.splitlines()) + 1, 1))
    return tokens


def _strip_comment(line: str) -> str:
    in_str = False
    escaped = False
    for i, ch in enumerate(line):
        if escaped:
            escaped = False
        elif ch == "\\":
            escaped = True
        elif ch == '"':
            in_str = not in_str
        elif ch == "#" and not in_str:
            return line[:i]
    return line


class TokenStream:
    def __init__(self, tokens: list[Token], error_cls: type[SpecError] = SpecError):
        self.tokens = tokens
        self.pos = 0
        self.error_cls = error_cls

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        self.pos += 1
        return tok

    def at(self, kind: str, text: str | None = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (text is None or tok.text == text)

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        if self.at(kind, text):
            return self.next()
        return None

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.peek()
        if not self.at(kind, text):
            want = repr(text) if text else kind
            got = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise self.error_cls(f"expected {want}, got {got}", tok.line, tok.col)
        return self.next()

    def error(self, message: str, tok: Token | None = None) -> SpecError:
        tok = tok or self.peek()
        return self.error_cls(message, tok.line, tok.col)

    def skip_layout(self) -> None:
        while self.peek().kind in ("newline", "indent"):
            self.next()


_BASE_TYPES = {"int": INT, "float": FLOAT}


def parse_ctype(ts: TokenStream, allow_void: bool = False) -> CType | Void:
    tok = ts.peek()
    if ts.accept("ident", "struct"):
        ts.expect("punct", "{")
        fields: list[tuple[str, CType]] = []
        while not ts.at("punct", "}"):
            ts.skip_layout()
            fname = ts.expect("ident").text
            ts.expect("punct", ":")
            ftype = parse_ctype(ts)
            fields.append((fname, ftype))  # type: ignore[arg-type]
            ts.skip_layout()
            if not ts.accept("punct", ";"):
                break
            ts.skip_layout()
        ts.expect("punct", "}")
        base: CType | Void = Aggregate(tuple(fields))
    elif tok.kind == "ident" and tok.text in _BASE_TYPES:
        ts.next()
        base = _BASE_TYPES[tok.text]
    elif tok.kind == "ident" and tok.text == "void":
        ts.next()
        base = VOID
    elif tok.kind == "ident":
        raise ts.error(f"unknown type name {tok.text}")
    else:
        raise ts.error("expected a type")
    while True:
        if ts.accept("punct", "*"):
            if isinstance(base, Void):
                raise ts.error("void* is not supported", tok)
            base = PointerTo(base)
        elif ts.accept("punct", "["):
            n = ts.expect("number")
            ts.expect("punct", "]")
            try:
                length = int(n.text)
            except ValueError:
                raise ts.error("array length must be an integer", n) from None
            if length <= 0:
                raise ts.error("array length must be positive", n)
            if isinstance(base, Void):
                raise ts.error("array of void", tok)
            base = Array(base, length)
        else:
            break
    if isinstance(base, Void) and not allow_void:
        raise ts.error("void is only allowed as a return type", tok)
    return base


def _is_type_start(ts: TokenStream) -> bool:
    tok = ts.peek()
    return tok.kind == "ident" and (tok.text in _BASE_TYPES or tok.text in ("struct", "void"))


def parse_atom(ts: TokenStream, param_names: Iterable[str] | None) -> Atom:
    """Parse one relation atom.  ``param_names=None`` accepts any identifier."""
    tok = ts.peek()
    if tok.kind == "string":
        ts.next()
        return StringLit(_unescape(tok.text[1:-1]))
    if tok.kind == "number":
        ts.next()
        try:
            return NumLit(Decimal(tok.text))
        except InvalidOperation:
            raise ts.error(f"bad number {tok.text}", tok) from None
    if _is_type_start(ts):
        return TypeLit(parse_ctype(ts))  # type: ignore[arg-type]
    if tok.kind == "ident":
        ts.next()
        if param_names is not None and tok.text not in param_names:
            raise ts.error(f"undeclared parameter {tok.text}", tok)
        return ParamRef(tok.text)
    raise ts.error("expected an atom")


def _unescape(s: str) -> str:
    return re.sub(r"\\(.)", r"\1", s)


def parse_spec(text: str) -> FunctionSpec:
    ts = TokenStream(tokenize(text))
    ts.skip_layout()
    ts.expect("ident", "function")
    name = ts.expect("ident").text
    ts.expect("punct", "(")
    params: list[Param] = []
    ts.skip_layout()
    if not ts.at("punct", ")"):
        while True:
            ts.skip_layout()
            ptok = ts.expect("ident")
            if any(p.name == ptok.text for p in params):
                raise ts.error(f"duplicate parameter {ptok.text}", ptok)
            ts.expect("punct", ":")
            ptype = parse_ctype(ts)
            params.append(Param(ptok.text, ptype, len(params)))  # type: ignore[arg-type]
            ts.skip_layout()
            if not ts.accept("punct", ","):
                break
    ts.skip_layout()
    ts.expect("punct", ")")
    ts.expect("arrow")
    ret = parse_ctype(ts, allow_void=True)
    ts.expect("newline")
    signature = Signature(name, tuple(params), ret)

    names = {p.name for p in params}
    tuples: dict[str, set[tuple[Atom, ...]]] = {}
    arity: dict[str, int] = {}
    if ts.accept("ident", "relations"):
        ts.expect("punct", ":")
        ts.expect("newline")
        while ts.at("indent"):
            ts.next()
            rtok = ts.expect("ident")
            ts.expect("punct", "(")
            atoms: list[Atom] = []
            if not ts.at("punct", ")"):
                while True:
                    atoms.append(parse_atom(ts, names))
                    if not ts.accept("punct", ","):
                        break
            ts.expect("punct", ")")
            ts.expect("newline")
            if not atoms:
                raise ts.error(f"relation {rtok.text} needs at least one atom", rtok)
            if rtok.text in arity and arity[rtok.text] != len(atoms):
                raise ts.error(
                    f"arity mismatch for relation {rtok.text}: "
                    f"{len(atoms)} vs {arity[rtok.text]}",
                    rtok,
                )
            arity[rtok.text] = len(atoms)
            tuples.setdefault(rtok.text, set()).add(tuple(atoms))
    if not ts.at("eof"):
        raise ts.error(f"unexpected {ts.peek().text!r}")
    relations = {k: Relation(k, frozenset(v)) for k, v in tuples.items()}
    return FunctionSpec(signature, relations)


def print_spec(spec: FunctionSpec) -> str:
    sig = spec.signature
    params = ", ".join(f"{p.name}: {p.ctype}" for p in sig.params)
    lines = [f"function {sig.name}({params}) -> {sig.return_type}"]
    if spec.relations:
        lines.append("relations:")
        for name, rel in spec.relations.items():
            for tup in rel.sorted_tuples():
                lines.append(f"    {name}({', '.join(str(a) for a in tup)})")
    return "\n".join(lines) + "\n"
