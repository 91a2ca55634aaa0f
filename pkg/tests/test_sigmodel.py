from __future__ import annotations

import string
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from propsynth.sigmodel import (
    FLOAT,
    FLOAT_PTR,
    INT,
    Aggregate,
    Array,
    NumLit,
    ParamRef,
    PointerTo,
    SpecError,
    StringLit,
    TypeLit,
    check_eligible,
    is_pointer,
    parse_spec,
    print_spec,
    type_of,
)

GEMV_TEXT = """\
# y <- alpha*A*x + beta*y
function gemv(m: int, n: int, alpha: float, a: float*,
              x: float*, beta: float, y: float*) -> void
relations:
    size(x, n)
    size(y, m)
    output(y)
"""


def test_gemv_spec_shape():
    spec = parse_spec(GEMV_TEXT)
    assert [p.name for p in spec.params] == ["m", "n", "alpha", "a", "x", "beta", "y"]
    assert [p.position for p in spec.params] == list(range(7))
    # relations are keyed by name: size holds two tuples, output one
    arities = sorted(r.arity for r in spec.relations.values() for _ in r.tuples)
    assert arities == [1, 2, 2]
    assert spec.relations["size"].arity == 2
    assert spec.relations["output"].arity == 1


def test_empty_relations_block():
    spec = parse_spec("function f(n: int) -> void\nrelations:\n")
    assert dict(spec.relations) == {}
    assert dict(parse_spec("function f() -> float\n").relations) == {}


@pytest.mark.parametrize(
    "text, message",
    [
        ("function f(n: int) -> void\nrelations:\n    size(z, n)\n", "undeclared parameter z"),
        ("function f(n: intx) -> void\n", "unknown type name intx"),
        ("function f(n: int) -> void\nrelations:\n    r(n)\n    r(n, n)\n", "arity mismatch"),
        ("function f(n: int, n: float) -> void\n", "duplicate parameter n"),
        ("function f(x: float[0]) -> void\n", "array length must be positive"),
        ("function f(n: int) -> void\nrelations:\n    r(n\n", r"expected '\)'"),
    ],
)
def test_parse_errors(text, message):
    with pytest.raises(SpecError, match=message):
        parse_spec(text)


def test_error_carries_position():
    with pytest.raises(SpecError) as info:
        parse_spec("function f(n: int) -> void\nrelations:\n    size(z, n)\n")
    assert (info.value.line, info.value.col) == (3, 10)


def test_type_of():
    spec = parse_spec(GEMV_TEXT)
    assert type_of(spec, ParamRef("a")) == PointerTo(FLOAT)
    assert type_of(spec, ParamRef("n")) == INT
    assert type_of(spec, TypeLit(INT)) == INT
    for atom in (NumLit(Decimal(1)), StringLit("s")):
        with pytest.raises(SpecError, match="untyped atom"):
            type_of(spec, atom)


def test_type_of_every_param():
    spec = parse_spec(GEMV_TEXT)
    for p in spec.params:
        assert type_of(spec, ParamRef(p.name)) == p.ctype


def test_is_pointer():
    assert is_pointer(FLOAT_PTR)
    assert not is_pointer(FLOAT)
    assert not is_pointer(Array(INT, 10))


def test_literal_atoms_and_ineligible_types():
    text = (
        "function f(x: float**, s: struct{a: int; b: float}, q: float[10]) -> void\n"
        "relations:\n"
        '    tag(x, "hi", 2.50, int, float*)\n'
    )
    spec = parse_spec(text)
    (tup,) = spec.tuples("tag")
    assert tup == (ParamRef("x"), StringLit("hi"), NumLit(Decimal("2.50")), TypeLit(INT), TypeLit(FLOAT_PTR))
    assert isinstance(spec.params[1].ctype, Aggregate)
    with pytest.raises(SpecError, match="pointer depth 2"):
        check_eligible(spec)


def test_numeric_literals_are_exact():
    spec = parse_spec("function f(n: int) -> void\nrelations:\n    r(n, 0.1)\n    r(n, 0.10)\n")
    # 0.1 and 0.10 are equal decimals, so only one tuple survives
    assert len(spec.tuples("r")) == 1


def test_canonical_print():
    out = print_spec(parse_spec(GEMV_TEXT))
    assert out == (
        "function gemv(m: int, n: int, alpha: float, a: float*, x: float*, beta: float, y: float*) -> void\n"
        "relations:\n"
        "    output(y)\n"
        "    size(x, n)\n"
        "    size(y, m)\n"
    )


# --------------------------------------------------------------------------
# properties

_names = st.sampled_from(list("abcdefgh"))
_types = st.sampled_from(["int", "float", "float*", "int*", "float**"])


@st.composite
def spec_texts(draw):
    names = draw(st.lists(_names, min_size=0, max_size=6, unique=True))
    params = [(n, draw(_types)) for n in names]
    ret = draw(st.sampled_from(["void", "float", "int"]))
    atoms = [n for n in names] + ["int", "float*", '"s"', "3", "1.5"]
    rels = []
    for _ in range(draw(st.integers(0, 5))):
        name = draw(st.sampled_from(["size", "output", "r", "tag"]))
        arity = {"size": 2, "output": 1}.get(name, 3)
        rels.append(f"{name}({', '.join(draw(st.sampled_from(atoms)) for _ in range(arity))})")
    header = f"function k({', '.join(f'{n}: {t}' for n, t in params)}) -> {ret}"
    return header + "\nrelations:\n" + "".join(f"    {r}\n" for r in rels)


@settings(max_examples=200, deadline=None)
@given(spec_texts())
def test_print_parse_print_idempotent(text):
    once = print_spec(parse_spec(text))
    assert print_spec(parse_spec(once)) == once


@settings(max_examples=200, deadline=None)
@given(spec_texts(), st.sampled_from(list("xyz")))
def test_validation_rejects_exactly_undeclared_refs(text, ghost):
    """Injecting a reference to an unknown name is rejected; the original is not."""
    spec = parse_spec(text)
    declared = {p.name for p in spec.params}
    broken = text + f"    extra({ghost})\n"
    if ghost in declared:
        parse_spec(broken)
    else:
        with pytest.raises(SpecError, match=f"undeclared parameter {ghost}"):
            parse_spec(broken)


@settings(max_examples=100, deadline=None)
@given(spec_texts(), st.text(alphabet=string.printable, max_size=3))
def test_fuzzed_text_never_crashes(text, junk):
    mutated = text[: len(text) // 2] + junk + text[len(text) // 2 :]
    try:
        parse_spec(mutated)
    except SpecError:
        pass
