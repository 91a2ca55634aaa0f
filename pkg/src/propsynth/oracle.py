"""Reference functions, typed input generation and equivalence testing."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Union

from .ir import Ok, Program, Trap, interpret
from .sigmodel import FLOAT, FLOAT_PTR, INT, FunctionSpec, NumLit, ParamRef, check_eligible


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    scalars: dict[str, int | float]
    buffers: dict[str, list[float]]

    def lengths(self) -> dict[str, int]:
        return {k: len(v) for k, v in self.buffers.items()}


Outputs = tuple  # (return value or None, {buffer name: final contents})


@dataclass(frozen=True)
class OracleFn:
    name: str
    shape: tuple[str, ...]  # per parameter: "int" | "float" | "float*"
    returns: str  # "void" | "float"
    fn: Callable[..., Union[float, None]] = field(repr=False)

    def __call__(self, spec: FunctionSpec, tc: TestCase) -> Outputs:
        """Evaluate on a copy of ``tc``; arguments are passed by position."""
        bufs = {k: list(v) for k, v in tc.buffers.items()}
        args = []
        for p in spec.params:
            args.append(bufs[p.name] if p.name in bufs else tc.scalars[p.name])
        ret = self.fn(*args)
        return (None if self.returns == "void" else float(ret)), bufs  # type: ignore[arg-type]

    def compatible(self, spec: FunctionSpec) -> list[str]:
        shape = tuple(str(p.ctype) for p in spec.params)
        problems = []
        if shape != self.shape:
            problems.append(f"oracle {self.name} expects ({', '.join(self.shape)}), spec has ({', '.join(shape)})")
        if str(spec.signature.return_type) != self.returns:
            problems.append(f"oracle {self.name} returns {self.returns}, spec returns {spec.signature.return_type}")
        return problems


# --------------------------------------------------------------------------
# built-in reference kernels; loops mirror the obvious C code so that a
# synthesized program with the same reduction order agrees bit-for-bit


def _dot(n, x, y):
    acc = 0.0
    for i in range(n):
        acc = acc + x[i] * y[i]
    return acc


def _axpy(n, alpha, x, y):
    for i in range(n):
        y[i] = alpha * x[i] + y[i]


def _scal(n, alpha, x):
    for i in range(n):
        x[i] = alpha * x[i]


def _vadd(n, x, y, z):
    for i in range(n):
        z[i] = x[i] + y[i]


def _asum(n, x):
    acc = 0.0
    for i in range(n):
        acc = acc + math.fabs(x[i])
    return acc


def _copy(n, x, y):
    for i in range(n):
        y[i] = x[i]


def _gemv(m, n, alpha, a, x, beta, y):
    for i in range(m):
        acc = 0.0
        for j in range(n):
            acc = acc + x[j] * a[i * n + j]
        y[i] = alpha * acc + beta * y[i]


_I, _F, _P = "int", "float", "float*"

ORACLES: dict[str, OracleFn] = {
    o.name: o
    for o in (
        OracleFn("dot", (_I, _P, _P), "float", _dot),
        OracleFn("axpy", (_I, _F, _P, _P), "void", _axpy),
        OracleFn("scal", (_I, _F, _P), "void", _scal),
        OracleFn("vadd", (_I, _P, _P, _P), "void", _vadd),
        OracleFn("asum", (_I, _P), "float", _asum),
        OracleFn("copy", (_I, _P, _P), "void", _copy),
        OracleFn("gemv", (_I, _I, _F, _P, _P, _F, _P), "void", _gemv),
    )
}


class UnknownOracle(KeyError):
    pass


def lookup_oracle(name: str) -> OracleFn:
    try:
        return ORACLES[name]
    except KeyError:
        raise UnknownOracle(f"unknown oracle {name!r}; known: {', '.join(sorted(ORACLES))}") from None


# --------------------------------------------------------------------------
# inputs


def _size_groups(spec: FunctionSpec) -> tuple[dict[str, str], dict[str, str], dict[str, int]]:
    """Tie together int params that size the same buffer.

    Returns (buffer -> group, size param -> group, buffer -> fixed length).
    """
    parent: dict[str, str] = {}

    def find(a: str) -> str:
        while parent.get(a, a) != a:
            a = parent[a]
        return a

    fixed: dict[str, int] = {}
    first: dict[str, str] = {}
    for t in spec.tuples("size"):
        if len(t) != 2 or not isinstance(t[0], ParamRef):
            continue
        buf, n = t[0].name, t[1]
        if isinstance(n, ParamRef) and spec.signature.param(n.name).ctype == INT:
            if buf in first:
                parent[find(n.name)] = find(first[buf])
            else:
                first[buf] = n.name
        elif isinstance(n, NumLit) and n.value == n.value.to_integral_value() and n.value > 0:
            fixed.setdefault(buf, int(n.value))
    params = {p: find(p) for p in size_params(spec)}
    return {b: find(n) for b, n in first.items()}, params, fixed


def size_params(spec: FunctionSpec) -> list[str]:
    """Int params that appear as the length in some ``size`` tuple."""
    out = []
    for t in spec.tuples("size"):
        if len(t) == 2 and isinstance(t[1], ParamRef) and spec.signature.param(t[1].name).ctype == INT:
            if t[1].name not in out:
                out.append(t[1].name)
    return out


def gen_inputs(spec: FunctionSpec, rng: random.Random, size_range: tuple[int, int] = (1, 4)) -> TestCase:
    lo, hi = size_range
    if not 1 <= lo <= hi <= 16:
        raise ValueError(f"size_range must satisfy 1 <= lo <= hi <= 16, got {size_range}")
    check_eligible(spec)
    buffer_group, param_group, fixed = _size_groups(spec)
    scalars: dict[str, int | float] = {}
    group_value: dict[str, int] = {}
    for p in spec.params:
        if p.ctype == INT:
            if p.name in param_group:
                g = param_group[p.name]
                if g not in group_value:
                    group_value[g] = rng.randint(lo, hi)
                scalars[p.name] = group_value[g]
            else:
                scalars[p.name] = rng.randint(0, 4)
        elif p.ctype == FLOAT:
            scalars[p.name] = rng.uniform(-1.0, 1.0)
    unsized_len = 1
    for name in param_group:
        unsized_len *= int(scalars[name])
    unsized_len = max(unsized_len, 1)
    buffers: dict[str, list[float]] = {}
    for p in spec.params:
        if p.ctype == FLOAT_PTR:
            if p.name in buffer_group:
                length = group_value[buffer_group[p.name]]
            elif p.name in fixed:
                length = fixed[p.name]
            else:
                length = unsized_len
            buffers[p.name] = [rng.uniform(-1.0, 1.0) for _ in range(length)]
    return TestCase(scalars, buffers)


def gen_tests(spec: FunctionSpec, seed: int, n: int, size_range: tuple[int, int] = (1, 4)) -> list[TestCase]:
    rng = random.Random(seed)
    return [gen_inputs(spec, rng, size_range) for _ in range(n)]


# --------------------------------------------------------------------------
# equivalence


@dataclass(frozen=True)
class Tolerance:
    abs: float = 1e-9
    rel: float = 1e-6

    def close(self, candidate: float, expected: float) -> bool:
        if math.isnan(candidate) or math.isnan(expected):
            return False
        return abs(candidate - expected) <= self.abs + self.rel * abs(expected)


@dataclass(frozen=True)
class Equivalent:
    tests_run: int


@dataclass(frozen=True)
class Distinguished:
    witness: TestCase
    candidate: Outputs
    oracle: Outputs
    reason: str = ""


@dataclass(frozen=True)
class Rejected:
    trap: Trap
    witness: TestCase


Verdict = Union[Equivalent, Distinguished, Rejected]


def compare_outputs(spec: FunctionSpec, tc: TestCase, got: Ok, want: Outputs, tol: Tolerance) -> str | None:
    """Why ``got`` differs from the oracle's outputs, or None when it matches.

    Output buffers are compared element-wise within ``tol``.  Every other
    buffer must come back bit-identical from the candidate and must also
    match what the oracle left there, so an oracle that writes to an
    unannotated buffer cannot be matched.
    """
    want_ret, want_bufs = want
    if want_ret is not None:
        if got.ret is None or not tol.close(got.ret, want_ret):
            return f"return value {got.ret!r} != {want_ret!r}"
    outputs = set(spec.outputs())
    for name, expected in want_bufs.items():
        actual = got.buffers[name]
        if name not in outputs and actual != tc.buffers[name]:
            return f"non-output buffer {name} was modified"
        if len(actual) != len(expected):
            return f"buffer {name} length changed"
        for k, (c, o) in enumerate(zip(actual, expected)):
            if not tol.close(c, o):
                return f"{name}[{k}] = {c!r}, expected {o!r}"
    return None


def equivalent(
    p: Program,
    f: OracleFn,
    spec: FunctionSpec,
    n_tests: int,
    tol: Tolerance = Tolerance(),
    seed: int = 0,
    size_range: tuple[int, int] = (1, 4),
    tests: list[TestCase] | None = None,
) -> Verdict:
    if n_tests < 1:
        raise ValueError("n_tests must be >= 1")
    if tests is None:
        tests = gen_tests(spec, seed, n_tests, size_range)
    for tc in tests[:n_tests]:
        got = interpret(p, tc)
        if isinstance(got, Trap):
            return Rejected(got, tc)
        want = f(spec, tc)
        why = compare_outputs(spec, tc, got, want, tol)
        if why is not None:
            return Distinguished(tc, (got.ret, got.buffers), want, why)
    return Equivalent(min(n_tests, len(tests)))
