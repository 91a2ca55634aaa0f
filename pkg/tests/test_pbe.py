from __future__ import annotations

import random

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from propsynth.holes import sequences
from propsynth.ir import COMMUTATIVE
from propsynth.oracle import Tolerance
from propsynth.pbe import solve


def evaluate(fill, X):
    regs = [X[:, k] for k in range(X.shape[1])]
    for ins in fill:
        a = regs[ins.lhs]
        if ins.op == "fabs":
            regs.append(np.abs(a))
        else:
            b = regs[ins.rhs]
            regs.append(a + b if ins.op == "fadd" else a - b if ins.op == "fsub" else a * b)
    return regs[-1]


def shortest_by_enumeration(X, y, max_len, tol):
    for length in range(1, max_len + 1):
        for fill in sequences(X.shape[1], length):
            if np.all(np.abs(evaluate(fill, X) - y) <= tol.abs + tol.rel * np.abs(y)):
                return length
    return None


def test_gemv_store_expression():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (12, 6))
    y = X[:, 2] * X[:, 5] + X[:, 3] * X[:, 4]
    fill, bare = solve(X, y, 3)
    assert bare is None and len(fill) == 3
    assert np.allclose(evaluate(fill, X), y)


def test_bare_return():
    X = np.arange(12.0).reshape(4, 3)
    assert solve(X, X[:, 1], 3, allow_bare=True) == ((), 1)
    fill, bare = solve(X, X[:, 1], 3)
    assert len(fill) == 1 and bare is None


def test_unreachable_target():
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, (10, 2))
    y = X[:, 0] ** 5 + 3.7
    assert solve(X, y, 3) is None
    assert solve(X, X[:, 0] * X[:, 1], 0) is None


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_shortest_solution_matches_enumeration(seed, length):
    rng = random.Random(seed)
    s = 3
    X = np.array([[0.0, 1.0] + [rng.uniform(-1, 1) for _ in range(s - 2)] for _ in range(5)])
    target = rng.choice(list(sequences(s, length)))
    y = evaluate(target, X)
    tol = Tolerance()
    got = solve(X, y, 3, tol=tol)
    assert got is not None
    fill, _ = got
    assert np.all(np.abs(evaluate(fill, X) - y) <= tol.abs + tol.rel * np.abs(y))
    assert len(fill) == shortest_by_enumeration(X, y, length, tol)
    # the fill obeys the pruning rules of the hole filler
    for k, ins in enumerate(fill):
        assert all(o < s + k for o in (ins.lhs, ins.rhs) if o is not None)
        if ins.op in COMMUTATIVE:
            assert ins.lhs <= ins.rhs
