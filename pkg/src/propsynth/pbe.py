"""Bottom-up solver for a single output hole from input/output points.

Given the hole's scope values at ``P`` points (a ``P x s`` matrix) and the
value the hole must produce at each point, find the shortest pruned
instruction sequence (at most three instructions) whose result matches every
point within tolerance.  Candidates are evaluated on numpy vectors, with
length-2 expressions deduplicated by their value vectors and length-3
expressions screened on the first point before full verification.
"""

from __future__ import annotations

import numpy as np

from .ir import BINARY_OPS, COMMUTATIVE, Fill, Instr
from .oracle import Tolerance

MAX_LEN = 3

# an expression recipe: ("leaf", i) | (op, child, child) | ("fabs", child)
Recipe = tuple


def _apply(op: str, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    if op == "fadd":
        return a + b
    if op == "fsub":
        return a - b
    if op == "fmul":
        return a * b
    return np.abs(a)


def _close(values: np.ndarray, target: np.ndarray, tol: Tolerance) -> np.ndarray:
    """Element-wise :meth:`Tolerance.close` (NaN never matches)."""
    with np.errstate(invalid="ignore", over="ignore"):
        ok = np.abs(values - target) <= tol.abs + tol.rel * np.abs(target)
    return ok & ~np.isnan(values)


class _Table:
    """Expressions of one length, as recipes plus a ``(n, P)`` value matrix."""

    def __init__(self) -> None:
        self.recipes: list[Recipe] = []
        self.rows: list[np.ndarray] = []

    def add(self, recipe: Recipe, row: np.ndarray) -> None:
        self.recipes.append(recipe)
        self.rows.append(row)

    def matrix(self, width: int) -> np.ndarray:
        return np.array(self.rows).reshape(len(self.rows), width)


def _pair_ops(op: str, n: int):
    """Operand pairs (a, b) for ``op`` over ``n`` items, canonical for commutative ops."""
    for a in range(n):
        for b in range(a if op in COMMUTATIVE else 0, n):
            yield a, b


def _level1(X: np.ndarray) -> _Table:
    t = _Table()
    s = X.shape[1]
    cols = X.T
    for op in BINARY_OPS:
        for a, b in _pair_ops(op, s):
            t.add((op, ("leaf", a), ("leaf", b)), _apply(op, cols[a], cols[b]))
    for a in range(s):
        t.add(("fabs", ("leaf", a)), np.abs(cols[a]))
    return t


def _extend(base: _Table, X: np.ndarray) -> _Table:
    """One more instruction reading the base expression (and a leaf or itself)."""
    t = _Table()
    cols = X.T
    s = X.shape[1]
    for r, v in zip(base.recipes, base.rows):
        for op in BINARY_OPS:
            t.add((op, r, r), _apply(op, v, v))
            for a in range(s):
                leaf = ("leaf", a)
                t.add((op, r, leaf), _apply(op, v, cols[a]))
                if op not in COMMUTATIVE:
                    t.add((op, leaf, r), _apply(op, cols[a], v))
        t.add(("fabs", r), np.abs(v))
    return t


def _dedup(t: _Table, width: int) -> _Table:
    if not t.rows:
        return t
    m = t.matrix(width)
    # keep the first recipe of each distinct value vector, in original order
    _, first = np.unique(np.ascontiguousarray(m).view(np.dtype((np.void, m.dtype.itemsize * width))).ravel(), return_index=True)
    out = _Table()
    for i in sorted(first):
        out.add(t.recipes[i], t.rows[i])
    return out


def _lower(recipe: Recipe, s: int) -> Fill:
    """Emit the instructions computing ``recipe`` (shared sub-terms computed once)."""
    instrs: list[Instr] = []
    memo: dict[Recipe, int] = {}

    def go(r: Recipe) -> int:
        if r[0] == "leaf":
            return r[1]
        if r in memo:
            return memo[r]
        if r[0] == "fabs":
            ins = Instr("fabs", go(r[1]))
        else:
            a, b = go(r[1]), go(r[2])
            if r[0] in COMMUTATIVE and a > b:
                a, b = b, a
            ins = Instr(r[0], a, b)
        instrs.append(ins)
        memo[r] = s + len(instrs) - 1
        return memo[r]

    go(recipe)
    return tuple(instrs)


def _first_match(values: np.ndarray, y: np.ndarray, tol: Tolerance) -> int | None:
    ok = np.all(_close(values, y[None, :], tol), axis=1)
    hits = np.flatnonzero(ok)
    return int(hits[0]) if hits.size else None


def solve(
    X: np.ndarray,
    y: np.ndarray,
    max_len: int,
    allow_bare: bool = False,
    tol: Tolerance = Tolerance(),
) -> tuple[Fill, int | None] | None:
    """Shortest fill of a hole with scope matrix ``X`` producing ``y``.

    Returns ``(instructions, bare_index)``; the bare index is set only when
    ``allow_bare`` and a scope value already matches.  ``None`` when nothing
    of length ``<= min(max_len, 3)`` fits.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    P, s = X.shape
    if s == 0:
        return None
    max_len = min(max_len, MAX_LEN)
    with np.errstate(all="ignore"):
        if allow_bare:
            hit = _first_match(X.T, y, tol)
            if hit is not None:
                return (), hit
        if max_len < 1:
            return None
        e1 = _level1(X)
        hit = _first_match(e1.matrix(P), y, tol)
        if hit is not None:
            return _lower(e1.recipes[hit], s), None
        if max_len < 2:
            return None
        e1 = _dedup(e1, P)
        e2_all = _extend(e1, X)
        e2 = _dedup(e2_all, P)
        m2 = e2.matrix(P)
        hit = _first_match(m2, y, tol)
        if hit is not None:
            return _lower(e2.recipes[hit], s), None
        if max_len < 3 or P == 0:
            return None
        return _level3(X, y, e1, e2, e2_all, tol)


def _level3(X, y, e1: _Table, e2: _Table, e2_all: _Table, tol: Tolerance):
    P, s = X.shape
    m1 = e1.matrix(P)
    m2 = e2.matrix(P)
    y0 = y[0]
    shapes = []

    # op(e2, leaf | e2) and fabs(e2): screen on point 0
    v2 = m2[:, 0]
    leaves0 = X[0]
    for op in BINARY_OPS:
        grid = _apply(op, v2[:, None], leaves0[None, :])
        shapes.append(("e2-leaf", op, grid))
        if op not in COMMUTATIVE:
            shapes.append(("leaf-e2", op, _apply(op, leaves0[None, :], v2[:, None])))
        shapes.append(("e2-self", op, _apply(op, v2, v2)[:, None]))
    shapes.append(("e2-abs", "fabs", np.abs(v2)[:, None]))

    # op(e2, e1) where e1 is the register e2 was computed from
    shared = list(enumerate(e2_all.recipes))
    if shared:
        sv = np.array([e2_all.rows[i][0] for i, _ in shared])
        cv = np.array([_eval(_inner(r), X[:1])[0] for _, r in shared])
        for op in BINARY_OPS:
            shapes.append(("shared", op, _apply(op, sv, cv)[:, None]))
            if op not in COMMUTATIVE:
                shapes.append(("shared-rev", op, _apply(op, cv, sv)[:, None]))

    # op(e1, e1') over two independent registers
    v1 = m1[:, 0]
    for op in BINARY_OPS:
        shapes.append(("e1-e1", op, _apply(op, v1[:, None], v1[None, :])))

    for tag, op, grid in shapes:
        cand = np.argwhere(_close(grid, np.float64(y0), tol))
        for i, j in cand:
            recipe = _recipe3(tag, op, int(i), int(j), e1, e2, shared)
            if recipe is None:
                continue
            vals = _eval(recipe, X)
            if np.all(_close(vals, y, tol)):
                return _lower(recipe, s), None
    return None


def _inner(r: Recipe) -> Recipe:
    """The register a length-2 recipe was computed from."""
    return r[1] if r[1][0] != "leaf" else r[2]


def _recipe3(tag, op, i, j, e1: _Table, e2: _Table, shared) -> Recipe | None:
    if tag == "e2-leaf":
        return (op, e2.recipes[i], ("leaf", j))
    if tag == "leaf-e2":
        return (op, ("leaf", j), e2.recipes[i])
    if tag == "e2-self":
        return (op, e2.recipes[i], e2.recipes[i])
    if tag == "e2-abs":
        return ("fabs", e2.recipes[i])
    if tag == "shared":
        r = shared[i][1]
        return (op, r, _inner(r))
    if tag == "shared-rev":
        r = shared[i][1]
        return (op, _inner(r), r)
    if i == j:
        return None  # op(e1, e1) is a length-2 expression
    if op in COMMUTATIVE and i > j:
        return None
    return (op, e1.recipes[i], e1.recipes[j])


def _eval(recipe: Recipe, X: np.ndarray) -> np.ndarray:
    if recipe[0] == "leaf":
        return X[:, recipe[1]]
    if recipe[0] == "fabs":
        return np.abs(_eval(recipe[1], X))
    return _apply(recipe[0], _eval(recipe[1], X), _eval(recipe[2], X))
