"""Hole filling: enumerate or sample instruction sequences for a skeleton.

The pruned space of a hole with ``s`` scope values and budget ``k``:

* sequences of at most ``k`` instructions over fadd/fsub/fmul/fabs;
* fadd/fmul operands in canonical order (``lhs <= rhs``);
* every register except the last is read by a later instruction;
* store holes need at least one instruction, return holes may instead
  name a bare scope value.

Across holes, every load provided by a fragment must be read by some
instruction of a hole that can see it.
"""

from __future__ import annotations

import itertools
import random
from functools import lru_cache
from typing import Iterator

from .ir import BINARY_OPS, COMMUTATIVE, Fill, Hole, Instr, Program, Skeleton

_CACHE_LIMIT = 200_000


def instr_options(n: int) -> list[Instr]:
    """Canonical instructions over ``n`` available operands."""
    out = []
    for op in BINARY_OPS:
        for a in range(n):
            for b in range(a if op in COMMUTATIVE else 0, n):
                out.append(Instr(op, a, b))
    out.extend(Instr("fabs", a) for a in range(n))
    return out


def n_instr_options(n: int) -> int:
    return 2 * n * n + 2 * n


def raw_count(s: int, length: int) -> int:
    total = 1
    for k in range(length):
        total *= n_instr_options(s + k)
    return total


def registers_consumed(fill: Fill, s: int) -> bool:
    """Pruning rule: each non-final register is read later in the hole."""
    if len(fill) < 2:
        return True
    read = set()
    for ins in fill:
        read.update(ins.operands())
    return all(s + k in read for k in range(len(fill) - 1))


def _sequences(s: int, length: int) -> Iterator[Fill]:
    if length == 0:
        yield ()
        return

    def rec(prefix: tuple[Instr, ...], pending: frozenset[int]) -> Iterator[Fill]:
        k = len(prefix)
        if k == length:
            if pending <= {s + k - 1}:
                yield prefix
            return
        remaining = length - k - 1
        for ins in instr_options(s + k):
            left = pending - set(ins.operands())
            # registers still unread must fit into the remaining instructions
            if len(left) > 2 * remaining:
                continue
            yield from rec(prefix + (ins,), left | {s + k})

    yield from rec((), frozenset())


@lru_cache(maxsize=256)
def _cached_sequences(s: int, length: int) -> tuple[Fill, ...]:
    return tuple(_sequences(s, length))


def sequences(s: int, length: int) -> Iterator[Fill]:
    """All pruned sequences of exactly ``length`` instructions."""
    if raw_count(s, length) <= _CACHE_LIMIT:
        return iter(_cached_sequences(s, length))
    return _sequences(s, length)


HoleOption = tuple[Fill, "int | None"]  # (instructions, bare scope index for empty return)


def hole_options(h: Hole, max_len: int) -> Iterator[HoleOption]:
    """Every pruned filling of ``h`` in canonical order (by length)."""
    s = len(h.scope)
    for length in range(h.min_len, max_len + 1):
        if length == 0:
            if h.allow_bare:
                for i in range(s):
                    yield (), i
            else:
                yield (), None
            continue
        for fill in sequences(s, length):
            yield fill, None


def loads_consumed(sk: Skeleton, fills: tuple[Fill, ...]) -> bool:
    """Pruning rule: each fragment-provided load is read by some instruction."""
    read: set[int] = set()
    for h, fill in zip(sk.holes, fills):
        s = len(h.scope)
        for ins in fill:
            for o in ins.operands():
                if o < s:
                    read.add(h.scope[o].slot)
    return all(v.slot in read for v in sk.loads())


def _make(sk: Skeleton, options: tuple[HoleOption, ...], affine: tuple[int, ...]) -> Program:
    ret_bare = None
    if sk.return_hole is not None:
        ret_bare = options[sk.return_hole][1]
    return Program(sk, tuple(o[0] for o in options), affine, ret_bare)


def _exhaustive(sk: Skeleton, k: int) -> Iterator[Program]:
    holes = sk.holes
    affine_space = list(itertools.product(*(range(len(s.candidates)) for s in sk.sites)))

    def rec(i: int, acc: tuple[HoleOption, ...]) -> Iterator[tuple[HoleOption, ...]]:
        if i == len(holes):
            yield acc
            return
        for opt in hole_options(holes[i], k):
            yield from rec(i + 1, acc + (opt,))

    for options in rec(0, ()):
        if not loads_consumed(sk, tuple(o[0] for o in options)):
            continue
        for affine in affine_space:
            yield _make(sk, options, affine)


def sample_hole(h: Hole, k: int, rng: random.Random) -> HoleOption | None:
    """Uniform draw from the pruned fillings of ``h`` (rejection sampling)."""
    s = len(h.scope)
    weights = []
    for length in range(h.min_len, k + 1):
        if length == 0:
            weights.append(s if h.allow_bare else 1)
        else:
            weights.append(raw_count(s, length))
    if not any(weights):
        return None
    lengths = list(range(h.min_len, k + 1))
    for _ in range(10_000):
        length = rng.choices(lengths, weights=weights)[0]
        if length == 0:
            return ((), rng.randrange(s)) if h.allow_bare else ((), None)
        fill = []
        for j in range(length):
            n = s + j
            idx = rng.randrange(n_instr_options(n))
            fill.append(_unrank_instr(n, idx))
        if registers_consumed(tuple(fill), s):
            return tuple(fill), None
    return None


def _unrank_instr(n: int, idx: int) -> Instr:
    comm = n * (n + 1) // 2
    if idx < comm:
        return Instr("fadd", *_unrank_pair(n, idx))
    idx -= comm
    if idx < n * n:
        return Instr("fsub", idx // n, idx % n)
    idx -= n * n
    if idx < comm:
        return Instr("fmul", *_unrank_pair(n, idx))
    idx -= comm
    return Instr("fabs", idx)


def _unrank_pair(n: int, idx: int) -> tuple[int, int]:
    a = 0
    while idx >= n - a:
        idx -= n - a
        a += 1
    return a, a + idx


def sample_program(sk: Skeleton, k: int, rng: random.Random, attempts: int = 10_000) -> Program | None:
    for _ in range(attempts):
        options = []
        for h in sk.holes:
            opt = sample_hole(h, k, rng)
            if opt is None:
                return None
            options.append(opt)
        fills = tuple(o[0] for o in options)
        if loads_consumed(sk, fills):
            affine = tuple(rng.randrange(len(s.candidates)) for s in sk.sites)
            return _make(sk, tuple(options), affine)
    return None


def fill_holes(sk: Skeleton, cfg, rng: random.Random) -> Iterator[Program]:
    """Programs completing ``sk`` under ``cfg``'s budget.

    Exhaustive mode yields the whole pruned space in canonical order.
    Random mode yields up to ``cfg.max_candidates_per_composition`` distinct
    uniform draws; draw ``c`` uses a sub-seed derived from ``rng`` and ``c``.
    """
    k = cfg.max_instr_per_hole
    if cfg.mode == "exhaustive":
        yield from _exhaustive(sk, k)
        return
    base = rng.getrandbits(64)
    seen: set[tuple] = set()  # keyed without the skeleton, which is costly to hash
    for c in range(cfg.max_candidates_per_composition):
        p = sample_program(sk, k, random.Random(f"{base}:{c}"))
        if p is None:
            return
        key = (p.fills, p.affine, p.ret_bare)
        if key not in seen:
            seen.add(key)
            yield p
