"""Staged search over the filled programs of one composition.

Filling every hole by blind enumeration is hopeless beyond toy kernels, so
holes are split in two groups:

* accumulator holes (loop ``init`` and ``body``) are enumerated, grouped in
  tiers by their total instruction count, with observationally equivalent
  fills collapsed;
* output holes (stores and the return) are solved from examples: the
  partially filled program is run with those holes open, recording the
  scope values each would see, and :func:`pbe.solve` finds the shortest
  fill producing the oracle's outputs there.

Any combination found this way is then checked by ordinary interpretation
against the oracle, so the staging only decides the order in which
candidates are considered.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import pbe
from .config import SearchConfig
from .holes import hole_options, loads_consumed
from .ir import Fill, Hole, LoopNode, Program, Skeleton, StoreNode, Trap, compile_fills, interpret, run_compiled
from .oracle import OracleFn, TestCase, compare_outputs
from .sigmodel import FunctionSpec

OUTPUT_KINDS = ("store", "return")
_OE_POINTS = 4


@dataclass
class Counters:
    candidates_tried: int = 0
    candidates_trapped: int = 0

    def add(self, other: "Counters") -> None:
        self.candidates_tried += other.candidates_tried
        self.candidates_trapped += other.candidates_trapped


@dataclass(frozen=True)
class Problem:
    """Everything a search needs besides the composition: immutable, picklable."""

    spec: FunctionSpec
    oracle: OracleFn
    cfg: SearchConfig
    tests: tuple[TestCase, ...]
    expected: tuple  # oracle outputs per quick test

    @cached_property
    def writes(self) -> frozenset[str]:
        """Buffers the oracle modifies on some quick test."""
        out = set()
        for tc, (_, bufs) in zip(self.tests, self.expected):
            out.update(k for k, v in bufs.items() if v != tc.buffers[k])
        return frozenset(out)


def make_problem(spec: FunctionSpec, oracle: OracleFn, cfg: SearchConfig, tests: list[TestCase]) -> Problem:
    return Problem(spec, oracle, cfg, tuple(tests), tuple(oracle(spec, tc) for tc in tests))


def passes(p: Program, prob: Problem, tests, expected=None) -> bool:
    """Interpret ``p`` on ``tests`` and compare with the oracle."""
    for n, tc in enumerate(tests):
        got = interpret(p, tc)
        if isinstance(got, Trap):
            return False
        want = expected[n] if expected is not None else prob.oracle(prob.spec, tc)
        if compare_outputs(prob.spec, tc, got, want, prob.cfg.tol) is not None:
            return False
    return True


# --------------------------------------------------------------------------
# liveness


@dataclass(frozen=True)
class Plan:
    """How the holes of a skeleton are treated by the staged search."""

    upstream: tuple[int, ...]  # live accumulator holes, enumerated
    outputs: tuple[int, ...]  # store/return holes, solved from examples
    dead: tuple[int, ...]  # accumulator holes forced empty
    upstream_only_loads: frozenset[int]  # load slots only upstream holes can read


def plan(sk: Skeleton) -> Plan | None:
    """Classify holes; ``None`` when some load can never be read."""
    loops: dict[int, LoopNode] = {}

    def walk(nodes) -> None:
        for n in nodes:
            if isinstance(n, LoopNode):
                loops[n.loop_id] = n
                walk(n.body)

    walk(sk.root)
    live = {h.id for h in sk.holes if h.kind in OUTPUT_KINDS}
    changed = True
    while changed:
        changed = False
        seen = {v.slot for hid in live for v in sk.holes[hid].scope}
        for lp in loops.values():
            if lp.acc.slot in seen and lp.init_hole not in live:
                live.update((lp.init_hole, lp.body_hole))
                changed = True
    outputs = tuple(h.id for h in sk.holes if h.kind in OUTPUT_KINDS)
    upstream = tuple(h.id for h in sk.holes if h.id in live and h.kind not in OUTPUT_KINDS)
    dead = tuple(h.id for h in sk.holes if h.id not in live)
    seen_out = {v.slot for hid in outputs for v in sk.holes[hid].scope}
    seen_up = {v.slot for hid in upstream for v in sk.holes[hid].scope}
    loads = {v.slot for v in sk.loads()}
    if not loads <= seen_out | seen_up:
        return None
    return Plan(upstream, outputs, dead, frozenset(loads - seen_out))


# --------------------------------------------------------------------------
# accumulator hole options, collapsed by observed behaviour


def _eval_fill(fill: Fill, h: Hole, point: list[float]) -> float:
    regs = list(point)
    for ins in fill:
        a = regs[ins.lhs]
        if ins.op == "fabs":
            regs.append(math.fabs(a))
            continue
        b = regs[ins.rhs]
        regs.append(a + b if ins.op == "fadd" else a - b if ins.op == "fsub" else a * b)
    if fill:
        return regs[-1]
    if h.kind == "body":
        return point[len(h.scope) - 1]  # the accumulator itself: no update
    return 0.0


def _oe_points(h: Hole) -> list[list[float]]:
    rng = random.Random(f"oe:{h.kind}:{len(h.scope)}")
    pts = []
    for _ in range(_OE_POINTS):
        pts.append([v.const if v.kind == "const" else rng.uniform(-2.0, 2.0) for v in h.scope])
    return pts


class HoleOptions:
    """Per-length lists of behaviourally distinct fills of one hole."""

    def __init__(self, h: Hole, max_len: int):
        self.hole = h
        self.max_len = max_len
        self._by_len: dict[int, list[Fill]] = {}
        self._seen: set[tuple] = set()
        self._points = _oe_points(h)

    def of_length(self, length: int) -> list[Fill]:
        for k in range(length + 1):
            if k not in self._by_len:
                self._by_len[k] = self._collect(k)
        return self._by_len[length]

    def _collect(self, length: int) -> list[Fill]:
        out = []
        for fill, _ in hole_options(self.hole, length):
            if len(fill) != length:
                continue
            vals = [_eval_fill(fill, self.hole, p) for p in self._points]
            if any(math.isnan(v) or math.isinf(v) for v in vals):
                continue
            key = tuple(round(v, 9) for v in vals)
            if key in self._seen:
                continue
            self._seen.add(key)
            out.append(fill)
        return out


# --------------------------------------------------------------------------
# one composition, one tier


@dataclass
class TierOutcome:
    program: Program | None = None
    counters: Counters = field(default_factory=Counters)
    timed_out: bool = False


class CompositionSearch:
    """Staged search state for one lowered composition (reused across tiers)."""

    def __init__(self, prob: Problem, sk: Skeleton, comp_index: int):
        self.prob = prob
        self.sk = sk
        self.comp_index = comp_index
        self.plan = plan(sk)
        k = prob.cfg.max_instr_per_hole
        self.options = {hid: HoleOptions(sk.holes[hid], k) for hid in (self.plan.upstream if self.plan else ())}
        self.affine_space = list(itertools.product(*(range(len(s.candidates)) for s in sk.sites)))
        self._pbe_cache: dict[tuple, tuple | None] = {}

    @property
    def viable(self) -> bool:
        if self.plan is None:
            return False
        stored = {n.array for n in _stores(self.sk.root)}
        return self.prob.writes <= stored

    def max_tier(self) -> int:
        if not self.viable:
            return -1
        return len(self.plan.upstream) * self.prob.cfg.max_instr_per_hole

    def _length_splits(self, tier: int) -> list[tuple[int, ...]]:
        k = self.prob.cfg.max_instr_per_hole
        n = len(self.plan.upstream)
        return [c for c in itertools.product(range(k + 1), repeat=n) if sum(c) == tier]

    def _space(self, tier: int) -> tuple[list, int]:
        """Blocks of per-hole option lists for ``tier`` and their total size."""
        blocks = []
        total = 0
        for split in self._length_splits(tier):
            lists = tuple(self.options[h].of_length(l) for h, l in zip(self.plan.upstream, split))
            size = math.prod(len(x) for x in lists)
            if size:
                blocks.append((lists, size))
                total += size
        return blocks, total

    @staticmethod
    def _unrank(blocks, idx: int) -> tuple[Fill, ...]:
        for lists, size in blocks:
            if idx < size:
                break
            idx -= size
        choice = []
        for lst in reversed(lists):
            idx, r = divmod(idx, len(lst))
            choice.append(lst[r])
        return tuple(reversed(choice))

    def run_tier(self, tier: int, deadline: float, clock, accept=None) -> TierOutcome:
        """Try the upstream fillings of ``tier``; stop at the first candidate
        that passes the quick tests and ``accept`` (if given)."""
        out = TierOutcome()
        if tier > self.max_tier():
            return out
        cfg = self.prob.cfg
        blocks, n_fills = self._space(tier)
        n_aff = len(self.affine_space)
        total = n_fills * n_aff
        if total == 0:
            return out
        if cfg.mode == "exhaustive":
            order = range(min(total, cfg.max_candidates_per_composition))
        else:
            rng = random.Random(f"{cfg.seed}:{tier}:{self.comp_index}")
            order = rng.sample(range(total), min(total, cfg.max_candidates_per_composition))
        for idx in order:
            if clock() > deadline:
                out.timed_out = True
                return out
            fill_idx, aff_idx = divmod(idx, n_aff)
            p = self._try(self._unrank(blocks, fill_idx), self.affine_space[aff_idx], out.counters)
            if p is not None and (accept is None or accept(p)):
                out.program = p
                return out
        return out

    def _fills(self, up_fills: tuple[Fill, ...], outputs: dict[int, Fill]) -> list[Fill]:
        fills: list[Fill] = [()] * len(self.sk.holes)
        for hid, f in zip(self.plan.upstream, up_fills):
            fills[hid] = f
        for hid, f in outputs.items():
            fills[hid] = f
        return fills

    def _try(self, up_fills: tuple[Fill, ...], affine: tuple[int, ...], counters: Counters) -> Program | None:
        sk, pl, prob = self.sk, self.plan, self.prob
        if pl.upstream_only_loads:
            read = set()
            for hid, fill in zip(pl.upstream, up_fills):
                scope = sk.holes[hid].scope
                for ins in fill:
                    read.update(scope[o].slot for o in ins.operands() if o < len(scope))
            if not pl.upstream_only_loads <= read:
                return None
        counters.candidates_tried += 1
        partial = compile_fills(sk, tuple(self._fills(up_fills, {})), affine)
        points: dict[int, list] = {hid: [] for hid in pl.outputs}
        for tc, (want_ret, want_bufs) in zip(prob.tests, prob.expected):
            probe: dict[int, list] = {hid: [] for hid in pl.outputs}
            got = run_compiled(partial, tc.scalars, tc.buffers, probe)
            if isinstance(got, Trap):
                counters.candidates_trapped += 1
                return None
            for hid in pl.outputs:
                h = sk.holes[hid]
                slots = [v.slot for v in h.scope]
                if h.kind == "return":
                    for env, _ in probe[hid]:
                        points[hid].append(([env[s] for s in slots], want_ret))
                    continue
                array = _store_array(sk, hid)
                last: dict[int, tuple] = {}
                for env, k in probe[hid]:
                    last[k] = env
                target = want_bufs[array]
                for k, v in enumerate(target):
                    if k in last:
                        points[hid].append(([last[k][s] for s in slots], v))
                    elif not prob.cfg.tol.close(tc.buffers[array][k], v):
                        return None
        outputs: dict[int, Fill] = {}
        ret_bare = None
        for hid in pl.outputs:
            h = sk.holes[hid]
            pts = points[hid]
            X = np.array([p[0] for p in pts], dtype=np.float64).reshape(len(pts), len(h.scope))
            y = np.array([p[1] for p in pts], dtype=np.float64)
            key = (hid, X.tobytes(), y.tobytes())
            if key not in self._pbe_cache:
                self._pbe_cache[key] = pbe.solve(X, y, prob.cfg.max_instr_per_hole, h.allow_bare, prob.cfg.tol)
            sol = self._pbe_cache[key]
            if sol is None:
                return None
            outputs[hid] = sol[0]
            if h.kind == "return":
                ret_bare = sol[1]
        fills = tuple(self._fills(up_fills, outputs))
        if not loads_consumed(sk, fills):
            return None
        p = Program(sk, fills, affine, ret_bare)
        if not passes(p, prob, prob.tests, prob.expected):
            return None
        return p


def _stores(nodes):
    for n in nodes:
        if isinstance(n, LoopNode):
            yield from _stores(n.body)
        elif isinstance(n, StoreNode):
            yield n


def _store_array(sk: Skeleton, hid: int) -> str:
    for n in _stores(sk.root):
        if n.hole == hid:
            return n.array
    raise KeyError(hid)
