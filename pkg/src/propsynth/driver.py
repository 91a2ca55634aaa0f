"""End-to-end synthesis: fragments, compositions, hole filling, testing."""

from __future__ import annotations

import json
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Union

from .cemit import emit_c
from .config import SearchConfig
from .fragments import Composition, enumerate_compositions, instantiate_fragments, lower
from .holes import fill_holes
from .ir import Program
from .oracle import Equivalent, OracleFn, Rejected, equivalent, gen_tests
from .query import RuleLibrary
from .search import CompositionSearch, Counters, Problem, make_problem, passes
from .sigmodel import FunctionSpec, check_eligible

VERIFY_SEED_OFFSET = 1_000_003


class IncompatibleOracle(ValueError):
    pass


@dataclass
class Stats:
    compositions_tried: int = 0
    candidates_tried: int = 0
    candidates_trapped: int = 0
    wall_seconds: float = 0.0
    winning_composition_index: int | None = None

    def absorb(self, c: Counters) -> None:
        self.candidates_tried += c.candidates_tried
        self.candidates_trapped += c.candidates_trapped


@dataclass
class Found:
    program: Program
    c_text: str
    stats: Stats
    composition: Composition | None = field(default=None)


@dataclass
class Exhausted:
    stats: Stats


@dataclass
class TimedOut:
    stats: Stats


SynthesisResult = Union[Found, Exhausted, TimedOut]


def verify_tests(spec: FunctionSpec, cfg: SearchConfig):
    """The held-out tests used to confirm a candidate that passed the quick tests."""
    return gen_tests(spec, cfg.seed + VERIFY_SEED_OFFSET, cfg.verify_tests, cfg.size_range)


def _compositions(spec: FunctionSpec, rules: RuleLibrary, cfg: SearchConfig) -> list[Composition]:
    frags = instantiate_fragments(rules, spec)
    return list(enumerate_compositions(frags, cfg.max_fragments, spec))


def synthesize(spec: FunctionSpec, rules: RuleLibrary, oracle: OracleFn, cfg: SearchConfig) -> SynthesisResult:
    check_eligible(spec)
    problems = oracle.compatible(spec)
    if problems:
        raise IncompatibleOracle("; ".join(problems))
    start = time.monotonic()
    deadline = start + cfg.timeout_seconds
    comps = _compositions(spec, rules, cfg)
    prob = make_problem(spec, oracle, cfg, gen_tests(spec, cfg.seed, cfg.n_tests, cfg.size_range))
    held_out = verify_tests(spec, cfg)
    if cfg.strategy == "enumerate":
        result = _enumerate(prob, comps, held_out, deadline)
    else:
        result = _staged(prob, comps, held_out, deadline)
    result.stats.wall_seconds = time.monotonic() - start
    return result


# --------------------------------------------------------------------------
# literal strategy: every filling of every composition, in canonical order


def _enumerate(prob: Problem, comps: list[Composition], held_out, deadline: float) -> SynthesisResult:
    cfg, spec = prob.cfg, prob.spec
    stats = Stats()
    for idx, comp in enumerate(comps):
        sk = lower(comp, spec)
        tried_here = False
        for p in fill_holes(sk, cfg, random.Random(f"{cfg.seed}:{idx}")):
            if time.monotonic() > deadline:
                return TimedOut(stats)
            if not tried_here:
                stats.compositions_tried += 1
                tried_here = True
            stats.candidates_tried += 1
            v = equivalent(p, prob.oracle, spec, cfg.n_tests, cfg.tol, tests=list(prob.tests))
            if isinstance(v, Rejected):
                stats.candidates_trapped += 1
            if isinstance(v, Equivalent) and passes(p, prob, held_out):
                stats.winning_composition_index = idx
                return Found(p, emit_c(p), stats, comp)
    return Exhausted(stats)


# --------------------------------------------------------------------------
# staged strategy: global tiers of accumulator-hole size, outputs from examples

# per-process state for worker pools
_WORKER: dict = {}


def _worker_init(prob: Problem, comps: list[Composition], held_out) -> None:
    _WORKER.clear()
    _WORKER.update(prob=prob, comps=comps, held_out=held_out, searches={})


def _search_for(idx: int) -> CompositionSearch:
    searches = _WORKER["searches"]
    if idx not in searches:
        prob = _WORKER["prob"]
        searches[idx] = CompositionSearch(prob, lower(_WORKER["comps"][idx], prob.spec), idx)
    return searches[idx]


def _run_unit(args: tuple[int, int, float]):
    """Search one composition at one tier; returns (program, counters, timed_out)."""
    idx, tier, deadline = args
    s = _search_for(idx)
    out = s.run_tier(tier, deadline, time.monotonic, accept=lambda p: passes(p, s.prob, _WORKER["held_out"]))
    return out.program, out.counters, out.timed_out


def tier_bound(comp: Composition, prob: Problem) -> int:
    """Upper bound on the tiers of ``comp`` without lowering it (-1: hopeless).

    A composition lacking a store for some buffer the oracle writes can never
    match.  Otherwise at most every accumulator hole is live.
    """
    instances = comp.instances()
    stored = {f.arrays[0] for f in instances if f.kind == "store"}
    if not prob.writes <= stored:
        return -1
    return 2 * sum(f.is_loop for f in instances) * prob.cfg.max_instr_per_hole


def _staged(prob: Problem, comps: list[Composition], held_out, deadline: float) -> SynthesisResult:
    stats = Stats()
    _worker_init(prob, comps, held_out)
    max_tiers = {i: tier_bound(c, prob) for i, c in enumerate(comps)}
    top = max(max_tiers.values(), default=-1)
    touched: set[int] = set()
    pool = ProcessPoolExecutor(prob.cfg.workers, initializer=_worker_init, initargs=(prob, comps, held_out)) if prob.cfg.workers > 1 else None
    try:
        for tier in range(top + 1):
            units = [(i, tier, deadline) for i in range(len(comps)) if max_tiers[i] >= tier]
            results = pool.map(_run_unit, units) if pool else map(_run_unit, units)
            # consumed in canonical order: the first Found is the lowest index
            for (idx, _, _), (program, counters, timed_out) in zip(units, results):
                stats.absorb(counters)
                if counters.candidates_tried:
                    touched.add(idx)
                stats.compositions_tried = len(touched)
                if program is not None:
                    stats.winning_composition_index = idx
                    return Found(program, emit_c(program), stats, comps[idx])
                if timed_out:
                    return TimedOut(stats)
    finally:
        if pool is not None:
            pool.shutdown(wait=False, cancel_futures=True)
    return Exhausted(stats)


# --------------------------------------------------------------------------
# reporting


def report(result: SynthesisResult, cfg: SearchConfig | None = None) -> str:
    """Canonical JSON text for ``result``.

    Wall-clock time is only included for timeouts so that two runs with the
    same inputs produce byte-identical reports.
    """
    status = {Found: "found", Exhausted: "exhausted", TimedOut: "timeout"}[type(result)]
    st = result.stats
    stats: dict = {
        "compositions_tried": st.compositions_tried,
        "candidates_tried": st.candidates_tried,
        "candidates_trapped": st.candidates_trapped,
        "winning_composition_index": st.winning_composition_index,
    }
    if isinstance(result, TimedOut):
        stats["wall_seconds"] = round(st.wall_seconds, 3)
    doc: dict = {"status": status, "stats": stats}
    if cfg is not None:
        doc["config"] = cfg.to_json()
    if isinstance(result, Found):
        doc["composition"] = str(result.composition) if result.composition is not None else None
        doc["program"] = result.program.to_json()
        doc["c"] = result.c_text
    return json.dumps(doc, indent=2) + "\n"
