"""Component-based synthesis of numeric kernels from signatures augmented
with property relations."""

from .config import SearchConfig
from .driver import Exhausted, Found, TimedOut, report, synthesize
from .oracle import ORACLES, Tolerance, equivalent, gen_inputs, lookup_oracle
from .query import match_rule, parse_rules, solve
from .sigmodel import FunctionSpec, SpecError, parse_spec, print_spec

__all__ = [
    "ORACLES",
    "Exhausted",
    "Found",
    "FunctionSpec",
    "SearchConfig",
    "SpecError",
    "TimedOut",
    "Tolerance",
    "equivalent",
    "gen_inputs",
    "lookup_oracle",
    "match_rule",
    "parse_rules",
    "parse_spec",
    "print_spec",
    "report",
    "solve",
    "synthesize",
]
