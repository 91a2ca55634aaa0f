from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .oracle import Tolerance


@dataclass(frozen=True)
class SearchConfig:
    max_fragments: int = 4
    max_instr_per_hole: int = 3
    mode: str = "random"  # random | exhaustive
    max_candidates_per_composition: int = 200_000
    n_tests: int = 8
    verify_tests: int = 64
    seed: int = 0
    timeout_seconds: float = 900.0
    size_range: tuple[int, int] = (1, 4)
    tol: Tolerance = field(default_factory=Tolerance)
    workers: int = 1
    strategy: str = "staged"  # staged | enumerate

    def __post_init__(self) -> None:
        problems = []
        if self.max_fragments < 1:
            problems.append("max_fragments must be >= 1")
        if self.max_instr_per_hole < 0:
            problems.append("max_instr_per_hole must be >= 0")
        if self.mode not in ("random", "exhaustive"):
            problems.append(f"mode must be random or exhaustive, got {self.mode!r}")
        if self.max_candidates_per_composition < 1:
            problems.append("max_candidates_per_composition must be >= 1")
        if self.n_tests < 1 or self.verify_tests < 1:
            problems.append("test counts must be >= 1")
        if self.timeout_seconds <= 0:
            problems.append("timeout_seconds must be positive")
        lo, hi = self.size_range
        if not 1 <= lo <= hi <= 16:
            problems.append(f"size_range must satisfy 1 <= lo <= hi <= 16, got {self.size_range}")
        if self.workers < 1:
            problems.append("workers must be >= 1")
        if self.strategy not in ("staged", "enumerate"):
            problems.append(f"strategy must be staged or enumerate, got {self.strategy!r}")
        if problems:
            raise ValueError("; ".join(problems))

    def to_json(self) -> dict:
        d = asdict(self)
        d["size_range"] = list(self.size_range)
        return d
