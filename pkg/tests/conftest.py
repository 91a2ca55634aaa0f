from __future__ import annotations

import pytest

from propsynth.cli import data_path
from propsynth.query import parse_rules
from propsynth.sigmodel import parse_spec

KERNELS = ("dot", "scal", "vadd", "axpy", "asum", "copy")


def bundled_spec(name: str):
    return parse_spec(data_path("specs", f"{name}.sig").read_text())


def default_rules():
    return parse_rules(data_path("default.rules").read_text())


@pytest.fixture(scope="session")
def gemv():
    return bundled_spec("gemv")


@pytest.fixture(scope="session")
def dot():
    return bundled_spec("dot")


@pytest.fixture(scope="session")
def rules():
    return default_rules()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s[1 : s.index("]")])):
            terminalreporter.write_line(line)
