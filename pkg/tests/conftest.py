import sys

import pytest

from cartanhol.catalog import catalog_entry
from cartanhol.holonomy import Protocol, classify

_classified = {}


@pytest.fixture(scope="session")
def classified():
    """Classification reports of catalog manifolds, computed once per session."""

    def get(name):
        if name not in _classified:
            chart, x = catalog_entry(name)
            _classified[name] = classify(chart, x, Protocol(seed=0), manifold=name)
        return _classified[name]

    return get


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
