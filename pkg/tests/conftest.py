import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion(request):
    """Record a one-line PASS/FAIL verdict for an acceptance criterion."""
    state = {"name": request.node.name, "detail": ""}

    def note(name, detail=""):
        state["name"], state["detail"] = name, detail

    yield note
    failed = getattr(request.node, "rep_call", None)
    ok = failed is not None and failed.passed
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {state['name']}  {state['detail']}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep
    if rep.skipped and item.module.__name__.endswith("test_acceptance"):
        reason = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else ""
        ACCEPTANCE_LINES.append(f"[SKIP] {item.name}  {reason}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
