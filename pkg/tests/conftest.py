import time
from contextlib import contextmanager

import pytest

# criterion name -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


@contextmanager
def criterion(name, budget_s=None):
    """Record one acceptance criterion; fails if the block raises or overruns ``budget_s``."""
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        ACCEPTANCE[name] = (False, f"{type(exc).__name__}: {exc}".splitlines()[0][:120])
        raise
    elapsed = time.perf_counter() - start
    if budget_s is not None and elapsed >= budget_s:
        ACCEPTANCE[name] = (False, f"runtime {elapsed:.3f}s >= {budget_s}s")
        pytest.fail(f"{name}: runtime {elapsed:.3f}s exceeds {budget_s}s")
    ACCEPTANCE[name] = (True, f"{elapsed:.3f}s")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
