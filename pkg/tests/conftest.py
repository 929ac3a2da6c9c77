import numpy as np
import pytest

from hkelab.space import build_family

# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def graphs():
    cache = {}

    def get(family, size, **opts):
        key = (family, size, tuple(sorted(opts.items())))
        if key not in cache:
            cache[key] = build_family(family, size, **opts)
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
