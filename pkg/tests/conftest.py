import functools

import pytest

from jcrsim import experiments
from jcrsim.export import render
from jcrsim.scenario import builtin
from jcrsim.waveform_gen import LfmParams

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_addoption(parser):
    parser.addoption("--update-golden", action="store_true",
                     help="rewrite tests/golden/*.json from the current code")


@functools.lru_cache(maxsize=None)
def run_builtin(name: str, run: int = 0):
    """Bundle and rendered artifacts of a builtin, cached per (name, run).

    ``run`` distinguishes independent executions for the determinism checks.
    """
    bundle = experiments.execute(builtin(name))
    return bundle, render(bundle)


@pytest.fixture
def lfm_half():
    return LfmParams(8.5e9, 0.5e9, 4e-6)


@pytest.fixture
def lfm_full():
    return LfmParams(8.5e9, 1e9, 4e-6)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
