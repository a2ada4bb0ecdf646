import math
import time

import pytest

from dcbus import DCBusVoltageTuner, VscParams
from dcbus.scenario import EXAMPLES, load_example
from dcbus.sim import simulate, simulate_linear

# (scheme, f_n [Hz], C_o [F]) for the four design examples
DESIGN_EXAMPLES = {
    "design1": ("conventional", 4.75, 1.1e-3),
    "design2": ("improved", 12.93, 1.1e-3),
    "design3": ("conventional", 8.85, 1.1e-3),
    "design4": ("improved", 12.93, 0.68e-3),
}

_ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, ok, detail):
    _ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def plant():
    return VscParams()


def example_tuner(name):
    scheme, f_n, c_o = DESIGN_EXAMPLES[name]
    return DCBusVoltageTuner(scheme=scheme, phase_margin=45.0, bandwidth_hz=f_n).fit(VscParams(c_o=c_o))


@pytest.fixture(scope="session", params=list(DESIGN_EXAMPLES))
def example(request):
    return request.param, example_tuner(request.param)


class _SimCache:
    """Scenario runs are expensive; share them across the session."""

    def __init__(self):
        self._runs = {}
        self.elapsed = {}

    def get(self, name, linear=False, steady_start=False):
        key = (name, linear, steady_start)
        if key not in self._runs:
            cfg = load_example(name).config
            if steady_start:
                cfg = cfg.replace(v_o_init=cfg.plant.v_o_ref)
            t0 = time.perf_counter()
            self._runs[key] = (simulate_linear if linear else simulate)(cfg)
            self.elapsed[key] = time.perf_counter() - t0
        return self._runs[key]


@pytest.fixture(scope="session")
def sims():
    return _SimCache()


@pytest.fixture(scope="session")
def scenarios():
    return {n: load_example(n) for n in EXAMPLES}


TWO_PI = 2 * math.pi
