import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from hgmzf.scenario import CorrelationSpec, ScenarioConfig, build_correlation, derive_params

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ORACLES = Path(__file__).parent / "oracles" / "values.json"


@pytest.fixture(scope="session")
def oracle():
    """Reference values frozen by ``tests/oracles/generate.py``."""
    return json.loads(ORACLES.read_text())


def scenario_params(k_db=7.0, correlation="identity", **kw):
    cfg = ScenarioConfig(k_factor_db=k_db, correlation=CorrelationSpec.parse(correlation), **kw)
    rt = build_correlation(cfg.correlation, cfg.n_tx, cfg.azimuth_spread_deg)
    return cfg, rt, derive_params(cfg, rt)


@pytest.fixture(scope="session")
def default_scenario():
    return scenario_params()


ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for an acceptance criterion."""

    def record(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
