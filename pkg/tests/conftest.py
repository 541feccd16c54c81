import json
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bgformula.simulator import ToyDgpConfig

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURES = Path(__file__).parent / "fixtures"

# acceptance criteria report one line each; collected here and echoed at the end
ACCEPTANCE_LINES: dict[str, str] = {}


def record(criterion: str, passed: bool, detail: str) -> None:
    line = f"{criterion:4s} {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k[1:].rstrip("ab")), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def sim51_truth():
    return json.loads((FIXTURES / "sim51_natural_truth.json").read_text())


TOY_TABLES = dict(p_l0=0.4, p_l=[[0.2, 0.1], [0.7, 0.5]], p_a=[[0.3, 0.7], [0.6, 0.8]],
                  hazard=[[[0.05, 0.03], [0.15, 0.08]], [[0.08, 0.04], [0.20, 0.10]]],
                  cens=0.1)


def toy_config(n=20000, seed=1, **kw) -> ToyDgpConfig:
    return ToyDgpConfig(n=n, T=2, seed=seed, **{**TOY_TABLES, **kw})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
