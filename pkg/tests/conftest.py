import numpy as np
import pytest

from hppspc.config import ScenarioConfig
from hppspc.harness import train_predictor


@pytest.fixture(scope="session")
def scenario():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def predictor(scenario):
    """Predictor fitted on the default (noisy) data set."""
    return train_predictor(scenario)


def lti_system(seed=0):
    """Stable, coupled 3-in/3-out first-order system ``y+ = A y + B u``."""
    rng = np.random.default_rng(seed)
    A = np.diag([np.exp(-20 / 20), np.exp(-20 / 30), np.exp(-20 / 10)])
    A = A + 0.05 * rng.standard_normal((3, 3))
    B = (np.eye(3) - np.diag(np.diag(A))) + 0.05 * rng.standard_normal((3, 3))
    return A, B


def lti_dataset(T, t_ini, n, seed=0, sys_seed=0):
    from hppspc.datagen import DataSet

    A, B = lti_system(sys_seed)
    rng = np.random.default_rng(seed)
    L = t_ini + n
    u = rng.standard_normal((T, L, 3))
    y = np.empty((T, L, 3))
    for j in range(T):
        x = rng.standard_normal(3)
        for k in range(L):
            y[j, k] = x
            x = A @ x + B @ u[j, k]
    return DataSet(u, y, t_ini, n)


@pytest.fixture(scope="session")
def clean_scenario():
    from dataclasses import replace
    s = ScenarioConfig()
    return replace(s, uncertainty=False, data=replace(s.data, noise_ratio=0.0))


@pytest.fixture(scope="session")
def clean_predictor(clean_scenario):
    """Predictor fitted on noiseless data."""
    return train_predictor(clean_scenario)


def step_inputs(scn, start_hour=11.88):
    """History and horizon data for one control step at ``start_hour``."""
    from hppspc.harness import _horizon, scenario_trace, warm_up

    tr = scenario_trace(scn, start_hour, scn.controller.n)
    hist, _ = warm_up(scn, tr)
    return hist, _horizon(scn, tr, 0)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one result line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(number, ok, detail):
        lines[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(lines[number])
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
