import re

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from submort.core import AgeGrid, MortalityDataset
from submort.pca import build_basis
from submort.simulator import make_counties, reference_schedules, simulate_dataset, standard_lifetable

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def standard():
    return standard_lifetable()


@pytest.fixture(scope="session")
def basis(standard):
    return build_basis(reference_schedules(standard, seed=0), 3)


@pytest.fixture(scope="session")
def small_fit_data(standard):
    counties = make_counties(standard, (1000, 100000), n_per_size=1, seed=11)
    return simulate_dataset(counties, range(2000, 2004), seed=11)


def tiny_dataset(deaths, exposure, ages=(0,), years=None, areas=None, aggregate=None):
    deaths = np.asarray(deaths, float)
    exposure = np.asarray(exposure, float)
    G, A, T = deaths.shape
    return MortalityDataset(
        areas or [f"a{i}" for i in range(A)],
        years or list(range(2000, 2000 + T)),
        deaths,
        exposure,
        AgeGrid(tuple(ages)),
        aggregate,
    )


ACCEPTANCE_LINES: dict = {}


def record_criterion(key, passed, detail):
    ACCEPTANCE_LINES[key] = f"criterion {key}: {'PASS' if passed else 'FAIL'} - {detail}"
    print(ACCEPTANCE_LINES[key])


def _criterion_order(key):
    head = re.match(r"\d+", key)
    return (int(head.group()) if head else 0, key)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=_criterion_order):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
