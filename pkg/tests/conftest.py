import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ineq_uq.microdata import SyntheticPopulationSpec, draw_stratified_sample, generate_population

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_population():
    return generate_population(SyntheticPopulationSpec(population_size=100_000, seed=5))


@pytest.fixture(scope="session")
def small_sample(small_population):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return draw_stratified_sample(small_population, seed=11)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
