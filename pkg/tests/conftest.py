import numpy as np
import pytest
from hypothesis import settings

from robustrx.synth import GeneratorConfig, generate

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_cohort():
    return generate(GeneratorConfig(n=600, p=5, m=3, seed=11, param_seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_split(small_cohort):
    from robustrx.evaluation import _split_index

    tr, te = _split_index(len(small_cohort.dataset), 0.8, seed=1)
    return small_cohort.subset(tr), small_cohort.subset(te)


@pytest.fixture(scope="session")
def small_pipe(small_split):
    from robustrx.pipeline import train_pipeline

    return train_pipeline(small_split[0].dataset, seed=4)


ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion, then assert it."""
    def check(n, title, ok, detail):
        line = f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        ACCEPTANCE[n] = line
        print(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
