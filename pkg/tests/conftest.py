from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cfsampling.data import split
from cfsampling.synthetic import random_dataset

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def toy():
    return random_dataset(np.random.default_rng(7), n_users=50, n_items=40, mean_degree=9)


@pytest.fixture(scope="session")
def toy_split(toy):
    return split(toy, "implicit", 0)


@pytest.fixture(scope="session")
def toy_explicit(toy):
    return split(toy, "explicit", 0)


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
