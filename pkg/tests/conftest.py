import pathlib

import pytest

from topicseal.groups import DeterministicScalars

GOLDEN_DIR = pathlib.Path(__file__).parent / "golden"


@pytest.fixture
def rng():
    """Fresh deterministic scalar stream per test."""
    return DeterministicScalars(b"test-fixture")


@pytest.fixture(scope="session")
def golden_dir():
    return GOLDEN_DIR
