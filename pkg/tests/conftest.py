from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fixtures import make_fixture_corpus, make_mwp_corpus, make_pet_corpus  # noqa: E402


@pytest.fixture(scope="session")
def mwp_corpus():
    return make_mwp_corpus(100, seed=7)


@pytest.fixture(scope="session")
def pet_corpus():
    return make_pet_corpus(100, seed=11)


@pytest.fixture(scope="session")
def fixture_corpus():
    return make_fixture_corpus()
