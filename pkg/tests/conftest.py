import pytest

from trailmine.actions import default_ruleset


@pytest.fixture(scope="session")
def ruleset():
    return default_ruleset()


@pytest.fixture(scope="session")
def vocab(ruleset):
    return ruleset.vocabulary
