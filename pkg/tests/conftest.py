import pytest

from nashchannel.config import load_fixture


@pytest.fixture(scope="session")
def table1():
    return load_fixture("table1")


@pytest.fixture(scope="session")
def env(table1):
    return table1.env


@pytest.fixture(scope="session")
def scr(table1):
    return table1.scr
