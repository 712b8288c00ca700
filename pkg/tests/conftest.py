import pathlib
import sys

import pytest

ROOT = pathlib.Path(__file__).resolve().parents[1]
NETWORKS = ROOT / "networks"
sys.path.insert(0, str(pathlib.Path(__file__).parent))

from crnldp.parse import load_network  # noqa: E402


def net_path(name: str) -> pathlib.Path:
    return NETWORKS / f"{name}.crn"


@pytest.fixture(scope="session")
def ex1():
    return load_network(net_path("example1"))


@pytest.fixture(scope="session")
def ex2():
    return load_network(net_path("example2"))


@pytest.fixture(scope="session")
def schlogl():
    return load_network(net_path("schlogl"))


@pytest.fixture(scope="session")
def birth_death():
    return load_network(net_path("birth_death"))


@pytest.fixture(scope="session")
def autocat():
    return load_network(net_path("autocatalysis"))
