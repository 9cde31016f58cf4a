import sys
import time
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from clustergate.constraints import load_constraints  # noqa: E402
from clustergate.fixtures import cmsweb_state  # noqa: E402
from clustergate.vault import Vault  # noqa: E402
from helpers import FakeClock, unsealed  # noqa: E402

DATA = Path(str(resources.files("clustergate") / "data"))
SESSION_START = pytest.StashKey[float]()


def pytest_configure(config):
    config.addinivalue_line("markers", "run_last: run after every other collected test")


def pytest_sessionstart(session):
    session.config.stash[SESSION_START] = time.perf_counter()


def pytest_collection_modifyitems(session, config, items):
    items.sort(key=lambda item: item.get_closest_marker("run_last") is not None)


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def policies_dir() -> Path:
    return DATA / "policies"


@pytest.fixture
def cmsweb_constraints(policies_dir):
    return load_constraints(policies_dir)


@pytest.fixture
def cmsweb_cluster():
    return cmsweb_state()


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def vault(tmp_path, clock):
    return Vault(tmp_path / "vault.db", clock=clock)


@pytest.fixture
def open_vault(vault):
    keys, root = unsealed(vault)
    return vault, keys, root
