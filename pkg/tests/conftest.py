import os
from pathlib import Path

# the thread pool size is fixed when numba starts, so raise it before any import
os.environ.setdefault("NUMBA_NUM_THREADS", "8")
ROOT = Path(__file__).resolve().parent.parent
os.environ.setdefault("DARTS_TOF_CACHE", str(ROOT / ".cache" / "eda"))

import numpy as np  # noqa: E402
import pytest  # noqa: E402
from hypothesis import settings  # noqa: E402

from darts_tof.eda import EdaTableConfig  # noqa: E402
from darts_tof.render import get_table  # noqa: E402
from darts_tof.sceneio import load_scene  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

CORNELL = ROOT / "scenes" / "cornell.yaml"


@pytest.fixture(scope="session")
def cornell_desc():
    return load_scene(str(CORNELL))


@pytest.fixture(scope="session")
def cornell(cornell_desc):
    return cornell_desc.build()


@pytest.fixture(scope="session")
def cornell_table(cornell_desc):
    """Default-resolution table for the Cornell medium (disk cached)."""
    return get_table(cornell_desc.medium, EdaTableConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_LINES = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Returns ``report(criterion, passed, detail)``: writes a PASS/FAIL line now and again in the summary."""
    config = request.config
    config.stash.setdefault(_LINES, [])
    tr = config.pluginmanager.get_plugin("terminalreporter")

    def report(criterion: str, passed: bool, detail: str) -> bool:
        line = f"[acceptance] {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
        config.stash[_LINES].append(line)
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
