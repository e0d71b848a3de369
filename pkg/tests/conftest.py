import warnings

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repo", derandomize=True, deadline=None)
settings.load_profile("repo")

warnings.filterwarnings("ignore", message=".*TBB.*")

from carpet_dyn.boettcher import component_records  # noqa: E402
from carpet_dyn.elevator import normalize  # noqa: E402
from carpet_dyn.raster import rasterize, trace_all  # noqa: E402
from carpet_dyn.sphere import example_map, power_map  # noqa: E402


@pytest.fixture(scope="session")
def f():
    return example_map()


@pytest.fixture(scope="session")
def z2():
    return power_map(2)


@pytest.fixture(scope="session")
def grid256(f):
    return rasterize(f, resolution=256)


@pytest.fixture(scope="session")
def grid512(f):
    return rasterize(f, resolution=512)


@pytest.fixture(scope="session")
def grid1024(f):
    return rasterize(f, resolution=1024)


@pytest.fixture(scope="session")
def curves512(grid512):
    return trace_all(grid512)


@pytest.fixture(scope="session")
def curves1024(grid1024):
    return trace_all(grid1024)


@pytest.fixture(scope="session")
def records512(f, grid512):
    return component_records(f, grid512)


@pytest.fixture(scope="session")
def z2_grid(z2):
    return rasterize(z2, resolution=512)


@pytest.fixture(scope="session")
def ctx(f):
    return normalize(f)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict(request):
    """Record one pass/fail line for an acceptance criterion; printed now and in the summary."""
    name = request.node.name

    def record(ok: bool, detail: str) -> None:
        line = f"{name}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
