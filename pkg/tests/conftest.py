import numpy as np
import pytest
from hypothesis import settings

from brisk.gaussian import build_model, equicorrelated_model

settings.register_profile("brisk", deadline=None, max_examples=60)
settings.load_profile("brisk")


@pytest.fixture
def identity2():
    return build_model(np.eye(2))


@pytest.fixture
def rho_half():
    return equicorrelated_model(2, 0.5)


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("BRISK_CACHE_DIR", str(tmp_path / "cache"))


def random_spd(rng, d):
    a = rng.normal(size=(d, d))
    return a @ a.T + 0.3 * np.eye(d)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
