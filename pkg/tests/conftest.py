import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("prodcat", max_examples=50, deadline=None)
settings.load_profile("prodcat")


@pytest.fixture(scope="session")
def small_catalog():
    from prodcat.dataset import SyntheticConfig, generate_synthetic

    return generate_synthetic(SyntheticConfig(n_rows=400, seed=3))


@pytest.fixture(scope="session")
def fast_config():
    from prodcat.config import PipelineConfig
    from prodcat.forest import ForestParams
    from prodcat.gbt import GbtParams

    return PipelineConfig(gbt=GbtParams(n_rounds=5, max_depth=3), forest=ForestParams(n_estimators=5, max_depth=4))


@pytest.fixture(scope="session")
def trained(small_catalog, fast_config):
    from prodcat.ensemble import train_ensemble

    return train_ensemble(small_catalog, fast_config)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then fail the test if the criterion failed."""

    def record(name: str, ok: bool, detail: str) -> None:
        _ACCEPTANCE.append(f"{name} {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
