from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from effops.config import RunConfig  # noqa: E402
from effops.evalbench import SyntheticTask, gen_task  # noqa: E402
from effops.lab import Lab  # noqa: E402
from effops.model import ModelConfig  # noqa: E402
from effops.operators import TrainConfig  # noqa: E402
from effops.pipeline import Registry  # noqa: E402


@pytest.fixture(scope="session")
def lab(tmp_path_factory) -> Lab:
    """Default toy profile with one registry shared by every slow test."""
    root = tmp_path_factory.mktemp("registry")
    return Lab(RunConfig(out_dir=str(root)), Registry(root))


@pytest.fixture(scope="session")
def small_task() -> SyntheticTask:
    return SyntheticTask(n_train=48, n_dev=16, n_test=32, seed=5)


@pytest.fixture(scope="session")
def small_data(small_task):
    return gen_task(small_task)


@pytest.fixture(scope="session")
def small_cfg(small_task, tmp_path_factory) -> RunConfig:
    """Few examples, one epoch: fast enough for structural operator tests."""
    return RunConfig(task=small_task, model=ModelConfig(), train=TrainConfig(epochs=1),
                     out_dir=str(tmp_path_factory.mktemp("small")))


@pytest.fixture(scope="session")
def small_lab(small_cfg) -> Lab:
    return Lab(small_cfg, Registry(Path(small_cfg.out_dir) / "registry"))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
