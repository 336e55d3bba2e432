import os

import numpy as np
import pytest
import torch

from geoemu.grid import SplitSpec, split_dataset
from geoemu.preprocess import prepare
from geoemu.synthetic import SyntheticConfig, generate_synthetic

torch.set_num_threads(int(os.environ.get("GEOEMU_THREADS", "1")))

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def small_cfg():
    return SyntheticConfig(width=16, length=8, n_steps=48, land_fraction=0.2)


@pytest.fixture
def small_dataset(small_cfg):
    return generate_synthetic(small_cfg, seed=3)


@pytest.fixture
def small_prepared(small_dataset):
    grid, stack, target, _ = small_dataset
    split = SplitSpec(train_range=(0, 29), test_range=(36, 47), val_fraction=0.2)
    tr, va, te = split_dataset(split, grid.n_steps, seed=0)
    data = prepare(grid, stack, target, np.arange(0, 30))
    return data, (tr, va, te)
