import sys
from pathlib import Path

import numpy as np
import pytest

from biotune import toytrainer as tt
from biotune.fitness import FitnessSpec

FIXTURES = Path(__file__).parent / "fixtures"
ECHO_EVALUATOR = [sys.executable, str(FIXTURES / "echo_evaluator.py")]


def echo_command(mode: str | None = None) -> list[str]:
    return ECHO_EVALUATOR + ([mode] if mode else [])


@pytest.fixture(scope="session")
def default_task():
    return tt.make_task(seed=0)


@pytest.fixture(scope="session")
def train_spec():
    return tt.TrainSpec()


@pytest.fixture(scope="session")
def pretrained(default_task, train_spec):
    rng = np.random.default_rng(0)
    net = tt.BlockNet.init(6, default_task.feature_dim, 16, default_task.num_source_classes, rng)
    return tt.pretrain(net, default_task, train_spec, seed=0)


@pytest.fixture(scope="session")
def toy_evaluator(default_task, train_spec):
    return tt.ToyEvaluator(default_task, train_spec, FitnessSpec(), seed=0)
