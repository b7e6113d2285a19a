import pathlib

import numpy as np
import pytest

from mmrw.model import MMRWModel, reference_model

MODELS_DIR = pathlib.Path(__file__).resolve().parent.parent / "models"


@pytest.fixture(scope="session")
def r0():
    return reference_model("R0")


@pytest.fixture(scope="session")
def r1():
    return reference_model("R1")


@pytest.fixture(scope="session")
def r2():
    return reference_model("R2")


@pytest.fixture(scope="session")
def models_dir():
    return MODELS_DIR


def random_model(rng, s0, density=0.7):
    """Random stochastic model with both drifts negative.

    Down/left steps get extra weight so the drift condition holds.
    """
    bias = np.array([3.0, 1.0, 1.0])
    weight = bias[:, None] * bias[None, :]
    blocks = rng.random((3, 3, s0, s0)) * (rng.random((3, 3, s0, s0)) < density)
    blocks *= weight[:, :, None, None]
    blocks[1, 1] += 0.05 * np.eye(s0)
    blocks /= blocks.sum(axis=(0, 1, 3))[None, None, :, None]
    return MMRWModel(s0, blocks)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
