import os
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from uxprop.datasets import load_auto_mpg
from uxprop.nn import REGRESSION, Dense, Model, ReLU, TrainParams, reference_mlp, train

ROOT = Path(__file__).resolve().parents[1]
DATA_DIR = ROOT / "data"

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def linear_regressor(w, b=0.0):
    w = np.asarray(w, dtype=np.float64)
    return Model([Dense(w[None, :], np.array([b]))], REGRESSION, (w.size,))


@pytest.fixture
def small_mlp():
    """Untrained 5 -> 7 -> ReLU -> 1 network with non-trivial weights."""
    r = np.random.default_rng(7)
    layers = [Dense(r.normal(size=(7, 5)), r.normal(size=7) * 0.1), ReLU(),
              Dense(r.normal(size=(1, 7)), np.array([0.3]))]
    return Model(layers, REGRESSION, (5,))


@pytest.fixture(scope="session")
def auto_mpg():
    return load_auto_mpg(DATA_DIR / "auto-mpg.data")


@pytest.fixture(scope="session")
def trained_mlp(auto_mpg):
    tr, _ = auto_mpg
    return train(reference_mlp(0), replace(tr, targets=tr.standardized_targets()),
                 TrainParams(lr=0.001, epochs=200, seed=0))


def env_workers():
    return int(os.environ.get("UXPROP_TEST_WORKERS", "1"))
