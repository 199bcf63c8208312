import os

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from ddr.data import gen_sdata  # noqa: E402
from ddr.training import TrainConfig, train  # noqa: E402

TRAIN_EPOCHS = 1500


@pytest.fixture(scope="session")
def sdata():
    return gen_sdata()


@pytest.fixture(scope="session")
def trained(sdata):
    """One seeded training run on S-data shared by the slow checks."""
    config = TrainConfig(k=2, mu=1e-3, degrees=(0, 1, 2, 3), epochs=TRAIN_EPOCHS, seed=0)
    params, trace = train(sdata, config)
    return params, trace


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    previous = ACCEPTANCE_RESULTS.get(number)
    if previous is not None:
        ok = ok and previous[0]
        detail = f"{previous[1]}; {detail}"
    ACCEPTANCE_RESULTS[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
