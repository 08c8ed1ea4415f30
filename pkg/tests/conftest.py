import sys

import numpy as np
import pytest

from ecgovo.hrv_features import synthetic_feature_matrix
from ecgovo.neural import split_70_30


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "ACCEPTANCE_RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in results.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture(scope="session")
def blobs():
    return synthetic_feature_matrix(500, seed=11)


@pytest.fixture(scope="session")
def blob_split(blobs):
    return split_70_30(blobs, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
