from pathlib import Path

import numpy as np
import pytest

from memassoc import data


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory) -> Path:
    """IDX files for the bundled MNIST subset, exported once if not already on disk."""
    if (data.DEFAULT_MNIST_DIR / "train-images-idx3-ubyte").exists():
        return data.DEFAULT_MNIST_DIR
    pytest.importorskip("mlxtend")
    return data.export_bundled_mnist(tmp_path_factory.mktemp("mnist"))


@pytest.fixture(scope="session")
def mnist_images(mnist_dir):
    return data.load_mnist(mnist_dir)


@pytest.fixture(scope="session")
def pool64(mnist_images):
    return data.distinct(data.preprocess_all(mnist_images, 8, "binary"))


@pytest.fixture(scope="session")
def digits10(pool64):
    return data.select_patterns(pool64, 10, per_digit=True, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    report = getattr(module, "REPORT", None)
    if report:
        terminalreporter.section("acceptance criteria")
        for number in sorted(report):
            terminalreporter.write_line(report[number])
