import os

import numpy as np
import pytest

from photonfi.accelerator import AcceleratorConfig, BlockConfig, build_accelerator
from photonfi import nn

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = os.path.join(REPO, "data")
FIXTURE_DIR = os.path.join(REPO, "fixtures")

TEST_IMAGES = os.path.join(DATA_DIR, "test-images-idx3-ubyte.gz")
TEST_LABELS = os.path.join(DATA_DIR, "test-labels-idx1-ubyte.gz")
ORIGINAL_ARCHIVE = os.path.join(FIXTURE_DIR, "original.slwa")
ROBUST_ARCHIVE = os.path.join(FIXTURE_DIR, "l2+n3.slwa")


@pytest.fixture(scope="session")
def toy_acc():
    """Single 3-ring bank per block: the textbook two-array topology."""
    return build_accelerator(AcceleratorConfig(
        conv=BlockConfig(units=1, banks=1, width=3),
        fc=BlockConfig(units=1, banks=1, width=3)))


@pytest.fixture(scope="session")
def small_acc():
    """A few units per block, kept small enough to brute-force."""
    return build_accelerator(AcceleratorConfig(
        conv=BlockConfig(units=4, banks=5, width=7),
        fc=BlockConfig(units=3, banks=8, width=20)))


@pytest.fixture(scope="session")
def default_acc():
    return build_accelerator(AcceleratorConfig())


def random_model(rng, with_bias=False):
    """A small conv+fc model with nonzero weights everywhere."""
    def w(*shape):
        return (rng.random(shape).astype(np.float32) - 0.5) * 2.0

    return nn.Model(name="small", layers=[
        nn.Conv2d(4, 1, (3, 3), weight=w(4, 1, 3, 3),
                  bias=w(4) if with_bias else None, name="c1"),
        nn.ReLU(),
        nn.MaxPool2d(2, 2),
        nn.Flatten(),
        nn.Linear(10, 4 * 13 * 13, weight=w(10, 4 * 13 * 13),
                  bias=w(10) if with_bias else None, name="f1"),
    ])


@pytest.fixture(scope="session")
def dataset():
    from photonfi import load_idx

    return load_idx(TEST_IMAGES, TEST_LABELS)


@pytest.fixture(scope="session")
def original_fixture():
    from photonfi import read_archive

    if not os.path.exists(ORIGINAL_ARCHIVE):
        pytest.skip("fixtures/original.slwa not present")
    return read_archive(ORIGINAL_ARCHIVE)


@pytest.fixture(scope="session")
def robust_fixture():
    from photonfi import read_archive

    if not os.path.exists(ROBUST_ARCHIVE):
        pytest.skip("fixtures/l2+n3.slwa not present")
    return read_archive(ROBUST_ARCHIVE)
