import numpy as np
import pytest

from srtvit.synthetic import random_image
from srtvit.vit import ViTConfig
from srtvit.weights import make_toy_model

TOY = ViTConfig(img_h=64, img_w=64, patch_h=8, patch_w=8, dim=32, depth=2, heads=4)
SMALL = ViTConfig(img_h=24, img_w=24, patch_h=6, patch_w=6, dim=16, depth=2, heads=2)


@pytest.fixture(scope="session")
def toy_model():
    return make_toy_model(0, TOY)


@pytest.fixture(scope="session")
def small_model():
    return make_toy_model(1, SMALL)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_image():
    return random_image(7, TOY.img_h, TOY.img_w)


# Acceptance-criterion reporting: test_acceptance records one line per criterion.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
