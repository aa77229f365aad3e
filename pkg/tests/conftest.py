import numpy as np
import pytest

from promptsteg.corpus import reference_corpus, synth_image
from promptsteg.keyed import StegoKey


@pytest.fixture(scope="session")
def corpus():
    """The 50-image 512x512 reference corpus (generated once per session)."""
    return reference_corpus()


@pytest.fixture(scope="session")
def small_images():
    return [synth_image(seed, 256) for seed in range(6)]


@pytest.fixture(scope="session")
def photo():
    return synth_image(11, 256)


@pytest.fixture
def key():
    return StegoKey(bytes(range(16)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from verdicts import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)
