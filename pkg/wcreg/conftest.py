import numpy as np
import pytest

from wcreg import conf


@pytest.fixture(autouse=True)
def _single_threaded():
    """Keep the suite deterministic and independent of the user config."""
    with conf.set_temp('threads', 1):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)
