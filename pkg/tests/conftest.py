import numpy as np
import pytest


@pytest.fixture(autouse=True)
def _strict_floats():
    # surface accidental overflow/invalid in library code instead of burying it
    with np.errstate(over="warn", invalid="warn"):
        yield
