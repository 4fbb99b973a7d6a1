import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from datasets import unit_tiling  # noqa: E402


@pytest.fixture
def tiling3():
    return unit_tiling(3)


@pytest.fixture
def tiling2():
    return unit_tiling(2)
