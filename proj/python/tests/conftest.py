import os
from pathlib import Path

import pytest


@pytest.fixture
def data_dir() -> Path:
    default = Path(__file__).resolve().parents[2] / "tests" / "data"
    return Path(os.environ.get("VIBIMG_TEST_DATA_DIR", default))
