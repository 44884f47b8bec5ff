import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synth import build_synthetic_dataset  # noqa: E402


@pytest.fixture(scope="session")
def synthetic_manifest(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("synthetic")
    return build_synthetic_dataset(root)


@pytest.fixture(scope="session")
def small_manifest(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("small")
    return build_synthetic_dataset(root, count=6, seed=11)
