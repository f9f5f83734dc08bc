"""
Pytest configuration and shared fixtures
"""

import sys
from pathlib import Path

import pytest

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.stationary_lab.core_model import reference_model  # noqa: E402


@pytest.fixture(autouse=True)
def setup_test_environment(monkeypatch, tmp_path):
    """Point outputs at a temporary directory and use two workers"""
    monkeypatch.setenv("STATIONARY_LAB_OUTPUT_DIR", str(tmp_path / "runs"))
    monkeypatch.setenv("STATIONARY_LAB_WORKERS", "2")
    monkeypatch.setenv("STATIONARY_LAB_LOG_LEVEL", "WARNING")


@pytest.fixture
def ref_cfg():
    """The reference SL_2(Z) model"""
    return reference_model(seed=0)


@pytest.fixture
def configs_dir():
    return project_root / "configs"
