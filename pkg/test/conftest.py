"""
Pytest configuration and fixtures for zohfl tests.
"""

import sys
import os
import shutil
import tempfile
from pathlib import Path

# Add the project root to the Python path
test_dir = Path(__file__).parent
project_root = test_dir.parent

if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

import pytest


@pytest.fixture
def temp_out_dir():
    """Provide a temporary output directory for run artifacts."""
    path = tempfile.mkdtemp(prefix="zohfl-")
    yield path
    shutil.rmtree(path, ignore_errors=True)


@pytest.fixture
def clean_env(monkeypatch):
    """Remove the output directory override from the environment."""
    monkeypatch.delenv("ZOHFL_OUT_DIR", raising=False)
    return monkeypatch
