"""
Pytest configuration for ulil-lab.

Puts src/ on sys.path so tests import the modules directly, and keeps a
developer's ULIL_LAB_OUTPUT_DIR from leaking into test runs.
"""

import os
import sys

import pytest

ROOT_DIR = os.path.dirname(__file__)
SRC_DIR = os.path.join(ROOT_DIR, "src")

if SRC_DIR not in sys.path:
    sys.path.insert(0, SRC_DIR)


@pytest.fixture(autouse=True)
def _isolated_output_dir(monkeypatch):
    monkeypatch.delenv("ULIL_LAB_OUTPUT_DIR", raising=False)
