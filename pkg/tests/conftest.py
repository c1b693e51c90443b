from __future__ import annotations

from pathlib import Path

import pytest

from screenfair import load

ROOT = Path(__file__).resolve().parents[1]
CANONICAL = ROOT / "scenarios" / "canonical.txt"


@pytest.fixture
def canonical():
    return load(CANONICAL)


@pytest.fixture
def canonical_path():
    return CANONICAL
