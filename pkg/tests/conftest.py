from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dftma import build_model, parse_dft, validate  # noqa: E402


def model_of(text: str):
    return build_model(validate(parse_dft(text)))


@pytest.fixture
def make_model():
    return model_of
