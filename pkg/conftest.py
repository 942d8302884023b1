"""Shared fixtures for the test modules at the repository root."""

import os
import sys

import pytest

# Add the src directory to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "src"))

from depauw_lab.models import DepauwField  # noqa: E402


@pytest.fixture
def field() -> DepauwField:
    """The default field: T = 1, twelve stages."""
    return DepauwField()


@pytest.fixture
def shallow_field() -> DepauwField:
    """A field with few stages, for tests that walk every stage."""
    return DepauwField(max_depth=5)
