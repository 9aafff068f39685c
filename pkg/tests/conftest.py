"""Test-harness configuration.

ROBUSTINF_TEST_BACKEND=python|compiled forces a kernel backend for the whole
session, so the pure-Python fallback can be exercised end to end:

    ROBUSTINF_TEST_BACKEND=python pytest

This knob is test infrastructure only; the library itself selects the
backend at import and exposes set_backend() for programmatic control.
"""

import os

from robustinf import set_backend


def pytest_sessionstart(session):
    backend = os.environ.get("ROBUSTINF_TEST_BACKEND")
    if backend:
        set_backend(backend)
