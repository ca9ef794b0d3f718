"""Shared fixtures for the test suite."""

import sys

import numpy as np
import pytest

from cyclicsignal.sim import Bounds, FlowProfile


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines after the usual tally."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None) if mod else None
    if lines:
        terminalreporter.section("acceptance verdicts")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def bounds():
    return Bounds()


@pytest.fixture
def zero_profile():
    return FlowProfile(np.zeros((4, 8)), bin_s=300)


def constant_rate_profile(total_vph: float, n_bins: int = 24, bin_s: int = 300):
    """Uniform split of a total flow across all 8 movements."""
    rates = np.full((n_bins, 8), total_vph / 8.0)
    return FlowProfile(rates, bin_s=bin_s)


@pytest.fixture
def uniform_profile():
    return constant_rate_profile(1600.0)
