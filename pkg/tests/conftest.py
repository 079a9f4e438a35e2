import sys

import numpy as np
import pytest

from p2np.mri import ForwardModel, make_radial_trajectory, synth_sensitivity_maps


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def radial16():
    """16x16 grid, 4 coils, 21 golden-angle spokes of 32 points."""
    return ForwardModel(make_radial_trajectory(21, 32), synth_sensitivity_maps(4, 16, 16))


@pytest.fixture(scope="session")
def radial8():
    return ForwardModel(make_radial_trajectory(5, 12), synth_sensitivity_maps(2, 8, 8))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        passed, title, detail = results[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number:2d}: {title} -- {detail}")
