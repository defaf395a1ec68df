import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from jumpbvp.lattice import gaussian_packet, make_grid
from jumpbvp.spectral import DispersionRelation, hardy_project

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("default")


def band_packet(grid, band, center=1.0, width=1.0, k0=0.0, spinor=(1.0,)):
    f = hardy_project(gaussian_packet(grid, center, width, k0, spinor), band)
    return f * (1.0 / f.norm())


@pytest.fixture
def small_grid():
    return make_grid(8.0, 64)


@pytest.fixture
def scan_grid():
    # coarse grid shared with the dense-oracle calibration (Nyquist pi/dz ~ 12.6)
    return make_grid(8.0, 64)


@pytest.fixture
def wide_grid():
    return make_grid(32.0, 4096)


@pytest.fixture
def unit_mass():
    return DispersionRelation([1.0])


@pytest.fixture
def doublet():
    return DispersionRelation([1.0, 1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one ``PASS``/``FAIL`` line per acceptance criterion."""
    def report(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append((n, line))
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
