import math

import numpy as np
import pytest

from kam_spectra import (
    KamOptions,
    SpectralGrid,
    SpectrumModel,
    Window,
    certify,
    laplacian,
    run_kam,
)
from kam_spectra import constants as K

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, passed: bool, detail: str) -> None:
    line = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def maryland_window():
    return Window(1, 40, interior_radius=20)


@pytest.fixture(scope="session")
def maryland_model(maryland_window):
    model, _ = certify(SpectrumModel.maryland(), maryland_window)
    return model


@pytest.fixture(scope="session")
def maryland_grid(maryland_model, maryland_window):
    return SpectralGrid(maryland_model, maryland_window)


@pytest.fixture(scope="session")
def maryland_V(maryland_grid):
    return laplacian(maryland_grid, alpha=2.0)


@pytest.fixture(scope="session")
def maryland_eps(maryland_model):
    eps_star = K.laplacian_eps_star(maryland_model.c, maryland_model.gamma, 1, 2.0)
    return min(eps_star, 1e-3)


@pytest.fixture(scope="session")
def maryland_run(maryland_model, maryland_V, maryland_eps):
    """The flagship run: coupling at the rigorous threshold, rigorous mode."""
    return run_kam(maryland_model, maryland_V, maryland_eps, KamOptions(mode="rigorous"))


@pytest.fixture(scope="session")
def maryland_run_long(maryland_model, maryland_V, maryland_eps):
    """Same run forced past convergence so the per-step decay can be observed."""
    return run_kam(maryland_model, maryland_V, maryland_eps, KamOptions(mode="rigorous", min_steps=5))


@pytest.fixture(scope="session")
def maryland_run_strong(maryland_model, maryland_V):
    """Coupling 0.01, well above the threshold, so empirical mode."""
    return run_kam(maryland_model, maryland_V, 0.01, KamOptions(mode="empirical"))


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


__all__ = ["record", "rel", "math"]
