import numpy as np
import pytest

from fmdlab import DomainGrid, ScalarField, make_domain

import _criteria


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criteria.RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance checklist")
    for num, desc, ok, detail in sorted(_criteria.RESULTS):
        status = "PASS" if ok else "FAIL"
        line = f"[criterion {num:02d}] {status} {desc}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


def random_field(grid: DomainGrid, seed: int, lo: float = 0.0, hi: float = 1.0) -> ScalarField:
    rng = np.random.default_rng(seed)
    vals = rng.uniform(lo, hi, size=(grid.nx, grid.ny))
    return ScalarField(grid, np.where(grid.mask, vals, 0.0))


def smooth_field(grid: DomainGrid, seed: int, n_modes: int = 4, amp: float = 1.0) -> ScalarField:
    """Random low-frequency trigonometric field, resolution independent."""
    rng = np.random.default_rng(seed)
    cx, cy = grid.centers()
    vals = np.zeros_like(cx)
    for _ in range(n_modes):
        kx, ky = rng.integers(1, 4, size=2)
        ph = rng.uniform(0, 2 * np.pi, size=2)
        c = rng.uniform(-1, 1)
        vals = vals + c * np.sin(kx * np.pi * cx + ph[0]) * np.sin(ky * np.pi * cy + ph[1])
    return ScalarField(grid, np.where(grid.mask, amp * vals, 0.0))


@pytest.fixture
def square16() -> DomainGrid:
    return make_domain("square", 16, 16, 1.0 / 16)


@pytest.fixture
def disk24() -> DomainGrid:
    return make_domain("disk", 24, 24, 1.0 / 24)
