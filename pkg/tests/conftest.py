import math
import warnings
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from rfis.core import build_scale_field, build_system, uniform_scale
from rfis.grid import DomainLayout, build_grid, gamma_opposite_quadrant, normalize, quadrant_domains

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

# heights at X, Y = 0, 50, ..., 200; row = Y, column = X
HEIGHTS = [
    [35, 42, 76, 61, 44],
    [43, 28, 88, 83, 33],
    [78, 84, 58, 33, 25],
    [68, 33, 73, 86, 77],
    [47, 29, 88, 43, 54],
]
AXIS = [0, 50, 100, 150, 200]
SINE = "sin(10*x^2 + 10*y^2)"


def heights_raw():
    return build_grid(AXIS, AXIS, np.array(HEIGHTS, float).T)


def heights_grid():
    return normalize(heights_raw())[0]


def quadrant_layout(g):
    doms = quadrant_domains(g.n, g.m)
    return DomainLayout(doms, gamma_opposite_quadrant(g, doms))


@lru_cache(maxsize=None)
def make_system(scale="0.7", base="bilinear", density=64, residual="coons"):
    g = heights_grid()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sf = build_scale_field(g, uniform_scale(g, scale), density=density)
        return build_system(g, quadrant_layout(g), sf, base, residual=residual)


def sine_system(base="lagrange"):
    return make_system(SINE, base, 257)


def charpoly_root(A):
    """Largest real root of det(lambda I - A), coefficients built by hand."""
    A = np.asarray(A, float)
    if A.shape == (2, 2):
        tr, det = A[0, 0] + A[1, 1], A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        return (tr + math.sqrt(max(tr * tr - 4 * det, 0.0))) / 2
    tr = np.trace(A)
    minors = sum(A[i, i] * A[j, j] - A[i, j] * A[j, i] for i in range(3) for j in range(i + 1, 3))
    det = (A[0, 0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
           - A[0, 1] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
           + A[0, 2] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0]))
    roots = np.roots([1.0, -tr, minors, -det])
    real = roots[np.abs(roots.imag) <= 1e-7 * max(1.0, np.abs(roots).max())].real
    # refine the Perron root with Newton steps on the cubic
    r = float(real.max())
    for _ in range(5):
        p = ((r - tr) * r + minors) * r - det
        dp = (3 * r - 2 * tr) * r + minors
        if dp != 0:
            r -= p / dp
    return r


@pytest.fixture
def grid():
    return heights_grid()


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


# -- acceptance reporting ----------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record_acceptance(k: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {k:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE[k] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
