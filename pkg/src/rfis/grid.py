"""Gridded interpolation data, region/domain bookkeeping and normalization.

Region and domain indices are 1-based on the public surface: region
``(i, j)`` is the cell ``[x_{i-1}, x_i] x [y_{j-1}, y_j]`` and domain ``k``
runs over ``1..l``.  Domain corners are grid-point indices, 0-based, so a
domain spans ``[xs[sx], xs[ex]] x [ys[sy], ys[ey]]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    IndexOutOfRange,
    NonMonotonicAxis,
    NonSquareDomain,
    NonUniformDomains,
    NonUniformSpacing,
    ShapeMismatch,
)

Region = tuple[int, int]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GridData:
    """Heights ``z[i, j]`` over ``xs[i]``, ``ys[j]``.

    ``normalized`` marks grids produced by :func:`normalize`; their nodes are
    exactly ``i / n`` and their spacing is the rational ``1/n``.
    """

    xs: np.ndarray
    ys: np.ndarray
    z: np.ndarray
    normalized: bool = False

    @property
    def n(self) -> int:
        return len(self.xs) - 1

    @property
    def m(self) -> int:
        return len(self.ys) - 1

    @property
    def num_regions(self) -> int:
        return self.n * self.m

    @property
    def spacing(self) -> Fraction | None:
        return Fraction(1, self.n) if self.normalized else None

    @property
    def extent(self) -> tuple[float, float, float, float]:
        return (self.xs[0], self.xs[-1], self.ys[0], self.ys[-1])

    def regions(self):
        """All regions in ``tau`` order."""
        for j in range(1, self.m + 1):
            for i in range(1, self.n + 1):
                yield (i, j)

    def region_rect(self, i: int, j: int) -> tuple[float, float, float, float]:
        return (self.xs[i - 1], self.xs[i], self.ys[j - 1], self.ys[j])

    def region_of(self, x: float, y: float) -> Region:
        """Region containing ``(x, y)``.

        Cells are half-open ``[x_{i-1}, x_i)`` except the last, which is
        closed, so a point on a shared edge goes to the larger index.
        """
        x0, x1, y0, y1 = self.extent
        if not (x0 <= x <= x1 and y0 <= y <= y1):
            raise IndexOutOfRange(f"point ({x}, {y}) outside the grid")
        i = min(int(np.searchsorted(self.xs, x, side="right")), self.n)
        j = min(int(np.searchsorted(self.ys, y, side="right")), self.m)
        return (i, j)

    def __eq__(self, other):
        if not isinstance(other, GridData):
            return NotImplemented
        return (
            np.array_equal(self.xs, other.xs)
            and np.array_equal(self.ys, other.ys)
            and np.array_equal(self.z, other.z)
        )

    __hash__ = None


def build_grid(xs: Sequence[float], ys: Sequence[float], z) -> GridData:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    z = np.asarray(z, dtype=float)
    if xs.ndim != 1 or ys.ndim != 1:
        raise ShapeMismatch("xs and ys must be one-dimensional")
    if len(xs) < 2 or len(ys) < 2:
        raise ShapeMismatch("need at least two nodes per axis (n >= 1, m >= 1)")
    for name, axis in (("xs", xs), ("ys", ys)):
        if not np.all(np.isfinite(axis)):
            raise ShapeMismatch(f"{name} contains non-finite values")
        if np.any(np.diff(axis) <= 0):
            raise NonMonotonicAxis(f"{name} is not strictly increasing")
    if z.shape != (len(xs), len(ys)):
        raise ShapeMismatch(f"z has shape {z.shape}, expected {(len(xs), len(ys))}")
    if not np.all(np.isfinite(z)):
        raise ShapeMismatch("z contains non-finite values")
    return GridData(_frozen(xs), _frozen(ys), _frozen(z))


@dataclass(frozen=True)
class AffinePlanarMap:
    """``(x, y) -> (sx*x + bx, sy*y + by)``."""

    sx: float = 1.0
    bx: float = 0.0
    sy: float = 1.0
    by: float = 0.0

    @property
    def is_identity(self) -> bool:
        return (self.sx, self.bx, self.sy, self.by) == (1.0, 0.0, 1.0, 0.0)

    def forward(self, x, y):
        return self.sx * np.asarray(x) + self.bx, self.sy * np.asarray(y) + self.by

    def inverse(self, x, y):
        return (np.asarray(x) - self.bx) / self.sx, (np.asarray(y) - self.by) / self.sy

    def to_dict(self) -> dict:
        return {"sx": self.sx, "bx": self.bx, "sy": self.sy, "by": self.by}


def _uniform(axis: np.ndarray, rtol: float = 1e-12) -> bool:
    gaps = np.diff(axis)
    return bool(np.all(np.abs(gaps - gaps[0]) <= rtol * (axis[-1] - axis[0])))


def normalize(grid: GridData) -> tuple[GridData, AffinePlanarMap]:
    """Map a uniformly spaced grid onto ``[0, 1] x [0, m/n]``.

    Box-counting dimension is invariant under the bi-affine change of
    variables, so dimension work happens on the returned grid.
    """
    if not (_uniform(grid.xs) and _uniform(grid.ys)):
        raise NonUniformSpacing("grid spacing is not uniform on both axes")
    n, m = grid.n, grid.m
    xs = np.arange(n + 1) / n
    ys = np.arange(m + 1) / n
    if grid.normalized:
        return grid, AffinePlanarMap()
    x0, x1, y0, y1 = grid.extent
    sx = 1.0 / (x1 - x0)
    sy = (m / n) / (y1 - y0)
    pmap = AffinePlanarMap(sx, -x0 * sx, sy, -y0 * sy)
    if np.array_equal(xs, grid.xs) and np.array_equal(ys, grid.ys):
        pmap = AffinePlanarMap()
    return GridData(_frozen(xs), _frozen(ys), grid.z, normalized=True), pmap


def tau(i: int, j: int, n: int, m: int | None = None) -> int:
    if not 1 <= i <= n or j < 1 or (m is not None and j > m):
        raise IndexOutOfRange(f"region ({i}, {j}) out of range")
    return i + (j - 1) * n


def tau_inverse(t: int, n: int, m: int | None = None) -> Region:
    if t < 1 or (m is not None and t > n * m):
        raise IndexOutOfRange(f"linear index {t} out of range")
    j = (t - 1) // n + 1
    return (t - (j - 1) * n, j)


# -- domains ---------------------------------------------------------------

@dataclass(frozen=True)
class DomainSpec:
    sx: int
    ex: int
    sy: int
    ey: int

    @property
    def width(self) -> int:
        return self.ex - self.sx

    @property
    def height(self) -> int:
        return self.ey - self.sy

    def contains_region(self, i: int, j: int) -> bool:
        # exact index comparison, never floating
        return self.sx < i <= self.ex and self.sy < j <= self.ey

    def corners(self):
        return [(a, b) for b in (self.sy, self.ey) for a in (self.sx, self.ex)]


@dataclass(frozen=True)
class DomainLayout:
    domains: tuple[DomainSpec, ...]
    gamma: Mapping[Region, int] = field(hash=False)

    @property
    def l(self) -> int:
        return len(self.domains)

    def domain(self, k: int) -> DomainSpec:
        return self.domains[k - 1]

    def domain_of(self, i: int, j: int) -> DomainSpec:
        return self.domains[self.gamma[(i, j)] - 1]


def validate_layout(grid: GridData, layout: DomainLayout) -> list[str]:
    """Return a list of problems; empty when the layout is usable."""
    out = []
    n, m = grid.n, grid.m
    if layout.l < 2:
        out.append(f"need at least 2 domains, got {layout.l}")
    for k, d in enumerate(layout.domains, start=1):
        if not (0 <= d.sx < d.ex <= n and 0 <= d.sy < d.ey <= m):
            out.append(f"domain {k} index rectangle out of range")
        if d.width < 2 or d.height < 2:
            out.append(f"domain {k} too small: needs >= 2 regions per axis")
    missing = [r for r in grid.regions() if r not in layout.gamma]
    if missing:
        out.append(f"gamma not total: missing {missing}")
    for r, k in layout.gamma.items():
        if not (1 <= r[0] <= n and 1 <= r[1] <= m):
            out.append(f"gamma has region {r} outside the grid")
        if not 1 <= k <= layout.l:
            out.append(f"gamma maps region {r} to unknown domain {k}")
    return out


def layout_warnings(layout: DomainLayout) -> list[str]:
    used = set(layout.gamma.values())
    return [f"domain {k} is never referenced by gamma"
            for k in range(1, layout.l + 1) if k not in used]


@dataclass(frozen=True)
class UniformityCertificate:
    a: int
    n: int

    @property
    def n_per_unit(self) -> Fraction:
        return Fraction(1, self.n)

    @property
    def regions_per_domain(self) -> int:
        return self.a * self.a


def certify_uniform(grid: GridData, layout: DomainLayout) -> UniformityCertificate:
    if not grid.normalized:
        normed, _ = normalize(grid)  # raises NonUniformSpacing
        if not np.array_equal(normed.xs, grid.xs) or not np.array_equal(normed.ys, grid.ys):
            raise NonUniformSpacing("grid is not in normalized form")
    sides = set()
    for k, d in enumerate(layout.domains, start=1):
        if d.width != d.height:
            raise NonSquareDomain(f"domain {k} spans {d.width}x{d.height} regions")
        sides.add(d.width)
    if len(sides) != 1:
        raise NonUniformDomains(f"domains have mixed sizes {sorted(sides)}")
    return UniformityCertificate(a=sides.pop(), n=grid.n)


# -- named layouts and gamma policies --------------------------------------

def tiled_domains(n: int, m: int, a: int) -> tuple[DomainSpec, ...]:
    """Non-overlapping a x a domains tiling the grid, row by row."""
    if n % a or m % a:
        raise ShapeMismatch(f"{n}x{m} regions cannot be tiled by {a}x{a} domains")
    return tuple(DomainSpec(bx * a, bx * a + a, by * a, by * a + a)
                 for by in range(m // a) for bx in range(n // a))


def quadrant_domains(n: int, m: int) -> tuple[DomainSpec, ...]:
    if n != m or n % 2:
        raise ShapeMismatch("quadrant layout needs an even, square region grid")
    return tiled_domains(n, m, n // 2)


def gamma_identity_block(grid: GridData, domains: Sequence[DomainSpec]) -> dict[Region, int]:
    """Each region feeds from the first domain that contains it."""
    gamma = {}
    for i, j in grid.regions():
        for k, d in enumerate(domains, start=1):
            if d.contains_region(i, j):
                gamma[(i, j)] = k
                break
    return gamma


def gamma_opposite_quadrant(grid: GridData, domains: Sequence[DomainSpec]) -> dict[Region, int]:
    """Quadrant layout: a region feeds from the quadrant opposite its own
    corner of the quadrant it sits in.

    A region in the lower-left part of any quadrant draws from the
    upper-right quadrant and so on.  Every quadrant then feeds regions in all
    four quadrants, which keeps the connection matrix irreducible.
    """
    if len(domains) != 4:
        raise ShapeMismatch("opposite-quadrant gamma needs the 4-domain quadrant layout")
    half = domains[0].width
    lookup = {(d.sx // half, d.sy // half): k for k, d in enumerate(domains, start=1)}
    if sorted(lookup) != [(0, 0), (0, 1), (1, 0), (1, 1)]:
        raise ShapeMismatch("domains do not form a 2x2 quadrant tiling")
    gamma = {}
    for i, j in grid.regions():
        px = 1 if 2 * ((i - 1) % half) >= half else 0
        py = 1 if 2 * ((j - 1) % half) >= half else 0
        gamma[(i, j)] = lookup[(1 - px, 1 - py)]
    return gamma


# -- CSV -------------------------------------------------------------------

def read_grid_csv(path: str | Path) -> GridData:
    """First row: blank cell then xs.  Each further row: y_j then z_0j..z_nj."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 3:
        raise ShapeMismatch(f"{path}: need a header row and at least two data rows")
    try:
        xs = [float(c) for c in rows[0][1:]]
        ys = [float(r[0]) for r in rows[1:]]
        body = [[float(c) for c in r[1:]] for r in rows[1:]]
    except ValueError as exc:
        raise ShapeMismatch(f"{path}: {exc}") from None
    if any(len(r) != len(xs) for r in body):
        raise ShapeMismatch(f"{path}: ragged rows")
    return build_grid(xs, ys, np.array(body).T)


def write_grid_csv(grid: GridData, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + [repr(float(x)) for x in grid.xs])
        for j, y in enumerate(grid.ys):
            w.writerow([repr(float(y))] + [repr(float(v)) for v in grid.z[:, j]])


def is_close_to_grid(value: float, axis: np.ndarray, tol: float = 1e-12) -> int | None:
    """Index of the node within ``tol`` of ``value``, if any."""
    k = int(np.argmin(np.abs(axis - value)))
    return k if math.isclose(axis[k], value, rel_tol=0.0, abs_tol=tol) else None
