"""Assembly of the recurrent IFS from gridded data.

Each region ``E_ij`` gets an affine domain map ``L_ij`` from its domain onto
the region and a vertical map built from a Lipschitz base interpolant g0::

    F_ij(x, y, z) = s_ij(L_ij(x, y)) * (z - h_k(x, y)) + g0(L_ij(x, y))

where ``h_k`` agrees with g0 on the boundary of domain k, which makes the
edge-matching conditions hold by construction.  By default ``h_k`` is the
Coons patch of g0's boundary values.  With ``residual="g0"`` (``h_k = g0``)
g0 itself is the fixed point, so the surface is never fractal; that mode is
kept for comparison only.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import expr as ex
from .errors import DeadRegion, NotContractive, NotIrreducible, OutOfDomain, ValidationError
from .grid import (
    DomainLayout,
    GridData,
    Region,
    layout_warnings,
    tau,
    tau_inverse,
    validate_layout,
)

INCREASING = "increasing"
DECREASING = "decreasing"


# -- axis and region maps --------------------------------------------------

@dataclass(frozen=True)
class AxisMap:
    source: tuple[float, float]
    target: tuple[float, float]
    orientation: str = INCREASING

    @property
    def scale(self) -> float:
        sign = 1.0 if self.orientation == INCREASING else -1.0
        return sign * (self.target[1] - self.target[0]) / (self.source[1] - self.source[0])

    @property
    def offset(self) -> float:
        t = self.target[0] if self.orientation == INCREASING else self.target[1]
        return t - self.scale * self.source[0]

    def __call__(self, x):
        # convex-combination form: source endpoints land on target endpoints exactly
        s0, s1 = self.source
        t0, t1 = self.target
        u = (np.asarray(x, dtype=float) - s0) / (s1 - s0)
        if self.orientation == DECREASING:
            u = 1.0 - u
        return (1.0 - u) * t0 + u * t1

    def inverse(self, x):
        s0, s1 = self.source
        t0, t1 = self.target
        u = (np.asarray(x, dtype=float) - t0) / (t1 - t0)
        if self.orientation == DECREASING:
            u = 1.0 - u
        return (1.0 - u) * s0 + u * s1


def build_axis_map(source, target, orientation: str = INCREASING) -> AxisMap:
    if orientation not in (INCREASING, DECREASING):
        raise ValueError(f"orientation must be {INCREASING!r} or {DECREASING!r}")
    s0, s1 = map(float, source)
    t0, t1 = map(float, target)
    if not (s1 > s0 and t1 > t0):
        raise ValueError("intervals must have positive length")
    if t1 - t0 >= s1 - s0:
        raise NotContractive(f"[{s0}, {s1}] -> [{t0}, {t1}] does not contract")
    return AxisMap((s0, s1), (t0, t1), orientation)


@dataclass(frozen=True)
class RegionMap:
    region: Region
    k: int
    lx: AxisMap
    ly: AxisMap

    def __call__(self, x, y):
        return self.lx(x), self.ly(y)

    def inverse(self, x, y):
        return self.lx.inverse(x), self.ly.inverse(y)

    @property
    def contraction(self) -> float:
        return max(abs(self.lx.scale), abs(self.ly.scale))


# -- base surfaces ---------------------------------------------------------

class BaseSurface:
    """Lipschitz interpolant g0 of the data."""

    kind = ""

    def __init__(self, grid: GridData):
        self.grid = grid

    def __call__(self, x, y):
        raise NotImplementedError

    def lipschitz(self, density: int = 129) -> float:
        x0, x1, y0, y1 = self.grid.extent
        X, Y = ex.sample_region((x0, x1, y0, y1), density)
        return ex.lattice_lipschitz(self(X, Y), X[1, 0] - X[0, 0], Y[0, 1] - Y[0, 0])


class BilinearSurface(BaseSurface):
    kind = "bilinear"

    def __call__(self, x, y):
        g = self.grid
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        i = np.clip(np.searchsorted(g.xs, x, side="right") - 1, 0, g.n - 1)
        j = np.clip(np.searchsorted(g.ys, y, side="right") - 1, 0, g.m - 1)
        tx = (x - g.xs[i]) / (g.xs[i + 1] - g.xs[i])
        ty = (y - g.ys[j]) / (g.ys[j + 1] - g.ys[j])
        z = g.z
        out = ((1 - tx) * (1 - ty) * z[i, j] + tx * (1 - ty) * z[i + 1, j]
               + (1 - tx) * ty * z[i, j + 1] + tx * ty * z[i + 1, j + 1])
        return float(out) if out.ndim == 0 else out


def lagrange_basis(nodes: np.ndarray, x) -> np.ndarray:
    """Matrix ``B[..., i] = prod_{k != i} (x - x_k) / (x_i - x_k)``."""
    x = np.asarray(x, dtype=float)[..., None]
    out = np.ones(x.shape[:-1] + (len(nodes),))
    for i, xi in enumerate(nodes):
        for k, xk in enumerate(nodes):
            if k != i:
                out[..., i] *= (x[..., 0] - xk) / (xi - xk)
    return out


class LagrangeSurface(BaseSurface):
    """Tensor-product Lagrange polynomial through every data point."""

    kind = "lagrange"

    def __init__(self, grid: GridData):
        super().__init__(grid)
        if max(grid.n, grid.m) > 8:
            warnings.warn("tensor Lagrange interpolation is ill-conditioned for n, m > 8",
                          stacklevel=2)

    def __call__(self, x, y):
        g = self.grid
        bx = lagrange_basis(g.xs, x)
        by = lagrange_basis(g.ys, y)
        out = np.einsum("...i,ij,...j->...", bx, g.z, by)
        return float(out) if np.ndim(out) == 0 else out

    def on_lattice(self, xs, ys) -> np.ndarray:
        """Values on the tensor lattice ``xs x ys`` (shape ``(len(xs), len(ys))``)."""
        return lagrange_basis(self.grid.xs, xs) @ self.grid.z @ lagrange_basis(self.grid.ys, ys).T


BASE_KINDS = {"bilinear": BilinearSurface, "lagrange": LagrangeSurface}


def make_base(kind: str, grid: GridData) -> BaseSurface:
    try:
        return BASE_KINDS[kind](grid)
    except KeyError:
        raise ValidationError(f"unknown base surface {kind!r}") from None


def coons(left, right, bottom, top, u, v):
    """Bilinearly blended patch from four boundary curves.

    ``left``/``right`` are sampled along v, ``bottom``/``top`` along u; the
    corners are taken from ``bottom`` and ``top``.  Broadcasts like
    ``u[:, None]`` against ``v[None, :]`` when given 1-D lattices.
    """
    c00, c10 = bottom[..., :1], bottom[..., -1:]
    c01, c11 = top[..., :1], top[..., -1:]
    U, V = u[:, None], v[None, :]
    return ((1 - U) * left[None, :] + U * right[None, :]
            + (1 - V) * bottom[:, None] + V * top[:, None]
            - ((1 - U) * (1 - V) * c00 + U * (1 - V) * c10
               + (1 - U) * V * c01 + U * V * c11))


RESIDUAL_KINDS = ("coons", "g0")


# -- scale field -----------------------------------------------------------

@dataclass(frozen=True)
class ScaleField:
    exprs: Mapping[Region, ex.Expr]
    bounds: Mapping[Region, tuple[float, float]]
    density: int = 64
    pad: float = 0.0

    @property
    def cap(self) -> float:
        return max(hi for _, hi in self.bounds.values())

    def vanishing_regions(self) -> list[Region]:
        return sorted(r for r, (lo, _) in self.bounds.items() if lo == 0.0)

    def constant_value(self) -> float | None:
        """Common value when every factor is the same constant, else None."""
        vals = set()
        for e in self.exprs.values():
            if not ex.is_constant(e):
                return None
            vals.add(ex.evaluate(e, 0.0, 0.0))
        return vals.pop() if len(vals) == 1 else None


def build_scale_field(grid: GridData, exprs: Mapping[Region, ex.Expr | str],
                      density: int = 64, pad: float = 0.0) -> ScaleField:
    parsed = {}
    bounds = {}
    for r in grid.regions():
        if r not in exprs:
            raise ValidationError(f"no scaling factor for region {r}")
        e = exprs[r]
        e = ex.parse(e) if isinstance(e, str) else e
        parsed[r] = e
        bounds[r] = ex.certify_bounds(e, grid.region_rect(*r), density, pad, region=r)
    field_ = ScaleField(parsed, bounds, density, pad)
    vanishing = field_.vanishing_regions()
    if vanishing:
        warnings.warn(f"scaling factor vanishes somewhere on regions {vanishing}; "
                      "lower dimension bound may be vacuous", stacklevel=2)
    return field_


def uniform_scale(grid: GridData, text: str) -> dict[Region, str]:
    return {r: text for r in grid.regions()}


# -- matrices --------------------------------------------------------------

def stochastic_matrix(layout: DomainLayout, n: int, m: int) -> np.ndarray:
    """``p_st = 1/a_s`` when region s lies inside the domain feeding map t."""
    N = n * m
    support = np.zeros((N, N), dtype=bool)
    for t in range(1, N + 1):
        d = layout.domain_of(*tau_inverse(t, n))
        for s in range(1, N + 1):
            if d.contains_region(*tau_inverse(s, n)):
                support[s - 1, t - 1] = True
    counts = support.sum(axis=1)
    dead = [tau_inverse(s + 1, n) for s in np.flatnonzero(counts == 0)]
    if dead:
        raise DeadRegion(f"regions {dead} lie in no referenced domain", dead)
    return support / counts[:, None]


def row_sums_exact(M: np.ndarray) -> bool:
    """Every row holds ``a_s`` copies of ``1/a_s`` and nothing else.

    That makes each row sum to 1 in rational arithmetic; the float sum of
    ``a_s`` copies of ``1/a_s`` can miss 1 by an ulp.
    """
    for row in np.asarray(M, dtype=float):
        nz = row[row != 0]
        if nz.size == 0 or not np.all(nz == 1.0 / nz.size):
            return False
    return True


def connection_matrix(M: np.ndarray) -> np.ndarray:
    return (np.asarray(M).T > 0).astype(np.int64)


def strong_components(C: np.ndarray) -> list[list[int]]:
    """Strongly connected components as sorted lists of 1-based indices."""
    ncomp, labels = connected_components(csr_matrix(np.asarray(C) != 0), directed=True,
                                         connection="strong")
    comps = [sorted(int(i) + 1 for i in np.flatnonzero(labels == c)) for c in range(ncomp)]
    return sorted(comps)


def is_irreducible(C: np.ndarray) -> bool:
    return len(strong_components(C)) == 1


# -- the system ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RifsSystem:
    grid: GridData
    layout: DomainLayout
    scale: ScaleField
    base: BaseSurface
    maps: Mapping[Region, RegionMap]
    M: np.ndarray
    C: np.ndarray
    irreducible: bool
    forced: bool = False
    q_offsets: Mapping[Region, float] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()
    residual: str = "coons"

    @property
    def N(self) -> int:
        return self.grid.num_regions

    def s_at(self, region: Region, x, y):
        return ex.evaluate(self.scale.exprs[region], x, y)

    def domain_rect(self, k: int) -> tuple[float, float, float, float]:
        d = self.layout.domain(k)
        g = self.grid
        return (g.xs[d.sx], g.xs[d.ex], g.ys[d.sy], g.ys[d.ey])

    def h(self, k: int, x, y):
        """Reference surface on domain k; equals g0 on the domain boundary."""
        if self.residual == "g0":
            return self.base(x, y)
        x0, x1, y0, y1 = self.domain_rect(k)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        u = (x - x0) / (x1 - x0)
        v = (y - y0) / (y1 - y0)
        g0 = self.base
        c00, c10, c01, c11 = g0(x0, y0), g0(x1, y0), g0(x0, y1), g0(x1, y1)
        out = ((1 - u) * g0(x0, y) + u * g0(x1, y) + (1 - v) * g0(x, y0) + v * g0(x, y1)
               - ((1 - u) * (1 - v) * c00 + u * (1 - v) * c10 + (1 - u) * v * c01 + u * v * c11))
        return float(out) if np.ndim(out) == 0 else out

    def eval_F(self, i: int, j: int, x, y, z, check: bool = True):
        rm = self.maps[(i, j)]
        if check:
            d = self.layout.domain(rm.k)
            g = self.grid
            tol = 1e-12 * max(1.0, g.xs[-1] - g.xs[0], g.ys[-1] - g.ys[0])
            xa, ya = np.asarray(x), np.asarray(y)
            if (np.any(xa < g.xs[d.sx] - tol) or np.any(xa > g.xs[d.ex] + tol)
                    or np.any(ya < g.ys[d.sy] - tol) or np.any(ya > g.ys[d.ey] + tol)):
                raise OutOfDomain(f"point outside domain {rm.k} of region {(i, j)}")
        lx, ly = rm(x, y)
        out = (self.s_at((i, j), lx, ly) * (np.asarray(z) - self.h(rm.k, x, y))
               + self.base(lx, ly) + self.q_offsets.get((i, j), 0.0))
        return float(out) if np.ndim(out) == 0 else out

    def W(self, i: int, j: int, x, y, z):
        lx, ly = self.maps[(i, j)](x, y)
        return lx, ly, self.eval_F(i, j, x, y, z, check=False)

    def Q(self, i: int, j: int, x, y):
        """The Lipschitz part of F_ij, recovered for diagnostics."""
        rm = self.maps[(i, j)]
        lx, ly = rm(x, y)
        return (self.base(lx, ly) - self.s_at((i, j), lx, ly) * self.h(rm.k, x, y)
                + self.q_offsets.get((i, j), 0.0))

    def fingerprint(self) -> str:
        g = self.grid
        payload = {
            "xs": [repr(float(v)) for v in g.xs],
            "ys": [repr(float(v)) for v in g.ys],
            "z": [[repr(float(v)) for v in row] for row in g.z],
            "domains": [[d.sx, d.ex, d.sy, d.ey] for d in self.layout.domains],
            "gamma": [self.layout.gamma[r] for r in g.regions()],
            "scale": [ex.to_string(self.scale.exprs[r]) for r in g.regions()],
            "base": self.base.kind,
            "orient": [[self.maps[r].lx.orientation, self.maps[r].ly.orientation]
                       for r in g.regions()],
            "q": [repr(float(self.q_offsets.get(r, 0.0))) for r in g.regions()],
            "residual": self.residual,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def build_system(grid: GridData, layout: DomainLayout, scale: ScaleField,
                 base: str | BaseSurface = "bilinear",
                 orientations: Mapping[Region, tuple[str, str]] | None = None,
                 force: bool = False,
                 q_offsets: Mapping[Region, float] | None = None,
                 residual: str = "coons") -> RifsSystem:
    if residual not in RESIDUAL_KINDS:
        raise ValidationError(f"residual must be one of {RESIDUAL_KINDS}")
    problems = validate_layout(grid, layout)
    if problems:
        raise ValidationError("invalid layout: " + "; ".join(problems))
    orientations = orientations or {}
    base = make_base(base, grid) if isinstance(base, str) else base
    maps = {}
    for i, j in grid.regions():
        k = layout.gamma[(i, j)]
        d = layout.domain(k)
        ox, oy = orientations.get((i, j), (INCREASING, INCREASING))
        lx = build_axis_map((grid.xs[d.sx], grid.xs[d.ex]), (grid.xs[i - 1], grid.xs[i]), ox)
        ly = build_axis_map((grid.ys[d.sy], grid.ys[d.ey]), (grid.ys[j - 1], grid.ys[j]), oy)
        maps[(i, j)] = RegionMap((i, j), k, lx, ly)
    M = stochastic_matrix(layout, grid.n, grid.m)
    C = connection_matrix(M)
    comps = strong_components(C)
    irreducible = len(comps) == 1
    notes = list(layout_warnings(layout))
    if not irreducible:
        pretty = [[tau_inverse(t, grid.n) for t in c] for c in comps]
        if not force:
            raise NotIrreducible(f"connection matrix is reducible; components {pretty}", pretty)
        notes.append("connection matrix reducible (forced); dimension bounds disabled")
    vanishing = scale.vanishing_regions()
    if vanishing:
        notes.append(f"scaling factor vanishes on regions {vanishing}")
    return RifsSystem(grid, layout, scale, base, maps, M, C, irreducible,
                      forced=not irreducible, q_offsets=dict(q_offsets or {}),
                      warnings=tuple(notes), residual=residual)


# -- checks ----------------------------------------------------------------

@dataclass
class MatchingReport:
    max_residual: float
    worst_region: Region | None
    samples_per_edge: int
    tol: float
    per_region: dict

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    def to_dict(self) -> dict:
        return {
            "max_residual": self.max_residual,
            "worst_region": list(self.worst_region) if self.worst_region else None,
            "samples_per_edge": self.samples_per_edge,
            "tol": self.tol,
            "passed": self.passed,
        }


def verify_matching(system: RifsSystem, samples_per_edge: int = 33,
                    tol: float = 1e-9) -> MatchingReport:
    """Check the edge conditions with g = g0 on every domain edge."""
    g = system.grid
    g0 = system.base
    worst, worst_r = 0.0, None
    per = {}
    for r, rm in system.maps.items():
        d = system.layout.domain(rm.k)
        ys = np.linspace(g.ys[d.sy], g.ys[d.ey], samples_per_edge)
        xs = np.linspace(g.xs[d.sx], g.xs[d.ex], samples_per_edge)
        pts = [(np.full_like(ys, g.xs[a]), ys) for a in (d.sx, d.ex)]
        pts += [(xs, np.full_like(xs, g.ys[b])) for b in (d.sy, d.ey)]
        res = 0.0
        for px, py in pts:
            lhs = system.eval_F(*r, px, py, g0(px, py), check=False)
            rhs = g0(*rm(px, py))
            res = max(res, float(np.max(np.abs(lhs - rhs))))
        per[r] = res
        if worst_r is None or res > worst:
            worst, worst_r = res, r
    return MatchingReport(worst, worst_r, samples_per_edge, tol, per)


def corner_mapping_residual(system: RifsSystem, tol: float = 1e-12) -> float:
    """Max deviation of W_ij(corner data point) from a corner data point.

    Returns ``inf`` if some domain corner is not carried onto a grid node.
    """
    g = system.grid
    worst = 0.0
    for r, rm in system.maps.items():
        d = system.layout.domain(rm.k)
        for a, b in d.corners():
            lx, ly, fz = system.W(*r, g.xs[a], g.ys[b], g.z[a, b])
            ia = int(np.argmin(np.abs(g.xs - lx)))
            jb = int(np.argmin(np.abs(g.ys - ly)))
            if abs(g.xs[ia] - lx) > tol or abs(g.ys[jb] - ly) > tol:
                return math.inf
            if not (ia in (r[0] - 1, r[0]) and jb in (r[1] - 1, r[1])):
                return math.inf
            worst = max(worst, abs(fz - g.z[ia, jb]))
    return worst


def _collinear(u: np.ndarray, v: np.ndarray, tol: float) -> bool:
    if len(u) < 3:
        return True
    du, dv = u[1] - u[0], v[1] - v[0]
    cross = du * (v[2:] - v[0]) - (u[2:] - u[0]) * dv
    return bool(np.all(np.abs(cross) <= tol))


def check_collinearity_hypothesis(grid: GridData, layout: DomainLayout,
                                  tol: float = 1e-9) -> tuple[bool, int | None]:
    """True (with a witness domain) when some domain's data is not
    x-collinear or not y-collinear."""
    for k, d in enumerate(layout.domains, start=1):
        ys = grid.ys[d.sy:d.ey + 1]
        xs = grid.xs[d.sx:d.ex + 1]
        x_col = all(_collinear(ys, grid.z[a, d.sy:d.ey + 1], tol) for a in range(d.sx, d.ex + 1))
        y_col = all(_collinear(xs, grid.z[d.sx:d.ex + 1, b], tol) for b in range(d.sy, d.ey + 1))
        if not x_col or not y_col:
            return True, k
    return False, None


def regions_in_tau_order(grid: GridData) -> list[Region]:
    return [tau_inverse(t, grid.n) for t in range(1, grid.num_regions + 1)]


def linear_index(grid: GridData, region: Region) -> int:
    return tau(region[0], region[1], grid.n, grid.m)


def orientation_table(system: RifsSystem) -> dict[Region, tuple[str, str]]:
    return {r: (rm.lx.orientation, rm.ly.orientation) for r, rm in system.maps.items()}

