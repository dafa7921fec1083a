"""Rendering the attractor.

Two independent routes: the fixed point of the operator

    (Tg)(x, y) = F_ij(L_ij^{-1}(x, y), g(L_ij^{-1}(x, y))),   (x, y) in E_ij

iterated on a raster whose step is ``1/(n a^r)``, and a recurrent chaos game
driven by the row-stochastic matrix.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .core import DECREASING, LagrangeSurface, RifsSystem, coons
from .errors import EmptyRect, NotConverged, NotUniform, RfisError
from .grid import Region, UniformityCertificate, certify_uniform

log = logging.getLogger(__name__)


@dataclass(eq=False)
class SurfaceSample:
    """Raster of f over the normalized E; ``values[ix, iy]`` sits at
    ``(ix, iy) / (n a^depth)``."""

    depth: int
    a: int
    n: int
    m: int
    values: np.ndarray
    iterations: int = 0
    final_delta: float = 0.0
    boundary_discrepancy: float = 0.0
    deltas: list = field(default_factory=list)
    system_hash: str = ""

    @property
    def cells_per_region(self) -> int:
        return self.a ** self.depth

    @property
    def steps_per_unit(self) -> int:
        return self.n * self.cells_per_region

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def xs(self) -> np.ndarray:
        return np.arange(self.values.shape[0]) / self.steps_per_unit

    @property
    def ys(self) -> np.ndarray:
        return np.arange(self.values.shape[1]) / self.steps_per_unit

    def region_block(self, i: int, j: int) -> np.ndarray:
        A = self.cells_per_region
        return self.values[(i - 1) * A:i * A + 1, (j - 1) * A:j * A + 1]

    def at_grid_nodes(self) -> np.ndarray:
        A = self.cells_per_region
        return self.values[::A, ::A]

    def lookup(self, x, y):
        """Bilinear interpolation between raster nodes."""
        h = self.steps_per_unit
        fx = np.asarray(x, dtype=float) * h
        fy = np.asarray(y, dtype=float) * h
        nx, ny = self.values.shape
        i = np.clip(np.floor(fx).astype(int), 0, nx - 2)
        j = np.clip(np.floor(fy).astype(int), 0, ny - 2)
        tx, ty = fx - i, fy - j
        v = self.values
        return ((1 - tx) * (1 - ty) * v[i, j] + tx * (1 - ty) * v[i + 1, j]
                + (1 - tx) * ty * v[i, j + 1] + tx * ty * v[i + 1, j + 1])


def base_raster(system: RifsSystem, depth: int, a: int) -> np.ndarray:
    g = system.grid
    h = g.n * a ** depth
    xs = np.arange(g.n * a ** depth + 1) / h
    ys = np.arange(g.m * a ** depth + 1) / h
    if isinstance(system.base, LagrangeSurface):
        return system.base.on_lattice(xs, ys)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return system.base(X, Y)


class RasterOperator:
    """The operator T restricted to the depth-r raster.

    Every L_ij contracts by exactly 1/a per axis, so the preimage of a raster
    node of E_ij is a raster node of the domain (stride a).  No interpolation
    is needed.
    """

    def __init__(self, system: RifsSystem, depth: int,
                 cert: UniformityCertificate | None = None):
        if depth < 0:
            raise ValueError("depth must be >= 0")
        if cert is None:
            try:
                cert = certify_uniform(system.grid, system.layout)
            except RfisError as exc:
                raise NotUniform(f"deterministic rendering needs a uniform layout: {exc}") from exc
        self.system = system
        self.depth = depth
        self.a = a = cert.a
        self.A = A = a ** depth
        g = system.grid
        self.shape = (g.n * A + 1, g.m * A + 1)
        self.g0 = base_raster(system, depth, a)
        h = g.n * A
        self.blocks = []
        # descending tau: the lower region index is written last and wins on shared edges
        for t in range(g.num_regions, 0, -1):
            i, j = (t - 1) % g.n + 1, (t - 1) // g.n + 1
            rm = system.maps[(i, j)]
            d = system.layout.domain(rm.k)
            tgt = (slice((i - 1) * A, i * A + 1), slice((j - 1) * A, j * A + 1))
            src = (slice(d.sx * A, d.ex * A + 1, a), slice(d.sy * A, d.ey * A + 1, a))
            X, Y = np.meshgrid(np.arange((i - 1) * A, i * A + 1) / h,
                               np.arange((j - 1) * A, j * A + 1) / h, indexing="ij")
            S = np.broadcast_to(np.asarray(system.s_at((i, j), X, Y), dtype=float), X.shape)
            flip = (rm.lx.orientation == DECREASING, rm.ly.orientation == DECREASING)
            h_src = self._oriented(self._reference(system, d, src), flip)
            offset = self.g0[tgt] - S * h_src + system.q_offsets.get((i, j), 0.0)
            self.blocks.append((tgt, src, flip, np.ascontiguousarray(S), offset))
        self.cap = float(max(np.abs(b[3]).max() for b in self.blocks))

    def _reference(self, system: RifsSystem, d, src) -> np.ndarray:
        """h_k on the domain's stride-a lattice, built from raster boundary lines."""
        g0 = self.g0
        if system.residual == "g0":
            return g0[src]
        A, a = self.A, self.a
        xsl, ysl = src
        left, right = g0[d.sx * A, ysl], g0[d.ex * A, ysl]
        bottom, top = g0[xsl, d.sy * A], g0[xsl, d.ey * A]
        u = np.arange(len(bottom)) / (len(bottom) - 1)
        v = np.arange(len(left)) / (len(left) - 1)
        return coons(left, right, bottom, top, u, v)

    @staticmethod
    def _oriented(block: np.ndarray, flip) -> np.ndarray:
        if flip[0]:
            block = block[::-1, :]
        if flip[1]:
            block = block[:, ::-1]
        return block

    def apply(self, g: np.ndarray) -> tuple[np.ndarray, float]:
        """Return ``(Tg, max disagreement between neighbouring regions)``."""
        out = np.empty(self.shape)
        written = np.zeros(self.shape, dtype=bool)
        disc = 0.0
        for tgt, src, flip, S, offset in self.blocks:
            val = S * self._oriented(g[src], flip) + offset
            mask = written[tgt]
            if mask.any():
                disc = max(disc, float(np.max(np.abs(val[mask] - out[tgt][mask]))))
            out[tgt] = val
            written[tgt] = True
        return out, disc

    __call__ = apply


def deterministic_render(system: RifsSystem, depth: int, max_iters: int = 200,
                         tol: float = 1e-10, cert: UniformityCertificate | None = None,
                         operator: RasterOperator | None = None) -> SurfaceSample:
    T = operator or RasterOperator(system, depth, cert)
    g = T.g0.copy()
    deltas = []
    disc = 0.0
    delta = math.inf
    it = 0
    while it < max_iters:
        it += 1
        new, disc = T.apply(g)
        delta = float(np.max(np.abs(new - g)))
        deltas.append(delta)
        g = new
        if delta <= tol:
            break
    log.debug("render depth=%d iterations=%d delta=%.3e", depth, it, delta)
    if delta > tol:
        raise NotConverged(f"no convergence after {it} iterations (delta {delta:.3e} > {tol:.1e})",
                           iterations=it, delta=delta)
    g.setflags(write=False)
    return SurfaceSample(depth=depth, a=T.a, n=system.grid.n, m=system.grid.m, values=g,
                         iterations=it, final_delta=delta, boundary_discrepancy=disc,
                         deltas=deltas, system_hash=system.fingerprint())


# -- chaos game ------------------------------------------------------------

@dataclass(eq=False)
class PointCloud:
    points: np.ndarray
    seed: int
    burn_in: int
    chains: int = 1


def _transition_table(system: RifsSystem):
    """Row t lists the maps s admissible after a visit to region t
    (``p_ts > 0``); they are equiprobable since every positive entry of row t
    equals ``1/a_t``."""
    M = system.M
    N = M.shape[0]
    support = [np.flatnonzero(M[t] > 0) for t in range(N)]
    width = max(len(s) for s in support)
    table = np.zeros((N, width), dtype=np.int64)
    for t, s in enumerate(support):
        table[t, :len(s)] = s
    return table, np.array([len(s) for s in support])


def chaos_game(system: RifsSystem, count: int, seed: int = 0, burn_in: int = 100,
               chains: int | None = None) -> PointCloud:
    """Recurrent chaos game.

    ``chains`` independent orbits advance in lock-step off one seeded
    generator; each starts at the lower-left data point of a random region and
    records every point after ``burn_in`` steps.  The output order is
    step-major, so the result is a pure function of the arguments.
    """
    g = system.grid
    N = g.num_regions
    if chains is None:
        chains = min(count, 4096) if count > 0 else 1
    chains = max(1, min(chains, max(count, 1)))
    steps = burn_in + -(-count // chains)
    rng = np.random.default_rng(seed)
    table, sizes = _transition_table(system)

    t = rng.integers(0, N, size=chains)  # 0-based region index
    ii = t % g.n
    jj = t // g.n
    x = g.xs[ii].astype(float)
    y = g.ys[jj].astype(float)
    z = g.z[ii, jj].astype(float)
    region_of_map = [((s % g.n) + 1, (s // g.n) + 1) for s in range(N)]

    out = np.empty((max(steps - burn_in, 0) * chains, 3))
    row = 0
    for step in range(steps):
        pick = np.floor(rng.random(chains) * sizes[t]).astype(np.int64)
        s = table[t, pick]
        nx, ny, nz = np.empty(chains), np.empty(chains), np.empty(chains)
        for sv in np.unique(s):
            sel = s == sv
            nx[sel], ny[sel], nz[sel] = system.W(*region_of_map[sv], x[sel], y[sel], z[sel])
        x, y, z, t = nx, ny, nz, s
        if step >= burn_in:
            out[row:row + chains, 0] = x
            out[row:row + chains, 1] = y
            out[row:row + chains, 2] = z
            row += chains
    return PointCloud(out[:count], seed=seed, burn_in=burn_in, chains=chains)


# -- raster statistics -----------------------------------------------------

def vertical_range(sample: SurfaceSample, region: Region) -> tuple[float, float]:
    block = sample.region_block(*region)
    return float(block.min()), float(block.max())


def max_variation(sample: SurfaceSample, rect=None) -> float:
    """max - min of the raster over the nodes inside ``rect = (x0, x1, y0, y1)``."""
    if rect is None:
        vals = sample.values
    else:
        x0, x1, y0, y1 = rect
        eps = 1e-12
        xs, ys = sample.xs, sample.ys
        ix = np.flatnonzero((xs >= x0 - eps) & (xs <= x1 + eps))
        iy = np.flatnonzero((ys >= y0 - eps) & (ys <= y1 + eps))
        if ix.size == 0 or iy.size == 0:
            raise EmptyRect(f"no raster nodes inside {rect}")
        vals = sample.values[ix[0]:ix[-1] + 1, iy[0]:iy[-1] + 1]
    return float(vals.max() - vals.min())


@dataclass
class VariationBoundRow:
    region: Region
    lhs: float
    rhs: float

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-9) + 1e-9


def variation_bound_check(system: RifsSystem, sample: SurfaceSample, density: int = 33) -> list[VariationBoundRow]:
    """Maximum-variation bound per region:

    ``R_f[E_ij] <= s_max R_f[D] + diam(D) (c_s |f|_max + L_Q)``, D the domain,
    with the Lipschitz constants c_s and L_Q estimated on a sampling lattice.
    """
    g = system.grid
    rows = []
    for r in g.regions():
        rm = system.maps[r]
        d = system.layout.domain(rm.k)
        drect = (g.xs[d.sx], g.xs[d.ex], g.ys[d.sy], g.ys[d.ey])
        lhs = max_variation(sample, g.region_rect(*r))
        rf_dom = max_variation(sample, drect)
        fbar = _abs_max(sample, drect)
        c_s = ex.lipschitz_estimate(system.scale.exprs[r], g.region_rect(*r), density)
        X, Y = ex.sample_region(drect, density)
        L_Q = ex.lattice_lipschitz(system.Q(*r, X, Y), X[1, 0] - X[0, 0], Y[0, 1] - Y[0, 0])
        diam = math.hypot(drect[1] - drect[0], drect[3] - drect[2])
        rhs = system.scale.bounds[r][1] * rf_dom + diam * (c_s * fbar + L_Q)
        rows.append(VariationBoundRow(r, lhs, rhs))
    return rows


def _abs_max(sample: SurfaceSample, rect) -> float:
    x0, x1, y0, y1 = rect
    xs, ys = sample.xs, sample.ys
    ix = (xs >= x0 - 1e-12) & (xs <= x1 + 1e-12)
    iy = (ys >= y0 - 1e-12) & (ys <= y1 + 1e-12)
    return float(np.abs(sample.values[np.ix_(ix, iy)]).max())

