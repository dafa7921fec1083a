"""Box-counting dimension: spectral bounds and raster box counts."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .core import RifsSystem, check_collinearity_hypothesis, is_irreducible
from .errors import DepthTooShallow, NotConverged, NotUniform, RfisError
from .grid import UniformityCertificate, certify_uniform, tau_inverse
from .render import SurfaceSample

LOWER_BOUNDED = "lower-bounded"
EXACTLY_TWO = "exactly-two"
INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class ScalingMatrices:
    """Diagonals of the upper/lower scaling matrices, in tau order."""

    upper: np.ndarray
    lower: np.ndarray

    @property
    def S_upper(self) -> np.ndarray:
        return np.diag(self.upper)

    @property
    def S_lower(self) -> np.ndarray:
        return np.diag(self.lower)


def scaling_matrices(system: RifsSystem, density: int = 64, pad: float = 0.0) -> ScalingMatrices:
    if density < 64:
        raise ValueError("density must be >= 64 per axis")
    g = system.grid
    up = np.empty(g.num_regions)
    lo = np.empty(g.num_regions)
    for t in range(1, g.num_regions + 1):
        r = tau_inverse(t, g.n)
        lo[t - 1], up[t - 1] = ex.certify_bounds(system.scale.exprs[r], g.region_rect(*r),
                                                 density, pad, region=r)
    return ScalingMatrices(up, lo)


def spectral_radius(A, tol: float = 1e-14, max_iters: int = 200_000) -> float:
    """Perron root of a nonnegative matrix by power iteration on ``A + I``.

    The shift makes ``A + I`` primitive whenever ``A`` is irreducible, and the
    all-ones start vector is strictly positive.  Iteration stops once two
    successive Rayleigh quotients differ by at most ``tol`` (relative to the
    estimate).  Reducible input still gets ``rho(A)`` but triggers a warning.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("need a square matrix")
    if np.any(A < 0):
        raise ValueError("matrix must be nonnegative")
    N = A.shape[0]
    if not np.any(A):
        return 0.0
    if N > 1 and not is_irreducible(A):
        warnings.warn("matrix is reducible; Perron vector may not be positive", stacklevel=2)
    B = A + np.eye(N)
    v = np.ones(N) / math.sqrt(N)
    est = math.inf
    for _ in range(max_iters):
        w = B @ v
        new = float(v @ w)  # v has unit norm
        v = w / np.linalg.norm(w)
        if abs(new - est) <= tol * max(1.0, abs(new)):
            return new - 1.0
        est = new
    raise NotConverged(f"power iteration did not settle in {max_iters} steps")


@dataclass
class BoxCount:
    r: int
    epsilon: float
    count: int


@dataclass
class EmpiricalFit:
    slope: float
    intercept: float
    r_squared: float
    counts: list[BoxCount]


@dataclass
class DimensionReport:
    a: int
    lambda_upper: float
    lambda_lower: float
    case: str
    bounds: tuple[float, float]
    hypothesis_ok: bool
    hypothesis_witness: int | None
    constant_scaling: float | None = None
    exact: float | None = None
    degenerate_lower: bool = False
    rho_C: float | None = None
    notes: list[str] = field(default_factory=list)
    empirical: EmpiricalFit | None = None

    def to_dict(self) -> dict:
        out = {
            "a": self.a,
            "lambda_upper": self.lambda_upper,
            "lambda_lower": self.lambda_lower,
            "rho_C": self.rho_C,
            "case": self.case,
            "bounds": list(self.bounds),
            "exact": self.exact,
            "constant_scaling": self.constant_scaling,
            "degenerate_lower": self.degenerate_lower,
            "hypothesis_ok": self.hypothesis_ok,
            "hypothesis_witness": self.hypothesis_witness,
            "notes": list(self.notes),
        }
        if self.empirical is not None:
            e = self.empirical
            out["empirical"] = {
                "slope": e.slope,
                "intercept": e.intercept,
                "r_squared": e.r_squared,
                "counts": [{"r": c.r, "epsilon": c.epsilon, "count": c.count} for c in e.counts],
            }
        return out


def _log(x: float, a: int) -> float:
    return math.log(x) / math.log(a)


def dimension_bounds(system: RifsSystem, matrices: ScalingMatrices,
                     cert: UniformityCertificate | None = None) -> DimensionReport:
    if cert is None:
        try:
            cert = certify_uniform(system.grid, system.layout)
        except RfisError as exc:
            raise NotUniform(f"dimension bounds need a uniform layout: {exc}") from exc
    if not system.irreducible:
        raise NotUniform("dimension bounds are disabled for a reducible (forced) system")
    a = cert.a
    C = system.C.astype(float)
    lam_up = spectral_radius(matrices.upper[:, None] * C)
    with warnings.catch_warnings():
        if np.any(matrices.lower == 0.0):
            # zero rows make S_lower C reducible; reported via degenerate_lower
            warnings.simplefilter("ignore")
        lam_lo = spectral_radius(matrices.lower[:, None] * C)
    hyp, witness = check_collinearity_hypothesis(system.grid, system.layout)
    notes = []
    const = system.scale.constant_value()
    report = DimensionReport(a=a, lambda_upper=lam_up, lambda_lower=lam_lo, case=INDETERMINATE,
                             bounds=(2.0, 1 + _log(lam_up, a) if lam_up > 0 else 2.0),
                             hypothesis_ok=hyp, hypothesis_witness=witness, notes=notes)
    report.degenerate_lower = bool(np.any(matrices.lower == 0.0))
    report.rho_C = spectral_radius(C)
    if const is not None:
        report.constant_scaling = abs(const)
        lam = abs(const) * report.rho_C
        report.lambda_upper = report.lambda_lower = lam
        lam_up = lam_lo = lam
    if lam_lo > a:
        report.case = LOWER_BOUNDED
        report.bounds = (1 + _log(lam_lo, a), 1 + _log(lam_up, a))
        if const is not None:
            report.exact = 1 + _log(lam_up, a)
            report.bounds = (report.exact, report.exact)
    elif lam_up <= a:
        report.case = EXACTLY_TWO
        report.bounds = (2.0, 2.0)
        report.exact = 2.0
    else:
        notes.append("lambda_lower <= a < lambda_upper: only the upper bound is established")
    if report.degenerate_lower:
        notes.append("some lower scaling bounds are zero; the lower bound degenerates")
    if not hyp:
        notes.append("hypothesis unmet: every domain is x-collinear and y-collinear; "
                     "bounds are conditional")
    return report


# -- empirical box counting ------------------------------------------------

def _closed_bands(v: np.ndarray, step: int, axis: int, ufunc) -> np.ndarray:
    """Reduce consecutive closed bands ``[k*step, (k+1)*step]`` along ``axis``.

    Neighbouring bands share their boundary node.
    """
    length = v.shape[axis]
    starts = np.arange(0, length - 1, step)
    inner = ufunc.reduceat(np.take(v, np.arange(length - 1), axis=axis), starts, axis=axis)
    ends = np.minimum(starts + step, length - 1)
    return ufunc(inner, np.take(v, ends, axis=axis))


def box_count(sample: SurfaceSample, r: int, min_oversample: int = 2) -> int:
    """Number of 1/a^r-mesh cubes meeting the graph, from raster extremes.

    Each closed ``eps x eps`` column contributes
    ``floor(max/eps) - floor(min/eps) + 1``.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    if sample.depth < r + min_oversample:
        raise DepthTooShallow(f"raster depth {sample.depth} too shallow for r={r} "
                              f"(need >= {r + min_oversample})")
    a = sample.a
    step = sample.n * a ** (sample.depth - r)  # raster steps per eps
    v = sample.values
    mx = _closed_bands(_closed_bands(v, step, 0, np.maximum), step, 1, np.maximum)
    mn = _closed_bands(_closed_bands(v, step, 0, np.minimum), step, 1, np.minimum)
    inv_eps = float(a ** r)
    return int(np.sum(np.floor(mx * inv_eps) - np.floor(mn * inv_eps) + 1))


def box_counts(sample: SurfaceSample, r_min: int, r_max: int,
               min_oversample: int = 2) -> list[BoxCount]:
    return [BoxCount(r, 1.0 / sample.a ** r, box_count(sample, r, min_oversample))
            for r in range(r_min, r_max + 1)]


def empirical_dimension(sample: SurfaceSample, r_min: int, r_max: int,
                        min_oversample: int = 2) -> EmpiricalFit:
    """Least-squares slope of log N'(eps_r) against r log a."""
    if r_max - r_min < 2:
        raise ValueError("need r_max - r_min >= 2")
    if r_max + min_oversample > sample.depth:
        raise DepthTooShallow(f"r_max={r_max} needs raster depth >= {r_max + min_oversample}")
    counts = box_counts(sample, r_min, r_max, min_oversample)
    X = np.array([c.r for c in counts]) * math.log(sample.a)
    Y = np.log([c.count for c in counts])
    slope, intercept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + intercept)
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return EmpiricalFit(float(slope), float(intercept), r2, counts)
