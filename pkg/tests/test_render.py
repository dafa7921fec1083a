import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import SINE, sine_system, make_system, quadrant_layout, heights_grid
from rfis.core import build_scale_field, build_system, uniform_scale
from rfis.errors import EmptyRect, NotConverged, NotUniform
from rfis.grid import build_grid, normalize
from rfis.render import (
    RasterOperator,
    base_raster,
    chaos_game,
    deterministic_render,
    max_variation,
    vertical_range,
)

CASES = [("0.7", "bilinear", 64), ("0.4", "bilinear", 64), (SINE, "lagrange", 257),
         (SINE, "bilinear", 257)]


def _flat_system(value, scale="0.6", xs=range(5), ys=range(5)):
    g = build_grid(xs, ys, np.full((len(xs), len(ys)), float(value)))
    try:
        g = normalize(g)[0]
    except Exception:
        pass
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sf = build_scale_field(g, uniform_scale(g, scale))
    return build_system(g, quadrant_layout(g), sf)


def test_zero_scale_reproduces_base():
    sys_ = make_system("0")
    smp = deterministic_render(sys_, 6)
    assert smp.iterations == 1 and smp.deltas == [0.0]
    g0 = base_raster(sys_, 6, 2)
    assert np.max(np.abs(smp.values - g0)) <= 1e-12


@pytest.mark.parametrize("depth", [0, 3, 5])
def test_flat_constant(depth):
    smp = deterministic_render(_flat_system(5.0), depth)
    assert np.all(smp.values == 5.0)
    assert max_variation(smp) == 0.0
    assert vertical_range(smp, (2, 3)) == (5.0, 5.0)


def test_raster_shape():
    smp = deterministic_render(make_system("0.7"), 6)
    assert smp.shape == (4 * 2 ** 6 + 1,) * 2
    assert smp.xs[-1] == 1.0 and smp.xs[1] == 1 / 256


@pytest.mark.parametrize("scale,base,density", CASES)
def test_contraction(scale, base, density):
    sys_ = make_system(scale, base, density)
    T = RasterOperator(sys_, 5)
    rng = np.random.default_rng(11)
    for _ in range(10):
        g = rng.normal(0, 50, T.shape)
        h = rng.normal(0, 50, T.shape)
        ratio = np.max(np.abs(T(g)[0] - T(h)[0])) / np.max(np.abs(g - h))
        assert ratio <= sys_.scale.cap + 1e-12


@pytest.mark.parametrize("scale,base,density", CASES)
def test_fixed_point_properties(scale, base, density):
    sys_ = make_system(scale, base, density)
    T = RasterOperator(sys_, 6)
    smp = deterministic_render(sys_, 6, tol=1e-10, operator=T)
    # interpolation
    assert np.max(np.abs(smp.at_grid_nodes() - sys_.grid.z)) <= 1e-9
    # self-consistency
    again, disc = T(np.array(smp.values))
    assert np.max(np.abs(again - smp.values)) <= 1e-10
    # neighbouring region formulas agree on shared edges
    assert disc <= 1e-9 and smp.boundary_discrepancy <= 1e-9


def test_iteration_envelope_sine():
    sys_ = sine_system()
    T = RasterOperator(sys_, 6)
    delta1 = float(np.max(np.abs(T(T.g0)[0] - T.g0)))
    smp = deterministic_render(sys_, 6, tol=1e-10, operator=T)
    s_bar = sys_.scale.cap
    assert delta1 > 0
    assert smp.iterations <= math.ceil(math.log(1e-10 / delta1) / math.log(s_bar))
    # geometric envelope on the recorded deltas
    for k, d in enumerate(smp.deltas):
        assert d <= delta1 * s_bar ** k * (1 + 1e-9) + 1e-12


def test_not_converged():
    with pytest.raises(NotConverged) as info:
        deterministic_render(make_system("0.7"), 6, max_iters=2)
    assert info.value.iterations == 2 and info.value.delta > 1e-10


def test_nonuniform_refused_but_chaos_runs():
    g = build_grid([0, 1, 3, 4, 6], [0, 1, 2, 3, 4], np.arange(25.0).reshape(5, 5) % 7)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sf = build_scale_field(g, uniform_scale(g, "0.5"))
    sys_ = build_system(g, quadrant_layout(g), sf)
    with pytest.raises(NotUniform):
        deterministic_render(sys_, 3)
    cloud = chaos_game(sys_, 500, seed=3, burn_in=20)
    assert cloud.points.shape == (500, 3)
    assert np.all((cloud.points[:, 0] >= 0) & (cloud.points[:, 0] <= 6))


def test_chaos_determinism():
    sys_ = make_system("0.7")
    a = chaos_game(sys_, 5000, seed=9, burn_in=50)
    b = chaos_game(sys_, 5000, seed=9, burn_in=50)
    c = chaos_game(sys_, 5000, seed=10, burn_in=50)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def test_chaos_zero_scale_on_base():
    sys_ = make_system("0")
    pts = chaos_game(sys_, 20000, seed=1).points
    assert np.max(np.abs(pts[:, 2] - sys_.base(pts[:, 0], pts[:, 1]))) <= 1e-9


def test_chaos_flat():
    pts = chaos_game(_flat_system(0.0), 5000, seed=2).points
    assert np.all(pts[:, 2] == 0.0)


@pytest.mark.parametrize("scale,base,density", CASES)
def test_chaos_matches_raster_on_nodes(scale, base, density):
    # an orbit started at a data point stays on the graph; after k <= depth
    # steps it sits exactly on a depth-k raster node
    depth = 6
    sys_ = make_system(scale, base, density)
    smp = deterministic_render(sys_, depth)
    chains = 2000
    cloud = chaos_game(sys_, chains * depth, seed=5, burn_in=0, chains=chains)
    h = smp.steps_per_unit
    pts = cloud.points
    ix, iy = pts[:, 0] * h, pts[:, 1] * h
    assert np.max(np.abs(ix - np.rint(ix))) <= 1e-9 and np.max(np.abs(iy - np.rint(iy))) <= 1e-9
    node = smp.values[np.rint(ix).astype(int), np.rint(iy).astype(int)]
    assert np.max(np.abs(pts[:, 2] - node)) <= 1e-9


def test_chaos_stays_in_bounds():
    sys_ = make_system("0.7")
    smp = deterministic_render(sys_, 6)
    pts = chaos_game(sys_, 20000, seed=4).points
    assert pts[:, 2].min() >= smp.values.min() - 5 and pts[:, 2].max() <= smp.values.max() + 5
    assert np.all((pts[:, :2] >= 0) & (pts[:, :2] <= 1))


def test_vertical_range_base_patch():
    smp = deterministic_render(make_system("0"), 6)
    assert vertical_range(smp, (1, 1)) == (28.0, 43.0)


def test_vertical_range_fractal_contains_corners():
    smp = deterministic_render(make_system("0.7"), 6)
    lo, hi = vertical_range(smp, (1, 1))
    assert lo <= 28 and hi >= 43


def test_max_variation():
    smp = deterministic_render(make_system("0.7"), 6)
    assert max_variation(smp) >= 88 - 25
    assert max_variation(smp, (0, 0.25, 0, 0.25)) == pytest.approx(
        np.ptp(smp.region_block(1, 1)))
    with pytest.raises(EmptyRect):
        max_variation(smp, (0.001, 0.002, 0.5, 0.6))


def test_max_variation_plane():
    X, Y = np.meshgrid(np.arange(5) / 4, np.arange(5) / 4, indexing="ij")
    g = normalize(build_grid(range(5), range(5), X))[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sf = build_scale_field(g, uniform_scale(g, "0.3"))
    smp = deterministic_render(build_system(g, quadrant_layout(g), sf), 5)
    assert max_variation(smp) == pytest.approx(1.0, abs=1 / smp.steps_per_unit)
    assert np.allclose(smp.values, np.arange(smp.shape[0])[:, None] / smp.steps_per_unit)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_lookup_between_nodes(x, y):
    smp = deterministic_render(make_system("0.4"), 4)
    v = smp.lookup(x, y)
    h = smp.steps_per_unit
    i, j = min(int(x * h), smp.shape[0] - 2), min(int(y * h), smp.shape[1] - 2)
    block = smp.values[i:i + 2, j:j + 2]
    assert block.min() - 1e-9 <= v <= block.max() + 1e-9


def test_lookup_exact_on_nodes():
    smp = deterministic_render(make_system("0.7"), 4)
    ii, jj = np.meshgrid(np.arange(smp.shape[0]), np.arange(smp.shape[1]), indexing="ij")
    got = smp.lookup(ii / smp.steps_per_unit, jj / smp.steps_per_unit)
    assert np.max(np.abs(got - smp.values)) <= 1e-9


def test_literal_residual_is_base_graph():
    # with z - g0(x, y) as residual the base surface is already the fixed point
    sys_ = make_system("0.7", residual="g0")
    smp = deterministic_render(sys_, 5)
    assert smp.iterations == 1
    assert np.max(np.abs(smp.values - base_raster(sys_, 5, 2))) <= 1e-12


def test_render_depth_zero_is_data():
    smp = deterministic_render(make_system("0.7"), 0)
    assert np.array_equal(smp.values, heights_grid().z)
