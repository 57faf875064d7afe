import numpy as np
import pytest

from curvegeom import rng
from curvegeom.paths import (
    BrownianPath, PinSet, TimeGrid, bridge_fill, conditional_variance, decompose, poly_interp, refine_bridge,
    residual_covariance, sample_conditioned, sample_path, sample_paths, split_path,
)


@pytest.mark.parametrize("times", [[], [0.1, 0.5], [0, 0.5, 0.5], [0, 0.6, 0.4], [0, 1.5]])
def test_grid_validation(times):
    with pytest.raises(ValueError):
        TimeGrid(np.array(times, dtype=float))


def test_uniform_grid():
    g = TimeGrid.uniform(4)
    np.testing.assert_allclose(g.times, [0, 0.25, 0.5, 0.75, 1])
    assert len(TimeGrid.uniform(0)) == 1


def test_sample_path_deterministic_and_matches_batch():
    g = TimeGrid.uniform(16)
    a = sample_path(3, g, (11, 4))
    b = sample_path(3, g, (11, 4))
    np.testing.assert_array_equal(a.points, b.points)
    np.testing.assert_array_equal(sample_paths(3, g, 11, [4])[0], a.points)
    assert np.all(a.points[0] == 0)


def test_start_point():
    p = sample_path(2, TimeGrid.uniform(4), 0, start=[1.0, -2.0])
    np.testing.assert_array_equal(p.points[0], [1.0, -2.0])


def test_increment_variance_matches_time():
    g = TimeGrid(np.array([0.0, 0.1, 0.35, 1.0]))
    p = sample_paths(1, g, 3, 40_000)[:, :, 0]
    inc = np.diff(p, axis=1)
    np.testing.assert_allclose(inc.var(axis=0), g.steps, rtol=0.05)
    assert abs(np.corrcoef(inc[:, 0], inc[:, 2])[0, 1]) < 0.03


def test_bad_dimension():
    with pytest.raises(ValueError):
        sample_path(0, TimeGrid.uniform(2))


def test_bridge_fill_endpoints_and_variance():
    st = rng.Stream(1, 0, rng.REFINE)
    out = bridge_fill(np.zeros((20_000, 1)), np.ones((20_000, 1)), 1.0, 2, st)
    np.testing.assert_array_equal(out[:, 0], 0)
    np.testing.assert_array_equal(out[:, -1], 1)
    # bridge from 0 to 1 over unit time: mean t, variance t(1 - t)
    t = np.array([0.25, 0.5, 0.75])
    np.testing.assert_allclose(out[:, 1:-1, 0].mean(axis=0), t, atol=0.02)
    np.testing.assert_allclose(out[:, 1:-1, 0].var(axis=0), t * (1 - t), rtol=0.05)


def test_refine_bridge_keeps_old_points():
    p = sample_path(2, TimeGrid.uniform(4), 8)
    r = refine_bridge(p, 1, 3, (8, 0))
    assert len(r.grid) == 5 + 7
    for t, x in zip(p.times, p.points):
        np.testing.assert_array_equal(r.points[np.searchsorted(r.times, t)], x)
    with pytest.raises(IndexError):
        refine_bridge(p, 4, 1, 0)
    with pytest.raises(ValueError):
        refine_bridge(p, 0, 0, 0)


@pytest.mark.parametrize("times,values", [([0.0], [[1.0]]), ([0.5, 0.5], [[1.0], [2.0]]), ([1.2], [[0.0]]),
                                          ([0.5, 0.7], [[1.0]])])
def test_pinset_validation(times, values):
    with pytest.raises(ValueError):
        PinSet(times, values)


def test_pinset_knots():
    pins = PinSet([0.5, 1.0], [[1.0, 2.0], [0.0, 1.0]])
    np.testing.assert_array_equal(pins.knots, [0, 0.5, 1])
    np.testing.assert_array_equal(pins.knot_values[0], [0, 0])
    assert pins.dim == 2 and pins.last == 1.0


def test_decompose_interpolates_pins():
    pins = PinSet([0.3, 0.8], [[1.0, -1.0], [0.5, 2.0]])
    dec = decompose(2, pins, (5, 1))
    path = dec.path()
    for s, v in zip(pins.times, pins.values):
        np.testing.assert_array_equal(path.points[np.searchsorted(path.times, s)], v)
    np.testing.assert_array_equal(path.points[0], 0)
    assert dec.tail_times.size > 0 and dec.tail_times.min() > 0.8


def test_decompose_matches_vectorised():
    pins = PinSet([0.25, 1.0], [[1.0], [0.0]])
    times, paths = sample_conditioned(1, pins, 9, [0, 3])
    np.testing.assert_allclose(decompose(1, pins, (9, 3)).path().points, paths[1], atol=1e-15)


def test_poly_interp():
    v = poly_interp(np.array([0.0, 1.0]), np.array([[0.0, 0.0], [2.0, 4.0]]), [0.25, 1.0])
    np.testing.assert_allclose(v, [[0.5, 1.0], [2.0, 4.0]])


def test_residual_covariance_formula():
    pins = PinSet([0.4, 1.0], [[0.0], [0.0]])
    assert residual_covariance(0.1, 0.3, pins) == pytest.approx(0.1 - 0.1 * 0.3 / 0.4)
    assert residual_covariance(0.1, 0.7, pins) == 0.0
    assert residual_covariance(0.4, 0.4, pins) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        residual_covariance(0.1, 1.1, pins)


def test_conditional_variance_empirical():
    pins = PinSet([0.5], [[1.0]])
    times, paths = sample_conditioned(1, pins, 4, 40_000, TimeGrid.uniform(8))
    for t in (0.25, 0.75):
        i = np.searchsorted(times, t)
        assert paths[:, i, 0].var() == pytest.approx(conditional_variance(t, pins), rel=0.05)
    assert conditional_variance(0.75, pins) == pytest.approx(0.25)


def test_split_path_roundtrip():
    p = sample_path(2, TimeGrid.uniform(8), 2)
    dec = split_path(p, [0.25, 0.75])
    np.testing.assert_allclose(dec.path().points, p.points, atol=1e-15)
    np.testing.assert_array_equal(dec.residual[[0, 2, 6]], 0)
    with pytest.raises(ValueError):
        split_path(p, [0.3])


def test_brownian_path_shape_check():
    with pytest.raises(ValueError):
        BrownianPath(2, TimeGrid.uniform(2), np.zeros((3, 1)))


def test_split_paths_matches_single():
    from curvegeom.paths import split_paths
    g = TimeGrid.uniform(8)
    stack = sample_paths(2, g, 3, 4)
    poly, res = split_paths(stack, g.times, [0.25, 0.75])
    dec = split_path(BrownianPath(2, g, stack[2]), [0.25, 0.75])
    np.testing.assert_allclose(poly[2], dec.poly, atol=1e-15)
    np.testing.assert_allclose(res[2], dec.residual, atol=1e-15)
