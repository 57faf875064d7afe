import itertools
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curvegeom.polyline import PolygonalLine, TypeSpec, greedy_match, match_type, polyline_eval


def test_typespec_overlap_issue():
    with pytest.raises(ValueError, match="ball overlap"):
        TypeSpec([[0.0, 0.0], [0.3, 0.0]], 0.2, (1, 2))


@pytest.mark.parametrize("centers,eps,seq,needle", [
    ([[0.0], [1.0]], 0.1, (1, 3), "outside"),
    ([[0.0], [1.0]], 0.0, (1, 2), "radius"),
    ([[0.0], [1.0]], 0.1, (), "non-empty"),
])
def test_typespec_other_issues(centers, eps, seq, needle):
    with pytest.raises(ValueError, match=needle):
        TypeSpec(centers, eps, seq)


def test_targets_order():
    spec = TypeSpec([[0.0], [1.0], [2.0]], 0.1, (3, 1, 3))
    np.testing.assert_array_equal(spec.targets()[:, 0], [2, 0, 2])


def _path(points):
    points = np.asarray(points, dtype=float)
    return SimpleNamespace(points=points, times=np.linspace(0, 1, len(points)), dim=points.shape[1])


def test_match_type_simple():
    spec = TypeSpec([[0.0], [1.0]], 0.1, (2, 1))
    res = match_type(_path([[0.5], [1.05], [0.5], [-0.05]]), spec)
    assert res.matched and res.times == pytest.approx((1 / 3, 1.0))
    assert not match_type(_path([[-0.05], [1.05]]), spec).matched


def test_closed_ball_boundary():
    spec = TypeSpec([[0.0], [1.0]], 0.25, (2,))
    assert match_type(_path([[0.75]]), spec).matched


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        match_type(_path([[0.0, 0.0]]), TypeSpec([[0.0], [1.0]], 0.1, (1,)))


def _brute(inside):
    n, k = inside.shape
    return any(all(inside[i, j] for j, i in enumerate(c)) for c in itertools.combinations(range(n), k))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=1, max_size=9), st.lists(st.integers(0, 2), min_size=1, max_size=4))
def test_greedy_equals_brute_force(walk, seq):
    centers = np.array([[0.0], [1.0], [2.0]])
    pts = centers[walk]
    targets = centers[seq]
    inside = np.abs(pts[:, None, 0] - targets[None, :, 0]) <= 0.1
    assert (greedy_match(pts, targets, 0.1) is not None) == _brute(inside)


def test_polyline_eval():
    line = PolygonalLine([[0.0, 0.0], [1.0, 2.0], [3.0, 2.0]])
    knots = [0.0, 0.5, 1.0]
    np.testing.assert_allclose(polyline_eval(line, knots, 0.25), [0.5, 1.0])
    np.testing.assert_array_equal(polyline_eval(line, knots, 0.5), [1.0, 2.0])
    np.testing.assert_array_equal(polyline_eval(line, knots, 1.0), [3.0, 2.0])
    with pytest.raises(ValueError):
        polyline_eval(line, knots, 1.5)
    with pytest.raises(ValueError):
        PolygonalLine([[np.nan, 0.0]])
