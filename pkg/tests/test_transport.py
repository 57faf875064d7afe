import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curvegeom.transport import EmpiricalMeasure, bounded_cost, cost_matrix, rho


def test_bounded_cost():
    assert bounded_cost([1, 2], [1, 2]) == 0
    assert bounded_cost([0, 0], [3, 4]) == pytest.approx(5 / 6)
    assert bounded_cost([0.0], [1e6]) < 1
    assert bounded_cost([-1e300], [1e300]) <= 1
    with pytest.raises(ValueError):
        bounded_cost([0, 0], [0, 0, 0])


def test_measure_validation():
    with pytest.raises(ValueError):
        EmpiricalMeasure([[0.0], [1.0]], [0.5, 0.6])
    with pytest.raises(ValueError):
        EmpiricalMeasure([[0.0]], [0.5, 0.5])


def test_two_atom_example():
    mu = EmpiricalMeasure([[0, 0], [1, 0]], [0.5, 0.5])
    nu = EmpiricalMeasure([[0, 0]], [1.0])
    value, plan = rho(mu, nu)
    assert value == pytest.approx(0.25, abs=1e-15)
    np.testing.assert_allclose(plan.plan, [[0.5], [0.5]])


def test_self_distance_identity_plan():
    mu = EmpiricalMeasure.uniform(np.random.default_rng(1).normal(size=(5, 2)))
    value, plan = rho(mu, mu)
    assert value == 0
    np.testing.assert_allclose(plan.plan, np.eye(5) / 5)


def _perm_oracle(a, b):
    c = cost_matrix(a, b)
    k = len(a)
    return min(sum(c[i, p[i]] for i in range(k)) for p in itertools.permutations(range(k))) / k


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_equals_permutation_enumeration(k, seed):
    r = np.random.default_rng(seed)
    a, b = r.normal(size=(k, 2)), r.normal(size=(k, 2)) * 2
    assert rho(EmpiricalMeasure.uniform(a), EmpiricalMeasure.uniform(b))[0] == pytest.approx(_perm_oracle(a, b), abs=1e-12)


def test_plan_margins_unequal_weights():
    r = np.random.default_rng(4)
    mu = EmpiricalMeasure(r.normal(size=(3, 2)), [0.2, 0.3, 0.5])
    nu = EmpiricalMeasure(r.normal(size=(4, 2)), [0.125, 0.375, 0.25, 0.25])
    _, plan = rho(mu, nu)
    np.testing.assert_allclose(plan.plan.sum(axis=1), mu.weights, atol=1e-12)
    np.testing.assert_allclose(plan.plan.sum(axis=0), nu.weights, atol=1e-12)
    assert plan.rounding_error == 0


def test_rounding_reported_beyond_cap():
    w = np.array([1 / 3 + 1e-9, 2 / 3 - 1e-9])
    _, plan = rho(EmpiricalMeasure([[0.0], [1.0]], w), EmpiricalMeasure([[0.0]], [1.0]))
    assert 0 < plan.rounding_error < 1e-6


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        rho(EmpiricalMeasure.uniform([[0.0]]), EmpiricalMeasure.uniform([[0.0, 1.0]]))


def test_convergence_surrogate_monotone():
    nu = EmpiricalMeasure.uniform([[0.0, 0.0], [1.0, 1.0], [2.0, -1.0]])
    direction = np.array([[1.0, 0.0], [0.0, -1.0], [0.6, 0.8]])
    vals = [rho(EmpiricalMeasure.uniform(nu.atoms + s * direction), nu)[0] for s in (1.0, 0.5, 0.1, 0.01)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(0.01 / 1.01, rel=1e-12)
