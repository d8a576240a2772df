from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from numpy.polynomial import hermite_e
from scipy.special import eval_hermitenorm

from koopman_pe.dictionary import (dictionary_from_descriptor, hermite_dictionary, hermite_table, lift,
                                   lift_trajectory, monomial_dictionary, multi_indices, rbf_dictionary,
                                   state_dictionary)
from koopman_pe.errors import DimensionError, SizeError
from koopman_pe.ode_sim import repressilator_field, simulate, trajectory_from_samples

finite = st.floats(-5, 5, allow_nan=False)


def test_scalar_degree_two_functions():
    d = hermite_dictionary(1, 2)
    assert d.n_lifted == 3
    assert d.labels() == ["x1", "1", "He2(x1)"]
    assert np.allclose(lift(d, [3.0]), [3.0, 1.0, 8.0])


def test_hermite_84_for_six_states_degree_three():
    assert hermite_dictionary(6, 3).n_lifted == 84 == comb(9, 3)


def test_hermite_values_at_two():
    He = hermite_table(2.0, 3)
    assert He[2] == 3.0 and He[3] == 2.0


def test_scalar_degree_three_lift():
    assert np.array_equal(lift(hermite_dictionary(1, 3), [2.0]), [2.0, 1.0, 3.0, 2.0])


def test_two_state_degree_two_at_origin():
    d = hermite_dictionary(2, 2)
    v = lift(d, [0.0, 0.0])
    labels = d.labels()
    assert np.array_equal(v[:2], [0, 0])
    assert v[labels.index("1")] == 1
    assert v[labels.index("He2(x1)")] == -1 and v[labels.index("He2(x2)")] == -1
    assert v[labels.index("He1(x1)*He1(x2)")] == 0


def test_graded_lex_order_within_degree():
    assert multi_indices(2, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


@settings(max_examples=60)
@given(st.integers(0, 8), finite)
def test_table_matches_scipy(k, x):
    assert hermite_table(x, 8)[k] == pytest.approx(eval_hermitenorm(k, x), rel=1e-12, abs=1e-9)


@settings(max_examples=60)
@given(finite)
def test_recurrence_residual(x):
    He = hermite_table(x, 6)
    for k in range(1, 6):
        assert abs(He[k + 1] - x * He[k] + k * He[k - 1]) < 1e-10


@pytest.mark.parametrize("n", range(1, 9))
@pytest.mark.parametrize("d", range(1, 5))
def test_count_law(n, d):
    assert hermite_dictionary(n, d).n_lifted == comb(n + d, d)
    assert monomial_dictionary(n, d).n_lifted == comb(n + d, d)


def test_size_cap():
    with pytest.raises(SizeError):
        hermite_dictionary(20, 6, cap=10_000)


@settings(max_examples=100)
@given(arrays(np.float64, 6, elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_state_block_is_bitwise_copy(x):
    v = lift(hermite_dictionary(6, 3), x)
    assert v[:6].tobytes() == x.tobytes()


@settings(max_examples=40)
@given(arrays(np.float64, 3, elements=finite))
def test_products_match_numpy_hermite_e(x):
    d = hermite_dictionary(3, 3)
    v = lift(d, x)
    for row, a in enumerate(d.exponents):
        ref = np.prod([hermite_e.hermeval(x[i], [0] * k + [1]) for i, k in enumerate(a)])
        assert v[row] == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_nan_propagates_to_dependent_entries():
    d = hermite_dictionary(2, 2)
    v = lift(d, [np.nan, 1.0])
    for lab, val in zip(d.labels(), v):
        assert np.isnan(val) == ("x1" in lab)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        lift(hermite_dictionary(2, 2), [1.0, 2.0, 3.0])


def test_constant_trajectory_gives_identical_columns():
    L = lift_trajectory(hermite_dictionary(6, 3), trajectory_from_samples(np.zeros((3, 6))))
    assert L.shape == (84, 3)
    assert np.array_equal(L[:, 0], L[:, 1]) and np.array_equal(L[:, 1], L[:, 2])


def test_single_sample_trajectory():
    d = hermite_dictionary(2, 3)
    x = np.array([[0.3, -1.2]])
    L = lift_trajectory(d, trajectory_from_samples(x))
    assert L.shape == (d.n_lifted, 1)
    assert np.array_equal(L[:, 0], lift(d, x[0]))


def test_columns_equal_pointwise_lift():
    d = hermite_dictionary(3, 3)
    X = np.random.default_rng(1).normal(size=(7, 3))
    L = lift_trajectory(d, trajectory_from_samples(X))
    for k in range(7):
        assert np.array_equal(L[:, k], lift(d, X[k]))


def _max_coefficient_sum(max_degree):
    # |He_a(x)| <= (sum of |coefficients|) * max(1, |x|)**deg, multiplied over factors
    sums = [np.abs(hermite_e.herme2poly([0] * k + [1])).sum() for k in range(max_degree + 1)]
    best = 0.0
    for a in multi_indices(6, max_degree):
        best = max(best, float(np.prod([sums[k] for k in a])))
    return best


def test_repressilator_lift_respects_coefficient_bound():
    c = _max_coefficient_sum(3)
    assert c == 4.0
    tr = simulate(repressilator_field(), [1, 0, 0, 0, 0, 0], 0.0, 25.0)
    L = lift_trajectory(hermite_dictionary(6, 3), tr)
    bound = max(max(1.0, np.abs(x).max()) ** 3 for x in tr.states) * c
    assert np.all(np.isfinite(L))
    assert np.abs(L).max() <= bound


def test_monomial_and_rbf_are_state_inclusive():
    x = np.array([0.5, -2.0])
    assert np.array_equal(lift(monomial_dictionary(2, 3), x)[:2], x)
    r = rbf_dictionary([[0.0, 0.0], [1.0, 1.0]], 0.5)
    v = lift(r, x)
    assert v.shape == (4,) and np.array_equal(v[:2], x)
    assert v[2] == pytest.approx(np.exp(-(0.25 + 4.0) / 0.5))


@pytest.mark.parametrize("d", [hermite_dictionary(3, 2), monomial_dictionary(2, 3), state_dictionary(4),
                               rbf_dictionary([[0.0, 1.0]], 2.0)])
def test_descriptor_roundtrip(d):
    assert dictionary_from_descriptor(d.descriptor()) == d
