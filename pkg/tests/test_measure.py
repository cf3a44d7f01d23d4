import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from truncmoment import (AtomicMeasure, MomentSequence, build_gram, generate_problem, integrate_monomial,
                         moments_of, rectangle_set, simplex_set, sumset, verify_solution)
from truncmoment.gram import check_conditions

MU31 = AtomicMeasure.from_atoms([((0.0, 1.0), 1.0), ((2.0, 0.0), 2.0)])
MU41 = AtomicMeasure.from_atoms([((1.0, 0.0), 1.0), ((1.0, 4.0), 3.0)])
MU42 = AtomicMeasure.from_atoms([((0.0, 1.0), 1.0), ((1.0, 0.0), 1.0), ((2.0, 1.0), 1.0)])


def test_integrate_examples():
    assert integrate_monomial(MU31, (0, 0)) == 3.0
    assert integrate_monomial(MU31, (3, 0)) == 16.0
    assert integrate_monomial(MU41, (0, 2)) == 48.0
    assert integrate_monomial(AtomicMeasure.from_atoms([], 2), (1, 1)) == 0.0


def test_integrate_zero_power_convention():
    mu = AtomicMeasure.from_atoms([((0.0, 0.0), 2.5)])
    assert integrate_monomial(mu, (0, 0)) == 2.5
    assert integrate_monomial(mu, (1, 0)) == 0.0


def test_integrate_dimension_mismatch():
    with pytest.raises(ValueError):
        integrate_monomial(MU31, (1, 0, 0))


def test_oracle_matches_fixture_moments(ex31, ex41, ex42):
    for mu, S in ((MU31, ex31), (MU41, ex41), (MU42, ex42)):
        ok, err, _ = verify_solution(mu, S)
        assert ok and err <= 1e-9


def test_verify_reports_perturbed_index(ex42):
    vals = dict(ex42.values)
    vals[(2, 1)] += 1.0
    ok, err, worst = verify_solution(MU42, MomentSequence(ex42.K, vals))
    assert not ok
    assert worst == (2, 1)
    assert err == pytest.approx(1.0)


def test_oracle_is_compensated():
    # naive left-to-right summation loses the small term entirely
    mu = AtomicMeasure.from_atoms([((1.0,), 1e16), ((1.0,), 1.0), ((1.0,), -1e16)])
    assert integrate_monomial(mu, (1,)) == 1.0


def test_generate_zero_atoms():
    P = generate_problem(2, rectangle_set((1, 1)), 0, seed=3)
    assert all(v == 0.0 for v in P.moments.values.values())


def test_generate_atom_at_origin():
    mu = AtomicMeasure.from_atoms([((0.0, 0.0), 0.7)])
    S = moments_of(mu, rectangle_set((1, 1)))
    assert S.s0 == 0.7
    assert all(v == 0.0 for k, v in S.values.items() if any(k))


def test_generate_fixed_instance_passes_conditions():
    P = generate_problem(2, rectangle_set((2, 2)), 3, seed=7)
    assert check_conditions(build_gram(P.moments)).ok


def test_generate_reproducible():
    a = generate_problem(3, simplex_set(3, 2), 4, seed=11)
    b = generate_problem(3, simplex_set(3, 2), 4, seed=11)
    assert np.array_equal(a.truth.points, b.truth.points)
    assert np.array_equal(a.truth.weights, b.truth.weights)
    assert a.moments.values == b.moments.values


def test_generate_respects_ranges():
    P = generate_problem(2, rectangle_set((1, 1)), 4, coordinate_range=(-0.5, 0.5), seed=2)
    assert np.all(np.abs(P.truth.points) <= 0.5)
    assert np.all((P.truth.weights >= 0.1) & (P.truth.weights <= 2.0))
    d = np.linalg.norm(P.truth.points[:, None] - P.truth.points[None], axis=-1)
    assert d[np.triu_indices(4, 1)].min() >= 1e-2


def test_generate_too_many_atoms():
    with pytest.raises(ValueError, match="cannot place"):
        generate_problem(1, rectangle_set((1,)), 5, coordinate_range=(0.0, 0.02), seed=0, max_tries=200)


@settings(max_examples=40)
@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 2)), min_size=0, max_size=3),
       st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 2)), min_size=0, max_size=3))
def test_oracle_linearity(a, b):
    mu1 = AtomicMeasure(np.array([x[:2] for x in a]).reshape(-1, 2), np.array([x[2] for x in a]), 2)
    mu2 = AtomicMeasure(np.array([x[:2] for x in b]).reshape(-1, 2), np.array([x[2] for x in b]), 2)
    both = AtomicMeasure(np.vstack([mu1.points, mu2.points]), np.concatenate([mu1.weights, mu2.weights]), 2)
    for k in sumset(rectangle_set((1, 1))):
        lhs = integrate_monomial(both, k)
        rhs = integrate_monomial(mu1, k) + integrate_monomial(mu2, k)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
