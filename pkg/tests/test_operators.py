import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from truncmoment import MomentSequence, build_gram, generate_problem, rectangle_set
from truncmoment.hilbert import check_dimensional_stability, gram_schmidt
from truncmoment.operators import (CommutativityError, ParametricHermitianMatrix, build_defined_action,
                                   commutator_residual, hermiticity_residual, parametrize_extension,
                                   solve_commutativity, solve_hermiticity, stable_matrices)

from conftest import EX41_ALPHA_211, EX42_ALPHA_122, SQ2, SQ3


def _setup(S):
    G = build_gram(S)
    B = gram_schmidt(G, range(len(S.K)))
    return S.K, G, B


def _reduced(S):
    K, G, B = _setup(S)
    return [solve_hermiticity(parametrize_extension(K, G.omega, B, G, l)) for l in range(1, K.dimension + 1)]


def test_defined_action_example41(ex41):
    K, G, B = _setup(ex41)
    a1 = build_defined_action(K, G.omega, B, 1)
    a2 = build_defined_action(K, G.omega, B, 2)
    # M_1 g_0 = g_2, M_1 g_1 = g_3; M_2 g_0 = g_1, M_2 g_2 = g_3
    assert set(a1) == {0, 1} and set(a2) == {0, 2}
    np.testing.assert_allclose(a1[0][1], B.D[2])
    np.testing.assert_allclose(a1[1][1], B.D[3])
    np.testing.assert_allclose(a2[0][1], B.D[1])
    np.testing.assert_allclose(a2[2][1], B.D[3])


def test_defined_action_example31_image_of_g0(ex31):
    K, G, B = _setup(ex31)
    image = build_defined_action(K, G.omega, B, 1)[0][1]
    # g_3 = 2 g_0 - 2 g_1
    np.testing.assert_allclose(image, 2 * B.D[0] - 2 * B.D[1], atol=1e-12)


def test_defined_action_trivial_truncation():
    K = rectangle_set((0, 0))
    S = MomentSequence(K, {(0, 0): 1.0})
    K, G, B = _setup(S)
    assert build_defined_action(K, G.omega, B, 1) == {}


def test_stable_matrices_example31(ex31):
    G = build_gram(ex31)
    stable, B0, _ = check_dimensional_stability(G)
    ops = stable_matrices(ex31.K, G.omega, B0, G)
    M1 = np.array([[4 / 3, -2 * SQ2 / 3], [-2 * SQ2 / 3, 2 / 3]])
    M2 = np.array([[1 / 3, SQ2 / 3], [SQ2 / 3, 2 / 3]])
    np.testing.assert_allclose(ops.matrices[0], M1, atol=1e-12)
    np.testing.assert_allclose(ops.matrices[1], M2, atol=1e-12)


def test_stable_matrices_atom_at_origin():
    K = rectangle_set((1, 1))
    S = MomentSequence.from_function(K, lambda k: 1.0 if k == (0, 0) else 0.0)
    G = build_gram(S)
    stable, B0, _ = check_dimensional_stability(G)
    ops = stable_matrices(K, G.omega, B0, G)
    for M in ops.matrices:
        np.testing.assert_array_equal(M, [[0.0]])


def test_parametrize_example41(ex41):
    K, G, B = _setup(ex41)
    P1 = parametrize_extension(K, G.omega, B, G, 1)
    assert P1.num_params == 0
    np.testing.assert_allclose(P1.evaluate(), np.eye(2), atol=1e-12)
    P2 = parametrize_extension(K, G.omega, B, G, 2)
    assert sorted(P2.param_ids) == ["alpha:2:1,0", "alpha:2:1,1", "beta:2:1,0", "beta:2:1,1"]


def test_parametrize_example42_counts(ex42):
    K, G, B = _setup(ex42)
    counts = [parametrize_extension(K, G.omega, B, G, l).num_params for l in (1, 2)]
    assert counts == [6, 6]


def test_hermiticity_example41(ex41):
    P2 = _reduced(ex41)[1]
    assert P2.param_ids == ["alpha:2:1,1"]
    vals = P2.resolve({"alpha:2:1,1": 0.0})
    assert vals["beta:2:1,0"] == 0 and vals["beta:2:1,1"] == 0
    # own normalisation of the free image; the printed constant differs
    assert vals["alpha:2:1,0"] == pytest.approx(24.0, abs=1e-12)
    np.testing.assert_allclose(P2.evaluate({"alpha:2:1,1": EX41_ALPHA_211}),
                               [[3, SQ3], [SQ3, 1]], atol=1e-12)


def test_hermiticity_example42(ex42):
    P1, P2 = _reduced(ex42)
    assert P1.param_ids == ["alpha:1:2,2"]
    assert P2.param_ids == ["alpha:2:1,1"]
    vals = {**P1.resolve({}), **P2.resolve({})}
    for pid, v in vals.items():
        if pid.startswith("beta"):
            assert v == 0.0
    assert vals["alpha:1:2,0"] == pytest.approx(5 / SQ3, abs=1e-12)
    assert vals["alpha:1:2,1"] == pytest.approx(np.sqrt(2 / 3), abs=1e-12)
    assert vals["alpha:2:1,0"] == pytest.approx(2 / SQ3, abs=1e-12)
    assert vals["alpha:2:1,2"] == pytest.approx(0.0, abs=1e-12)
    # the affine forms left after the Hermiticity constraints
    for a in (-1.0, 0.0, 2.5):
        M1 = P1.evaluate({"alpha:1:2,2": a})
        expected = np.array([[1, 0, np.sqrt(2 / 3)], [0, 1, 1 / SQ3], [np.sqrt(2 / 3), 1 / SQ3, a / SQ2 - 1]])
        np.testing.assert_allclose(M1, expected, atol=1e-12)
        M2 = P2.evaluate({"alpha:2:1,1": a})
        expected = np.array([[2 / 3, SQ2 / 3, 0], [SQ2 / 3, np.sqrt(1.5) * a - 2 / 3, 0], [0, 0, 1]])
        np.testing.assert_allclose(M2, expected, atol=1e-12)


def test_hermiticity_leaves_parameter_free_input_alone():
    M = np.array([[1.0, 2.0], [2.0, -1.0]], dtype=complex)
    P = solve_hermiticity(ParametricHermitianMatrix(axis=1, const=M))
    np.testing.assert_array_equal(P.evaluate(), M)
    assert P.num_params == 0


@pytest.mark.parametrize("name", ["ex41", "ex42"])
def test_hermitian_and_affine_at_random_parameters(name, request):
    rng = np.random.default_rng(0)
    for P in _reduced(request.getfixturevalue(name)):
        M0 = P.evaluate()
        for _ in range(10):
            p = rng.normal(size=P.num_params) * 5
            q = rng.normal(size=P.num_params) * 5
            Mp = P.evaluate(p)
            assert hermiticity_residual(Mp) <= 1e-10 * max(1.0, np.linalg.norm(Mp, 2))
            lhs = P.evaluate(p + q) - M0
            np.testing.assert_allclose(lhs, (Mp - M0) + (P.evaluate(q) - M0), atol=1e-10)
            np.testing.assert_allclose(P.evaluate(2.5 * p) - M0, 2.5 * (Mp - M0), atol=1e-10)


def test_extension_agrees_with_defined_action(ex42):
    K, G, B = _setup(ex42)
    for l, P in enumerate(_reduced(ex42), start=1):
        M = P.evaluate({"alpha:1:2,2": 0.7, "alpha:2:1,1": -0.3})
        for j, (u, img) in build_defined_action(K, G.omega, B, l).items():
            np.testing.assert_allclose(M @ u, img, atol=1e-12)


def test_commutativity_example41(ex41):
    Ps = _reduced(ex41)
    ops = solve_commutativity(Ps, {"alpha:2:1,1": EX41_ALPHA_211})
    np.testing.assert_allclose(ops.matrices[0], np.eye(2), atol=1e-12)
    np.testing.assert_allclose(ops.matrices[1], [[3, SQ3], [SQ3, 1]], atol=1e-12)
    # with M_1 = I any value commutes
    ops = solve_commutativity(Ps)
    assert ops.max_commutator <= 1e-12


def test_commutativity_example42_forces_parameter(ex42):
    ops = solve_commutativity(_reduced(ex42), {"alpha:1:2,2": EX42_ALPHA_122})
    assert ops.chosen_params["alpha:2:1,1"] == pytest.approx(np.sqrt(2 / 3), abs=1e-9)
    M1 = np.array([[1, 0, np.sqrt(2 / 3)], [0, 1, 1 / SQ3], [np.sqrt(2 / 3), 1 / SQ3, 1]])
    M2 = np.array([[2 / 3, SQ2 / 3, 0], [SQ2 / 3, 1 / 3, 0], [0, 0, 1]])
    np.testing.assert_allclose(ops.matrices[0], M1, atol=1e-10)
    np.testing.assert_allclose(ops.matrices[1], M2, atol=1e-10)


def test_commutativity_diagonal_inputs():
    Ps = [ParametricHermitianMatrix(axis=l, const=np.diag(d).astype(complex))
          for l, d in ((1, [1.0, 2.0]), (2, [5.0, -1.0]))]
    ops = solve_commutativity(Ps)
    assert ops.max_commutator == 0.0
    assert ops.method == "direct"


def test_commutativity_failure_reports_best():
    # two fixed, non-commuting matrices: nothing to tune
    A = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    Bm = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    with pytest.raises(CommutativityError) as info:
        solve_commutativity([ParametricHermitianMatrix(1, A), ParametricHermitianMatrix(2, Bm)])
    assert info.value.best.max_commutator == pytest.approx(commutator_residual(A, Bm))


@settings(max_examples=40)
@given(n=st.integers(2, 3), d=st.integers(1, 2), atoms=st.integers(1, 4), seed=st.integers(0, 10**6))
def test_stable_rectangle_matrices_commute(n, d, atoms, seed):
    P = generate_problem(n, rectangle_set((d,) * n), atoms, seed=seed)
    G = build_gram(P.moments)
    stable, B0, _ = check_dimensional_stability(G)
    if not stable:
        return
    ops = stable_matrices(P.K, G.omega, B0, G)
    assert ops.max_commutator <= 1e-8
