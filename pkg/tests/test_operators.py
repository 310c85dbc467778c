import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swanson_ssusy.expr import parse
from swanson_ssusy.grid import Grid, sample
from swanson_ssusy.operators import (
    BandedOperator,
    LadderSpec,
    OperatorError,
    commutator_matrix,
    commutator_residual,
    commutator_symbol,
    compose,
    conjugate_by_weight,
    diagonal_operator,
    identity,
    identity_residual,
    ladder_matrix,
    polynomial,
    sturm_liouville_matrix,
    transpose,
)

small = st.integers(5, 30)


def _random_banded(n, w, seed):
    rng = np.random.default_rng(seed)
    return BandedOperator(Grid(0.0, 1.0, n), rng.standard_normal((2 * w + 1, n)))


@given(small, st.integers(0, 3), st.integers(0, 3), st.integers(0, 10**6))
def test_compose_matches_dense(n, wa, wb, seed):
    A = _random_banded(n, wa, seed)
    B = BandedOperator(A.grid, np.random.default_rng(seed + 1).standard_normal((2 * wb + 1, n)))
    np.testing.assert_allclose(compose(A, B).to_dense(), A.to_dense() @ B.to_dense(), atol=1e-12)


@given(small, st.integers(0, 3), st.integers(0, 10**6))
def test_transpose_and_sparse(n, w, seed):
    A = _random_banded(n, w, seed)
    np.testing.assert_array_equal(transpose(A).to_dense(), A.to_dense().T)
    np.testing.assert_array_equal(A.to_sparse().toarray(), A.to_dense())
    v = np.random.default_rng(seed).standard_normal(n)
    np.testing.assert_allclose(A.matvec(v), A.to_dense() @ v, atol=1e-12)


@given(small, st.integers(1, 3), st.integers(0, 10**6))
def test_gram_product_exactly_symmetric(n, w, seed):
    A = _random_banded(n, w, seed)
    G = compose(transpose(A), A)
    assert G.symmetric
    assert np.array_equal(G.to_dense(), G.to_dense().T)


@given(small, st.integers(0, 2), st.integers(0, 10**6))
def test_conjugation_is_similarity(n, w, seed):
    A = _random_banded(n, w, seed)
    wv = np.exp(np.random.default_rng(seed).uniform(-1, 1, n))
    C = conjugate_by_weight(A, wv).to_dense()
    np.testing.assert_allclose(C, np.diag(wv) @ A.to_dense() @ np.diag(1 / wv), rtol=1e-12, atol=1e-12)


def test_conjugation_rejects_nonpositive_weight():
    A = _random_banded(6, 1, 0)
    with pytest.raises(OperatorError):
        conjugate_by_weight(A, np.array([1, 1, 0, 1, 1, 1.0]))


def test_polynomial_and_identity():
    A = _random_banded(8, 1, 3)
    D = A.to_dense()
    np.testing.assert_allclose(polynomial(A, (2.0, -1.0, 3.0)).to_dense(), 2 * D @ D - D + 3 * np.eye(8), atol=1e-12)
    np.testing.assert_array_equal((identity(A.grid) @ A).to_dense(), D)


def test_ladder_transpose_is_discrete_adjoint():
    g = Grid(-5.0, 5.0, 50)
    s = LadderSpec(parse("1 + x^2/10"), parse("x"))
    eta = ladder_matrix(s, g)
    np.testing.assert_array_equal(ladder_matrix(s, g, "eta_dagger").to_dense(), eta.to_dense().T)
    with pytest.raises(OperatorError):
        ladder_matrix(s, g, "other")


def test_sturm_liouville_symmetric_and_positive_mass():
    g = Grid(-3.0, 3.0, 40)
    H = sturm_liouville_matrix(parse("1 + x^2"), sample(parse("x^2"), g), g)
    assert H.symmetric
    with pytest.raises(OperatorError):
        sturm_liouville_matrix(parse("x"), np.zeros(g.n), g)


def test_ladder_product_matches_sturm_liouville_form():
    # eta^T eta with a = 1, b = 0 is the standard 3-point Laplacian spread over two cells
    g = Grid(-1.0, 1.0, 30)
    s = LadderSpec(parse("1"), parse("0"))
    eta = ladder_matrix(s, g)
    prod = compose(transpose(eta), eta)
    assert prod.bandwidth == 2
    assert np.allclose(prod.diagonal(2)[1:-1], -1 / (4 * g.h**2))


@pytest.mark.parametrize(
    "a, b, domain",
    [("1", "x", (-8.0, 8.0)), ("1/sqrt(2)", "x/sqrt(2)", (-8.0, 8.0)), ("x^2", "1/x + x/(x^2 + 1)", (0.2, 5.0))],
)
def test_commutator_law_second_order(a, b, domain):
    s = LadderSpec(parse(a), parse(b))
    r1 = commutator_residual(s, Grid(*domain, 1000))
    r2 = commutator_residual(s, Grid(*domain, 2000))
    assert r2 < 1e-3
    assert 3.5 <= r1 / r2 <= 4.5


def test_commutator_symbol_constant_for_oscillator():
    s = LadderSpec(parse("1"), parse("x"))
    g = Grid(-2.0, 2.0, 20)
    assert np.allclose(sample(commutator_symbol(s), g).values, 2.0)
    C = commutator_matrix(s, g)
    assert C.bandwidth == 2


def test_identity_residual_detects_difference():
    g = Grid(-5.0, 5.0, 400)
    A = diagonal_operator(np.ones(g.n), g)
    B = diagonal_operator(np.full(g.n, 1.1), g)
    assert identity_residual(A, B) == pytest.approx(0.1 / 1.1, rel=1e-12)
    with pytest.raises(OperatorError):
        identity_residual(A, B, buffer=200)
