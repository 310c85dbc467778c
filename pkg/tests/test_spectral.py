import json

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from swanson_ssusy.expr import parse
from swanson_ssusy.grid import Grid, sample
from swanson_ssusy.operators import BandedOperator, compose, conjugate_by_weight, sturm_liouville_matrix, transpose
from swanson_ssusy.spectral import (
    SpectralError,
    convergence_study,
    eigen_symmetric,
    eigen_via_similarity,
    spectrum_compare,
    sturm_count,
    symmetrized,
    tridiagonal_lowest,
)


def _harmonic(g: Grid) -> BandedOperator:
    return sturm_liouville_matrix(parse("1"), sample(parse("x^2"), g), g)


@given(st.integers(2, 60), st.integers(0, 10**6))
def test_bisection_matches_lapack(n, seed):
    rng = np.random.default_rng(seed)
    d = rng.standard_normal(n) * 10
    e = rng.standard_normal(n - 1)
    k = min(n, 5)
    ref = sla.eigh_tridiagonal(d, e, eigvals_only=True)[:k]
    np.testing.assert_allclose(tridiagonal_lowest(d, e, k), ref, atol=1e-11 * max(1, np.max(np.abs(ref))))


@given(st.integers(2, 40), st.integers(0, 10**6), st.floats(-5, 5))
def test_sturm_count_is_inertia(n, seed, lam):
    rng = np.random.default_rng(seed)
    d = rng.standard_normal(n) * 3
    e = rng.standard_normal(n - 1)
    vals = sla.eigh_tridiagonal(d, e, eigvals_only=True)
    if np.min(np.abs(vals - lam)) < 1e-9:
        return
    assert sturm_count(d, e, lam) == int(np.sum(vals < lam))


def test_harmonic_levels_and_vectors():
    r = eigen_symmetric(_harmonic(Grid(-10.0, 10.0, 2000)), 5, vectors=True)
    np.testing.assert_allclose(r.eigenvalues, [1, 3, 5, 7, 9], atol=3e-4)
    assert r.method == "sturm-bisection"
    assert np.all(r.residuals < 1e-6 * np.abs(r.eigenvalues).max() + 1e-8)


def test_pentadiagonal_uses_dense_path():
    g = Grid(-8.0, 8.0, 400)
    A = _harmonic(g)
    A2 = compose(A, A)
    r = eigen_symmetric(A2, 3)
    assert r.method == "dense"
    lam = eigen_symmetric(A, 3).eigenvalues
    np.testing.assert_allclose(r.eigenvalues, lam**2, rtol=1e-8)


def test_nonsymmetric_rejected():
    g = Grid(-1.0, 1.0, 20)
    A = conjugate_by_weight(_harmonic(g), np.exp(g.points))
    with pytest.raises(SpectralError):
        eigen_symmetric(A, 3)


def test_similarity_route_and_wrong_weight():
    g = Grid(-8.0, 8.0, 800)
    H = _harmonic(g)
    w = np.exp(0.3 * g.points)
    nonsym = conjugate_by_weight(H, 1.0 / w)
    r = eigen_via_similarity(nonsym, w, 4)
    np.testing.assert_allclose(r.eigenvalues, eigen_symmetric(H, 4).eigenvalues, rtol=1e-12)
    with pytest.raises(SpectralError):
        symmetrized(nonsym, np.exp(0.2 * g.points))


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12, unique=True))
def test_compare_with_itself(levels):
    cmp = spectrum_compare(levels, levels, 1e-9)
    assert cmp.ok and cmp.max_deviation == 0.0
    assert len(cmp.matched) == len(levels)


def test_compare_disjoint_lists_all_unmatched():
    cmp = spectrum_compare([0.0, 1.0, 2.0], [0.5, 1.5, 2.5], 1e-3, allow_missing=1)
    assert not cmp.ok
    assert not cmp.matched
    assert len(cmp.unmatched_first) + len(cmp.unmatched_second) > 1


def test_spectrum_serialization():
    r = eigen_symmetric(_harmonic(Grid(-6.0, 6.0, 300)), 3)
    d = json.loads(r.to_json())
    assert d["k"] == 3 and len(d["eigenvalues"]) == 3
    assert r.to_csv().splitlines()[0] == "index,eigenvalue"


def test_convergence_study_order_two():
    grids = [Grid(-10.0, 10.0, n) for n in (1000, 2000, 4000)]
    out = convergence_study(_harmonic, grids, 3, reference=[1.0, 3.0, 5.0])
    for lv in out["levels"]:
        assert abs(lv["order"] - 2.0) < 0.3
        assert abs(lv["order_vs_reference"] - 2.0) < 0.3


def test_convergence_study_validation():
    with pytest.raises(SpectralError):
        convergence_study(_harmonic, [Grid(-1, 1, 10), Grid(-1, 1, 20)], 1)
    with pytest.raises(SpectralError):
        convergence_study(_harmonic, [Grid(-1, 1, 10), Grid(-2, 2, 20), Grid(-1, 1, 40)], 1)
    with pytest.raises(SpectralError):
        convergence_study(_harmonic, [Grid(-1, 1, 40), Grid(-1, 1, 20), Grid(-1, 1, 80)], 1)


def test_transpose_preserves_spectrum():
    g = Grid(-5.0, 5.0, 200)
    H = _harmonic(g)
    np.testing.assert_array_equal(eigen_symmetric(transpose(H), 3).eigenvalues, eigen_symmetric(H, 3).eigenvalues)
