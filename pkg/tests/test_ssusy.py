import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from swanson_ssusy.expr import Const, evaluate, parse
from swanson_ssusy.grid import Grid
from swanson_ssusy.spectral import eigen_symmetric, spectrum_compare
from swanson_ssusy.ssusy import (
    FactorPair,
    QuasiError,
    QuasiSpec,
    anticommutator_blocks,
    build_triplet,
    compatibility_form,
    constraint_report,
    constraint_residual,
    product_potential,
    verify,
)

XS = np.linspace(0.5, 2.5, 17)


def test_quasi_energies_and_polynomial():
    assert QuasiSpec.perfect_square(-3).energies == (-3.0, -3.0)
    assert QuasiSpec.split_c(-2).energies == (-1.0, 1.0)
    e1, e2 = QuasiSpec.general(2.0, 3.0).energies
    assert (e1, e2) == pytest.approx((3.0, 1.0))
    assert QuasiSpec.general(2.0, 3.0).poly == pytest.approx((1.0, -4.0, 3.0))
    with pytest.raises(QuasiError):
        QuasiSpec.general(1.0, 2.0)
    with pytest.raises(QuasiError):
        QuasiSpec("other")


@settings(max_examples=15)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.5, 2.0))
def test_product_potentials_match_sympy(c1, c2, k):
    x = sympy.Symbol("x")
    at = 1 + k * x**2
    b = c1 * x + c2 / x
    f = sympy.exp(x / 3)  # any non-vanishing probe; the ratio is the potential
    xi = lambda u: at * sympy.diff(u, x) + b * u
    xid = lambda u: -sympy.diff(at * u, x) + b * u
    first = sympy.simplify((xid(xi(f)) + sympy.diff(at**2 * sympy.diff(f, x), x)) / f)
    last = sympy.simplify((xi(xid(f)) + sympy.diff(at**2 * sympy.diff(f, x), x)) / f)
    a_e, b_e = parse(f"1 + {k}*x^2"), parse(f"{c1}*x + {c2}/x")
    for order, ref in (("dagger_first", first), ("dagger_last", last)):
        got = evaluate(product_potential(a_e, b_e, order), XS)
        np.testing.assert_allclose(got, sympy.lambdify(x, ref, "numpy")(XS), rtol=1e-9, atol=1e-9)


def test_oscillator_chain_potentials(chain):
    p, q = chain
    t = build_triplet(p, q)
    x = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(evaluate(t.V_plus, x), x**2 - 2, atol=1e-14)
    np.testing.assert_allclose(evaluate(t.V_bar, x), x**2, atol=1e-14)
    np.testing.assert_allclose(evaluate(t.V_minus, x), x**2 + 2, atol=1e-14)
    rep = constraint_report(p, q, Grid(-5, 5, 100))
    assert rep.identically_zero


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 1))
def test_compatibility_form_is_negated_residual(c1, c2, c):
    p = FactorPair(parse("1 + x^2/4"), parse(f"x + {c1}"), parse(f"{c2}*x"))
    q = QuasiSpec.split_c(c)
    np.testing.assert_allclose(
        evaluate(compatibility_form(p, q), XS), -evaluate(constraint_residual(p, q), XS), atol=1e-10
    )


def test_chain_identities_converge(chain):
    p, q = chain
    r1 = verify(p, q, Grid(-10, 10, 1000))
    r2 = verify(p, q, Grid(-10, 10, 2000))
    for key in ("intertwine", "intertwine_plus", "intertwine_minus", "quasi_plus", "quasi_minus"):
        assert r2[key] < 1e-4
        assert 3.5 <= r1[key] / r2[key] <= 4.5, key
    assert r2["nilpotency"] == 0.0


def test_perturbed_chain_fails(chain):
    p, q = chain
    bad = FactorPair(p.a_tilde, p.b1, parse("x + 0.1"))
    r = verify(bad, q, Grid(-10, 10, 2000))
    assert r["intertwine"] >= 1e-2
    assert r["quasi_plus"] >= 1e-2
    assert constraint_report(bad, q, Grid(-10, 10, 200)).max_abs > 0


def test_anticommutator_is_block_diagonal(chain):
    p, _ = chain
    blocks = anticommutator_blocks(p, Grid(-5, 5, 200))
    assert blocks["block_gap"] == 0.0
    assert blocks["asymmetry"] == 0.0


def test_chain_isospectral_with_edge_state(chain):
    p, q = chain
    mats = build_triplet(p, q).matrices(Grid(-10, 10, 2000))
    spec = {k: eigen_symmetric(v, 8).eigenvalues for k, v in mats.items()}
    for lo, hi in (("h_plus", "h_bar"), ("h_bar", "h_minus")):
        cmp = spectrum_compare(spec[lo], spec[hi], 1e-3, allow_missing=1)
        assert cmp.ok
        assert len(cmp.unmatched_first) == 1 and not cmp.unmatched_second
        assert cmp.unmatched_first[0] == pytest.approx(spec[lo][0])
        np.testing.assert_allclose(cmp.gaps, 2.0, atol=1e-2)
        assert not spectrum_compare(spec[lo], spec[hi], 1e-3, allow_missing=0).ok


def test_chain_constraint_vanishes_pointwise():
    p = FactorPair(Const(1.0), parse("x"), parse("x"))
    x = np.linspace(-4, 4, 33)
    np.testing.assert_array_equal(evaluate(constraint_residual(p, QuasiSpec.split_c(-2.0)), x), 0.0)
