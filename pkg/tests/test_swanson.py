import numpy as np
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from swanson_ssusy.expr import evaluate, parse
from swanson_ssusy.grid import Grid, sample
from swanson_ssusy.operators import LadderSpec
from swanson_ssusy.spectral import eigen_symmetric, eigen_via_similarity
from swanson_ssusy.swanson import (
    ModelError,
    SwansonModel,
    SwansonParams,
    harmonic_spacing,
    hermitian_matrix,
    hermitian_potential,
    log_rho,
    metric_entry_residual,
    metric_residual,
    nonhermitian_matrix,
    rho_weight,
    similarity_matrix,
    similarity_potential,
    similarity_residual,
)

XS = np.linspace(0.4, 2.5, 23)
coef = st.integers(-3, 3).map(lambda v: v / 2)
weights = st.tuples(st.floats(0.5, 2.0), st.floats(-0.2, 0.2), st.floats(-0.2, 0.2))  # keeps w - alpha - beta >= 0.1


def _sym_V_plus(w, al, be, a_text, b_text):
    """Independent sympy reduction of the similarity transform of H~."""
    x = sympy.Symbol("x")
    a = sympy.sympify(a_text.replace("^", "**"))
    b = sympy.sympify(b_text.replace("^", "**"))
    wt = w - al - be
    at2 = wt * a**2
    bt = (al - be) * a * (2 * b - sympy.diff(a, x))
    ct = (
        -w * sympy.diff(a * b, x)
        + (al + w) * b**2
        + al * a * sympy.diff(b, x)
        - be * a * sympy.diff(b - sympy.diff(a, x), x)
        + be * (b - sympy.diff(a, x)) ** 2
        + sympy.Rational(1, 2) * w
    )
    return sympy.lambdify(x, ct - sympy.diff(bt, x) / 2 + bt**2 / (4 * at2), "numpy")


def test_params_validation():
    with pytest.raises(ModelError):
        SwansonParams(1.0, 0.6, 0.5)
    with pytest.raises(ModelError):
        SwansonParams(float("nan"), 0.0, 0.0)
    assert SwansonParams(1.0, 0.1, -0.1).omega_tilde == pytest.approx(1.0)


@given(weights, coef, coef, coef)
def test_hermitian_potential_matches_sympy_similarity(wab, c0, c1, c2):
    w, al, be = wab
    a_text = f"1 + {abs(c0)}*x^2"
    b_text = f"{c1}*x + {c2}/x"
    m = SwansonModel(SwansonParams(w, al, be), LadderSpec(parse(a_text), parse(b_text)))
    ref = _sym_V_plus(w, al, be, a_text, b_text)(XS)
    np.testing.assert_allclose(evaluate(hermitian_potential(m), XS), ref, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(evaluate(similarity_potential(m), XS), ref, rtol=1e-9, atol=1e-9)


def test_equal_couplings_give_hermitian_form(oscillator_model):
    m = SwansonModel(SwansonParams(1.0, 0.2, 0.2), oscillator_model.ladder)
    g = Grid(-6.0, 6.0, 200)
    np.testing.assert_array_equal(rho_weight(m, g).values, np.ones(g.n))
    H = nonhermitian_matrix(m, g)
    assert H.symmetric
    np.testing.assert_array_equal(H.bands, hermitian_matrix(m, g).bands)


def test_log_rho_solves_weight_equation(oscillator_model):
    # rho'/rho = -b~/(2 a~^2)
    g = Grid(-8.0, 8.0, 4000)
    lr = log_rho(oscillator_model, g).values
    m = oscillator_model
    target = -0.5 * sample(m.b_tilde, g).values / sample(m.a_tilde_sq, g).values
    d = np.gradient(lr, g.h)
    assert np.max(np.abs(d[2:-2] - target[2:-2])) < 1e-6
    assert lr[0] == 0.0


def test_rho_overflow_guard():
    m = SwansonModel(SwansonParams(1.0, 0.4, -0.4), LadderSpec(parse("1/sqrt(2)"), parse("x/sqrt(2)")))
    with pytest.raises(ModelError):
        rho_weight(m, Grid(-80.0, 80.0, 100))


def test_metric_residual_second_order(oscillator_model):
    g1 = Grid(-10.0, 10.0, 1000)
    g2 = Grid(-10.0, 10.0, 2000)
    r1, r2 = metric_residual(oscillator_model, g1), metric_residual(oscillator_model, g2)
    assert 3.5 <= r1 / r2 <= 4.5
    assert metric_entry_residual(oscillator_model, g2) < metric_entry_residual(oscillator_model, g1)


def test_similarity_residual_small(oscillator_model):
    assert similarity_residual(oscillator_model, Grid(-10.0, 10.0, 2000)) < 1e-4


def test_similarity_spectrum_equals_hermitian(oscillator_model):
    g = Grid(-10.0, 10.0, 2000)
    rho = rho_weight(oscillator_model, g)
    sim = eigen_via_similarity(similarity_matrix(oscillator_model, g), rho, 6).eigenvalues
    her = eigen_symmetric(hermitian_matrix(oscillator_model, g), 6).eigenvalues
    np.testing.assert_allclose(sim, her, rtol=1e-10)


def test_harmonic_spacing_is_sqrt_w2_minus_4ab(oscillator_model):
    x = np.linspace(-5, 5, 21)
    assert harmonic_spacing(oscillator_model, x) == pytest.approx(np.sqrt(1 - 4 * 0.1 * -0.1), rel=1e-12)
    isotonic = SwansonModel(SwansonParams(1.0, 0.0, 0.0), LadderSpec(parse("x^2"), parse("1/x")))
    with pytest.raises(ModelError):
        harmonic_spacing(isotonic, np.linspace(0.5, 3, 11))
