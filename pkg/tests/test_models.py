import numpy as np
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from swanson_ssusy.expr import evaluate, parse
from swanson_ssusy.grid import Grid, sample
from swanson_ssusy.models import (
    CPRS_SUPERPOTENTIAL,
    ChoiceError,
    CPRSChoice,
    IsotonicChoice,
    coordinate_map,
    cprs_audit,
    cprs_eigenfunction,
    cprs_family,
    cprs_operator,
    cprs_potential_route_A,
    cprs_reference,
    eigen_residual,
    isotonic_audit,
    isotonic_family,
    riccati_integrate,
    transport_wavefunction,
)
from swanson_ssusy.operators import sturm_liouville_matrix
from swanson_ssusy.spectral import eigen_symmetric


def _entry(audit, fid):
    return next(e for e in audit["entries"] if e["formula_id"] == fid)


def test_cprs_reference_polynomials():
    # P_0 = 1, P_3 = 8y^3 + 12y, P_4 = 16y^4 + 16y^2 - 4 in the power basis
    assert cprs_reference(0).coefficients == (1,)
    assert cprs_reference(3).coefficients == (0, 12, 0, 8)
    assert cprs_reference(4).coefficients == (-4, 0, 16, 0, 16)
    for n in (1, 2):
        with pytest.raises(ChoiceError):
            cprs_reference(n)


@pytest.mark.parametrize("n", [0, 3, 4, 5, 6])
def test_cprs_reference_solves_ode(n):
    y = sympy.Symbol("y")
    ref = cprs_reference(n)
    P = sum(c * y**i for i, c in enumerate(ref.coefficients))
    phi = P * sympy.exp(-y**2 / 2) / (2 * y**2 + 1)
    U = y**2 + 8 * (2 * y**2 - 1) / (2 * y**2 + 1) ** 2
    assert sympy.simplify(-sympy.diff(phi, y, 2) + U * phi - ref.energy * phi) == 0


def test_superpotential_closure():
    assert CPRS_SUPERPOTENTIAL.closure_residual(np.linspace(-6, 6, 301)) < 1e-12


def test_cprs_choice_validation():
    with pytest.raises(ChoiceError):
        CPRSChoice(kappa=1.0)
    with pytest.raises(ChoiceError):
        CPRSChoice(alpha=0.3)
    ch = CPRSChoice(alpha=0.25)
    assert ch.omega_tilde == pytest.approx(0.5)


def test_route_A_reduces_to_cprs_at_kappa_zero():
    x = np.linspace(-4, 4, 41)
    U = x**2 + 8 * (2 * x**2 - 1) / (2 * x**2 + 1) ** 2
    np.testing.assert_allclose(evaluate(cprs_potential_route_A(CPRSChoice()), x), U, atol=1e-13)


def test_cprs_kappa_zero_closed_forms():
    fam = cprs_family(CPRSChoice())
    x = np.linspace(0.3, 6, 50)
    route_A = evaluate(cprs_potential_route_A(CPRSChoice()), x)
    assert np.max(np.abs(evaluate(fam.quoted_forms["V_plus_minus"], x) - route_A)) <= 1e-12
    assert np.max(np.abs(evaluate(fam.quoted_forms["V_bar"], x) - (2 / x**2 + x**2 + 2))) <= 1e-12


def test_cprs_operator_spectrum():
    ch = CPRSChoice()
    vals = eigen_symmetric(cprs_operator(ch, ch.default_grid(2000)), 3).eigenvalues
    np.testing.assert_allclose(vals, [-3, 3, 5], atol=5e-4)


def test_cprs_audit_is_deterministic():
    ch = CPRSChoice()
    g = ch.default_grid(1000)
    a1, a2 = cprs_audit(ch, g), cprs_audit(ch, g)
    assert a1 == a2
    assert _entry(a1, "constraint")["max_dev"] > 0
    assert _entry(a1, "v_plus_exact_pair_route")["max_dev"] < 1e-10
    assert all(e["status"] == "measured" for e in a1["entries"])


def test_isotonic_parameters_and_rho():
    ch = IsotonicChoice(alpha=0.2, beta=-0.1, c=1.0, d=1.0)
    g = Grid(0.2, 5.0, 2000)
    audit = isotonic_audit(ch, g)
    assert _entry(audit, "rho_closed_form")["max_dev"] <= 1e-6
    assert _entry(audit, "v_plus_closed_form")["max_dev"] < 1e-10
    assert _entry(audit, "v_plus_similarity_route")["max_dev"] < 1e-10
    with pytest.raises(ChoiceError):
        IsotonicChoice(alpha=0.0, beta=0.0, c=1.0, d=0.0)


def test_isotonic_pair_needs_c3():
    assert isotonic_family(IsotonicChoice(alpha=0.0, beta=0.0, c=0.0, d=1.0)).pair is not None
    degenerate = IsotonicChoice(alpha=-0.25, beta=-0.25, c=1.0, d=1.0)
    assert degenerate.p == 0.0 and degenerate.c3 is None
    fam = isotonic_family(degenerate)
    assert fam.pair is None and "V_minus" not in fam.closed_forms


@given(st.floats(0.05, 0.9))
def test_coordinate_map_closed_form(kappa):
    g = Grid(0.1, 10.0, 2000)
    ch = CPRSChoice(kappa=kappa)
    cm = coordinate_map(ch.a_tilde(), g, kappa, ch.omega_tilde)
    assert cm.max_dev < 1e-6


def test_transport_unit_mass_is_identity():
    g = Grid(-6.0, 6.0, 300)
    psi = transport_wavefunction(lambda z: np.exp(-0.5 * z * z), parse("1"), g, g.points)
    ref = np.exp(-0.5 * g.points**2)
    np.testing.assert_allclose(psi.values, ref / np.sqrt(g.h * np.sum(ref**2)), rtol=1e-12)


@pytest.mark.parametrize("n", [0, 3, 4])
def test_transported_eigenfunctions_kappa_half(n):
    ch = CPRSChoice(kappa=0.5)
    g = Grid(0.5, 10.0, 2000)
    psi = cprs_eigenfunction(ch, n, g)
    assert eigen_residual(cprs_operator(ch, g), psi, cprs_reference(n).energy, buffer=5) <= 1e-3


def test_riccati_constant_solution_and_blowup():
    ch = CPRSChoice()
    g = Grid(0.5, 3.0, 2000)
    sol = riccati_integrate(ch, 1.0, 0.0, g)
    assert np.isfinite(sol.residual) and sol.residual < 1e-6
    big = riccati_integrate(ch, 0.6, 50.0, g)
    assert big.blowup_x and big.blowup_x[0] < 1.0
    assert not big.valid[-1]


def test_riccati_rejects_start_outside():
    with pytest.raises(ChoiceError):
        riccati_integrate(CPRSChoice(), 20.0, 0.0, Grid(0.5, 3.0, 100))


def test_half_line_bar_spectrum():
    g = Grid(0.0, 10.0, 3000)
    H = sturm_liouville_matrix(parse("1"), sample(parse("2/x^2 + x^2 + 2"), Grid(0.0, 10.0, 3000)), g)
    vals = eigen_symmetric(H, 3).eigenvalues
    np.testing.assert_allclose(vals, [7, 11, 15], atol=5e-3)
