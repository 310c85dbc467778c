import numpy as np
import pytest

from swanson_ssusy.config import oscillator_pair
from swanson_ssusy.grid import Field, Grid
from swanson_ssusy.pseudo import (
    build_pseudo_sector,
    chained_pseudo_adjoint_residual,
    pseudo_adjoint_residual,
    pseudo_intertwining_residual,
    pseudo_nilpotency,
    pseudo_quasi_residual,
    report,
    rho_condition,
    sector_from_weight,
)


@pytest.fixture
def sector(oscillator_model):
    pair, quasi, _, _ = oscillator_pair(oscillator_model)
    return build_pseudo_sector(oscillator_model, pair, quasi, Grid(-10.0, 10.0, 1000)), quasi


def test_pseudo_adjoint_exact(sector):
    s, _ = sector
    assert pseudo_adjoint_residual(s) <= 1e-13
    assert chained_pseudo_adjoint_residual(s) <= 1e-13
    assert pseudo_nilpotency(s) == 0.0


def test_wrong_metric_detected(sector):
    s, _ = sector
    x = s.rho.grid.points
    wrong = s.rho.values * (1.0 + 0.1 * np.tanh(x))
    assert pseudo_adjoint_residual(s, wrong) > 1e-3


def test_pseudo_identities(sector):
    s, q = sector
    assert max(pseudo_intertwining_residual(s)) < 1e-3
    assert max(pseudo_quasi_residual(s, q)) < 1e-3


def test_unit_weight_gives_hermitian_sector(chain):
    p, q = chain
    g = Grid(-8.0, 8.0, 400)
    s = sector_from_weight(Field(g, np.ones(g.n)), p, q, g)
    np.testing.assert_array_equal(s.H_plus_nh.bands, s.h_plus.bands)
    assert rho_condition(s) == 1.0
    r = report(s, q)
    assert r["rho_condition_flag"] is False
    assert r["pseudo_adjoint"] == 0.0
