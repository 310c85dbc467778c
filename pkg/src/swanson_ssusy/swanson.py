"""The generalized Swanson model H = w eta^+ eta + alpha eta^2 + beta eta^+2 + w/2.

With eta = a d/dx + b the Hamiltonian is the second-order operator

    H~ = -d/dx a~^2 d/dx + b~ d/dx + c~,      a~ = sqrt(w~) a,  w~ = w - alpha - beta,

which becomes Hermitian, h = rho H~ rho^-1, under rho = exp(-1/2 int b~/a~^2).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .expr import Const, Expr, differentiate, simplify, sqrt
from .grid import Field, Grid, corrected_cumulative_integral, sample
from .operators import (
    DEFAULT_BUFFER,
    BandedOperator,
    LadderSpec,
    conjugate_by_weight,
    first_derivative_matrix,
    identity_residual,
    sturm_liouville_matrix,
    transpose,
)

LOG_RHO_LIMIT = 700.0


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class SwansonParams:
    omega: float
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("omega", "alpha", "beta"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ModelError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)
        if not self.omega_tilde > 0:
            raise ModelError(
                f"omega - alpha - beta must be positive, got {self.omega_tilde} "
                f"(omega={self.omega}, alpha={self.alpha}, beta={self.beta})"
            )

    @property
    def omega_tilde(self) -> float:
        return self.omega - self.alpha - self.beta


@dataclass(frozen=True)
class SwansonModel:
    params: SwansonParams
    ladder: LadderSpec

    @property
    def a(self) -> Expr:
        return self.ladder.a

    @property
    def b(self) -> Expr:
        return self.ladder.b

    @cached_property
    def a_tilde(self) -> Expr:
        return simplify(sqrt(Const(self.params.omega_tilde)) * self.a)

    @cached_property
    def a_tilde_sq(self) -> Expr:
        return simplify(Const(self.params.omega_tilde) * self.a * self.a)

    @cached_property
    def b_tilde(self) -> Expr:
        p = self.params
        if p.alpha == p.beta:
            return Const(0.0)
        return simplify((p.alpha - p.beta) * self.a * (2.0 * self.b - differentiate(self.a)))

    @cached_property
    def c_tilde(self) -> Expr:
        w, al, be = self.params.omega, self.params.alpha, self.params.beta
        a, b = self.a, self.b
        da = differentiate(a)
        db = differentiate(b)
        shifted = b - da
        e = (
            -w * differentiate(a * b)
            + (al + w) * b * b
            + al * a * db
            - be * a * differentiate(shifted)
            + be * shifted * shifted
            + w / 2.0
        )
        return simplify(e)

    @cached_property
    def V_plus(self) -> Expr:
        return hermitian_potential(self)

    def to_dict(self) -> dict:
        from .expr import render

        return {
            "omega": self.params.omega,
            "alpha": self.params.alpha,
            "beta": self.params.beta,
            "omega_tilde": self.params.omega_tilde,
            "a": render(self.a),
            "b": render(self.b),
        }


def coefficients(m: SwansonModel) -> tuple[Expr, Expr, Expr]:
    """(a~^2, b~, c~)."""
    return m.a_tilde_sq, m.b_tilde, m.c_tilde


def nonhermitian_matrix(m: SwansonModel, g: Grid) -> BandedOperator:
    kinetic = sturm_liouville_matrix(m.a_tilde_sq, sample(m.c_tilde, g), g)
    if m.b_tilde == Const(0.0):
        return kinetic
    return kinetic + first_derivative_matrix(sample(m.b_tilde, g), g)


def log_rho(m: SwansonModel, g: Grid) -> Field:
    """log rho on the grid, normalized to 0 at the first interior point."""
    if m.b_tilde == Const(0.0):
        return Field(g, np.zeros(g.n))
    p = m.params
    # b~/a~^2 = (alpha - beta)(2b - a')/(w~ a)
    integrand = simplify((p.alpha - p.beta) / p.omega_tilde * (2.0 * m.b - differentiate(m.a)) / m.a)
    return Field(g, -0.5 * corrected_cumulative_integral(integrand, g).values)


def rho_weight(m: SwansonModel, g: Grid) -> Field:
    lr = log_rho(m, g).values
    worst = int(np.argmax(np.abs(lr)))
    if abs(lr[worst]) > LOG_RHO_LIMIT:
        raise ModelError(
            f"|log rho| = {abs(lr[worst]):.1f} at x={g.points[worst]!r} exceeds {LOG_RHO_LIMIT}; "
            "the weight over- or underflows, truncate the domain"
        )
    return Field(g, np.exp(lr))


def hermitian_potential(m: SwansonModel) -> Expr:
    """V+ of the Hermitian equivalent h = -d/dx a~^2 d/dx + V+.

    When b~ vanishes identically H~ is already Hermitian and c~ is returned,
    so that h and H~ coincide term by term.
    """
    if m.b_tilde == Const(0.0):
        return m.c_tilde
    p = m.params
    wt, al, be = p.omega_tilde, p.alpha, p.beta
    a, b = m.a, m.b
    at = m.a_tilde
    da = differentiate(a)
    dat = differentiate(at)
    skew = (al - be) ** 2 / wt
    e = (
        (skew + wt + 2.0 * (al + be)) * b * (b - da)
        - (wt + al + be) * a * differentiate(b)
        + (al + be) / (2.0 * wt) * at * differentiate(at, 2)
        + (skew + 2.0 * (al + be)) / (4.0 * wt) * dat * dat
        + (wt + al + be) / 2.0
    )
    return simplify(e)


def similarity_potential(m: SwansonModel) -> Expr:
    """The same V+ obtained directly from the similarity: c~ - b~'/2 + b~^2/(4 a~^2)."""
    bt = m.b_tilde
    return simplify(m.c_tilde - 0.5 * differentiate(bt) + bt * bt / (4.0 * m.a_tilde_sq))


def hermitian_matrix(m: SwansonModel, g: Grid) -> BandedOperator:
    return sturm_liouville_matrix(m.a_tilde_sq, sample(m.V_plus, g), g)


def similarity_matrix(m: SwansonModel, g: Grid) -> BandedOperator:
    """D(rho)^-1 h D(rho): a discretization of H~ that is exactly similar to h."""
    return conjugate_by_weight(hermitian_matrix(m, g), 1.0 / rho_weight(m, g).values)


def _interior_entry_gap(A: BandedOperator, B: BandedOperator, buffer: int) -> float:
    w = max(A.bandwidth, B.bandwidth)
    da = np.zeros((2 * w + 1, A.n))
    db = np.zeros_like(da)
    da[w - A.bandwidth: w + A.bandwidth + 1] = A.bands
    db[w - B.bandwidth: w + B.bandwidth + 1] = B.bands
    return float(np.max(np.abs(da - db)[:, buffer: A.n - buffer]))


def metric_residual(m: SwansonModel, g: Grid, buffer: int = DEFAULT_BUFFER) -> float:
    """Probe residual of D(rho^2) H~ D(rho^2)^-1 = H~^T on interior rows.

    The mismatch operator has O(h) entries of alternating sign on the two
    off-diagonals, so on smooth functions it is O(h^2) relative to H~.
    """
    H = nonhermitian_matrix(m, g)
    rho = rho_weight(m, g).values
    return identity_residual(conjugate_by_weight(H, rho**2), transpose(H), buffer)


def metric_entry_residual(m: SwansonModel, g: Grid, buffer: int = DEFAULT_BUFFER) -> float:
    """Diagnostic: interior max entry of D(rho^2) H~ D(rho^2)^-1 - H~^T over max |H~|."""
    H = nonhermitian_matrix(m, g)
    rho = rho_weight(m, g).values
    return _interior_entry_gap(conjugate_by_weight(H, rho**2), transpose(H), buffer) / H.max_abs()


def similarity_residual(m: SwansonModel, g: Grid, buffer: int = DEFAULT_BUFFER) -> float:
    """Probe residual of D(rho)^-1 h D(rho) against the direct discretization of H~."""
    return identity_residual(similarity_matrix(m, g), nonhermitian_matrix(m, g), buffer)


def fit_quadratic(e: Expr, x: np.ndarray) -> tuple[tuple[float, float, float], float]:
    """Least-squares A x^2 + B x + C fit of e on the points x, with the max misfit."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(_evaluate(e, x), dtype=float)
    M = np.vstack([x**2, x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(M, y, rcond=None)
    misfit = float(np.max(np.abs(M @ coef - y)))
    return (float(coef[0]), float(coef[1]), float(coef[2])), misfit


def _evaluate(e: Expr, x):
    from .expr import evaluate

    return evaluate(e, x)


def harmonic_spacing(m: SwansonModel, x: np.ndarray, tol: float = 1e-9) -> float:
    """Level spacing 2 sqrt(mass * A) when a~^2 is constant and V+ = A x^2 + B x + C."""
    (A, _, _), misfit = fit_quadratic(m.V_plus, x)
    (m2, m1, m0), mass_misfit = fit_quadratic(m.a_tilde_sq, x)
    scale = 1.0 + float(np.max(np.abs(x))) ** 2 * abs(A)
    if misfit > tol * scale or abs(m2) > tol or abs(m1) > tol or mass_misfit > tol:
        raise ModelError("V+ is not quadratic with constant mass on the given points")
    if A <= 0 or m0 <= 0:
        raise ModelError(f"no oscillator spectrum: A={A}, mass={m0}")
    return 2.0 * float(np.sqrt(m0 * A))
