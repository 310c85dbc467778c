"""Built-in model families: the isotonic choice a = x^2 and the CPRS family a~ = sqrt(w~) x^kappa.

Besides constructing the models, this module transcribes the closed forms
quoted for both families and audits them against the defining formulas.
Audit deviations are data; nothing here asserts that they vanish.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import hermite as npherm

from .expr import Const, Expr, compose, differentiate, evaluate, exp, ln, render, simplify, var
from .grid import Field, Grid, corrected_cumulative_integral, sample
from .operators import LadderSpec, sturm_liouville_matrix
from .ssusy import FactorPair, QuasiSpec, build_triplet, constraint_residual
from .swanson import SwansonModel, SwansonParams, hermitian_potential, rho_weight, similarity_potential

X = var("x")
Y = var("x")  # expressions in the CPRS variable y use the same placeholder name


class ChoiceError(ValueError):
    pass


def _audit_entry(formula_id: str, quoted: Expr | np.ndarray, route: Expr | np.ndarray, g: Grid, relative: bool = False) -> dict:
    pv = evaluate(quoted, g.points) if isinstance(quoted, Expr) else np.asarray(quoted, dtype=float)
    rv = evaluate(route, g.points) if isinstance(route, Expr) else np.asarray(route, dtype=float)
    dev = np.abs(pv - rv)
    if relative:
        dev = dev / np.maximum(np.abs(rv), np.finfo(float).tiny)
    i = int(np.argmax(dev))
    return {
        "formula_id": formula_id,
        "max_dev": float(dev[i]),
        "argmax_x": float(g.points[i]),
        "relative": relative,
        "grid": g.to_dict(),
        "status": "measured",
    }


# --------------------------------------------------------------------------
# Isotonic family


@dataclass(frozen=True)
class IsotonicChoice:
    alpha: float
    beta: float
    c: float
    d: float
    omega_tilde: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        if not self.d > 0:
            raise ChoiceError(f"d must be positive so that x^2 + d never vanishes, got {self.d}")
        if not self.omega_tilde > 0:
            raise ChoiceError(f"omega_tilde must be positive, got {self.omega_tilde}")
        if self.p < 0:
            raise ChoiceError(f"p = {self.p} is negative, c1 = sqrt(p) is not real")

    @property
    def omega(self) -> float:
        return self.omega_tilde + self.alpha + self.beta

    @property
    def Q(self) -> float:
        return self.omega_tilde + self.alpha + self.beta

    @property
    def p(self) -> float:
        al, be, wt = self.alpha, self.beta, self.omega_tilde
        return (al - be) ** 2 / wt + wt + 2.0 * (al + be)

    @property
    def q(self) -> float:
        al, be, wt = self.alpha, self.beta, self.omega_tilde
        return al + be + (al - be) ** 2 / wt + 2.0 * (al + be)

    @property
    def r(self) -> float:
        return (2.0 + self.c + 2.0 * self.d) * self.p - 3.0 * self.d * self.Q

    @property
    def s(self) -> float:
        return 2.0 * (1.0 + self.d) * self.p - self.d * self.Q

    @property
    def t(self) -> float:
        return (self.c + 1.5) * self.Q - 2.0 * (self.c + 1.0) * self.p

    @property
    def c1(self) -> float:
        return float(np.sqrt(self.p))

    @property
    def c2(self) -> float:
        return -1.5 * float(np.sqrt(self.omega_tilde))

    @property
    def c3(self) -> float | None:
        """None when p = 0 and c != 0 (the defining formula divides by sqrt(p))."""
        if self.p == 0:
            return 0.0 if self.c == 0 else None
        sp_ = np.sqrt(self.p)
        return float(self.c * (1.0 + 1.0 / self.d) * sp_ - self.c * self.Q / (2.0 * sp_))

    @property
    def k1(self) -> float:
        return -self.c1

    @property
    def k2(self) -> float:
        return 2.0 * float(np.sqrt(self.omega_tilde)) + self.c2

    @property
    def k3(self) -> float | None:
        return None if self.c3 is None else -self.c3

    def parameters(self) -> dict:
        names = ("p", "q", "r", "s", "t", "c1", "c2", "c3", "k1", "k2", "k3")
        return {n: getattr(self, n) for n in names}


@dataclass(frozen=True)
class IsotonicFamily:
    choice: IsotonicChoice
    model: SwansonModel
    pair: FactorPair | None
    quasi: QuasiSpec
    closed_forms: dict[str, Expr]
    rho_closed: Expr


def isotonic_family(ch: IsotonicChoice) -> IsotonicFamily:
    c, d = ch.c, ch.d
    a = X * X
    b = 1.0 / X + c * X / (X * X + d)
    model = SwansonModel(SwansonParams(ch.omega, ch.alpha, ch.beta), LadderSpec(a, b))
    sw = float(np.sqrt(ch.omega_tilde))
    at = simplify(Const(sw) * X * X)
    den = X * X + d

    V_plus = ch.p / (X * X) + ch.q * X * X + c * (ch.r * X * X + ch.s) / (den * den) + ch.t
    pair = None
    V_minus = V_bar = None
    if ch.c3 is not None:
        c1, c2, c3 = ch.c1, ch.c2, ch.c3
        b1 = c1 / X - c2 * X + c3 * X / den
        b2 = ch.k1 / X + ch.k2 * X + ch.k3 * X / den
        pair = FactorPair(at, simplify(b1), simplify(b2))
        V_minus = (
            c1**2 / (X * X)
            + c2 * (c2 + 3.0 * sw) * X * X
            + (ch.lam + sw * c1**2 - 2.0 * c1 * (c2 + sw))
            + (
                c3 * (sw - 2.0 * c2) * X**4
                + c3 * (c3 - d * sw + 2.0 * c1 - 2.0 * d * c2 - 2.0 * sw) * X * X
                + 2.0 * d * c3 * (c1 - sw)
            )
            / (den * den)
        )
        bracket = c1 / X - sw / 2.0 - c3 * X / den
        V_bar = (
            bracket * bracket
            - sw * (-c1 + 1.5 * sw * X * X - 3.0 * c3 * X * X / den + 2.0 * c3 * X**4 / (den * den))
            + ch.lam
        )
    forms = {"V_plus": simplify(V_plus)}
    if V_minus is not None:
        forms["V_minus"] = simplify(V_minus)
        forms["V_bar"] = simplify(V_bar)

    kappa = -(ch.alpha - ch.beta) / ch.omega_tilde
    base = ln(X) * (c / d - 1.0) - ln(den) * (c / (2.0 * d))
    rho_closed = exp(kappa * base + (ch.alpha - ch.beta) / (2.0 * ch.omega_tilde) / (X * X))
    return IsotonicFamily(ch, model, pair, QuasiSpec.perfect_square(ch.lam), forms, simplify(rho_closed))


def _fit_isotonic_coefficients(V: np.ndarray, x: np.ndarray, c: float, d: float) -> dict[str, float | None]:
    """Least-squares p, q, r, s, t of p/x^2 + q x^2 + c (r x^2 + s)/(x^2+d)^2 + t."""
    den2 = (x * x + d) ** 2
    cols = [1.0 / x**2, x**2, np.ones_like(x)]
    names = ["p", "q", "t"]
    if c != 0:
        cols += [c * x**2 / den2, c / den2]
        names += ["r", "s"]
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), V, rcond=None)
    out: dict[str, float | None] = {"r": None, "s": None}
    out.update({n: float(v) for n, v in zip(names, coef)})
    return out


def isotonic_audit(ch: IsotonicChoice, g: Grid) -> dict:
    fam = isotonic_family(ch)
    m = fam.model
    entries = []

    rho_num = rho_weight(m, g).values
    rho_cf = evaluate(fam.rho_closed, g.points)
    entries.append(_audit_entry("rho_closed_form", rho_cf / rho_cf[0], rho_num, g, relative=True))

    V_def = hermitian_potential(m)
    entries.append(_audit_entry("v_plus_closed_form", fam.closed_forms["V_plus"], V_def, g))
    entries.append(_audit_entry("v_plus_similarity_route", fam.closed_forms["V_plus"], similarity_potential(m), g))
    if fam.pair is not None:
        tri = build_triplet(fam.pair, fam.quasi)
        entries.append(_audit_entry("v_plus_pair_route", fam.closed_forms["V_plus"], tri.V_plus, g))
        entries.append(_audit_entry("v_minus_closed_form", fam.closed_forms["V_minus"], tri.V_minus, g))
        entries.append(_audit_entry("v_bar_closed_form", fam.closed_forms["V_bar"], tri.V_bar, g))
        entries.append(_audit_entry("constraint", constraint_residual(fam.pair, fam.quasi), np.zeros(g.n), g))

    fitted = _fit_isotonic_coefficients(evaluate(V_def, g.points), g.points, ch.c, ch.d)
    for name in ("p", "q", "r", "s", "t"):
        value = fitted[name]
        quoted = getattr(ch, name)
        entries.append(
            {
                "formula_id": f"fit_{name}",
                "quoted": quoted,
                "fitted": value,
                "max_dev": None if value is None else float(abs(value - quoted)),
                "argmax_x": None,
                "relative": False,
                "grid": g.to_dict(),
                "status": "measured",
            }
        )
    return {
        "family": "isotonic",
        "choice": {"alpha": ch.alpha, "beta": ch.beta, "c": ch.c, "d": ch.d, "omega_tilde": ch.omega_tilde, "lambda": ch.lam},
        "parameters": ch.parameters(),
        "pair_available": fam.pair is not None,
        "entries": entries,
    }


# --------------------------------------------------------------------------
# CPRS family

EPSILON0 = -3.0
U_CPRS = Y * Y + 8.0 * (2.0 * Y * Y - 1.0) / ((2.0 * Y * Y + 1.0) * (2.0 * Y * Y + 1.0))
W_CPRS = Y + 4.0 * Y / (2.0 * Y * Y + 1.0)


@dataclass(frozen=True)
class SuperpotentialSpec:
    W: Expr
    epsilon0: float
    U: Expr

    def closure_residual(self, ys: np.ndarray) -> float:
        """max |W^2 - W' + e0 - U| on the sample points."""
        lhs = evaluate(self.W * self.W - differentiate(self.W) + self.epsilon0, ys)
        return float(np.max(np.abs(lhs - evaluate(self.U, ys))))


CPRS_SUPERPOTENTIAL = SuperpotentialSpec(W_CPRS, EPSILON0, U_CPRS)


@dataclass(frozen=True)
class CPRSChoice:
    kappa: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.kappa < 1.0:
            raise ChoiceError(f"kappa must lie in [0, 1), got {self.kappa}")
        if 16.0 * self.alpha**2 > 1.0:
            raise ChoiceError(f"need 16 alpha^2 <= 1 for a real omega_tilde, got alpha={self.alpha}")

    @property
    def beta(self) -> float:
        return -self.alpha

    @property
    def omega_tilde(self) -> float:
        return 0.5 * (1.0 + float(np.sqrt(1.0 - 16.0 * self.alpha**2)))

    @property
    def omega(self) -> float:
        return self.omega_tilde + self.alpha + self.beta

    epsilon0 = EPSILON0

    def a_tilde(self) -> Expr:
        return simplify(Const(float(np.sqrt(self.omega_tilde))) * self.power(self.kappa))

    def power(self, k: float) -> Expr:
        return Const(1.0) if k == 0 else X ** Const(k)

    def z(self) -> Expr:
        """Closed-form coordinate x^(1-kappa)/(sqrt(w~)(1-kappa))."""
        return simplify(self.power(1.0 - self.kappa) / (float(np.sqrt(self.omega_tilde)) * (1.0 - self.kappa)))

    def default_grid(self, n: int = 4000, L: float = 10.0) -> Grid:
        if self.kappa == 0:
            return Grid(-L, L, n)
        h = L / (n + 1)
        return Grid(10.0 * h, L, n)


@dataclass(frozen=True)
class CPRSReference:
    n: int
    energy: float
    coefficients: tuple[int, ...]  # power-basis coefficients of P_n, lowest degree first

    def polynomial(self, y) -> np.ndarray:
        return np.polynomial.polynomial.polyval(y, np.asarray(self.coefficients, dtype=float))

    def wavefunction(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.polynomial(y) * np.exp(-0.5 * y * y) / (2.0 * y * y + 1.0)


def cprs_reference(n: int) -> CPRSReference:
    if n < 0 or int(n) != n:
        raise ChoiceError(f"level index must be a non-negative integer, got {n}")
    n = int(n)
    if n in (1, 2):
        raise ChoiceError(
            f"level n={n} does not exist: the rational extension removes n=1 and n=2 from the oscillator ladder"
        )
    if n == 0:
        herm = np.array([1.0])
    else:
        herm = np.zeros(n + 1)
        herm[n] += 1.0
        herm[n - 2] += 4.0 * n
        if n >= 4:
            herm[n - 4] += 4.0 * n * (n - 3)
    power = npherm.herm2poly(herm)
    coeffs = tuple(int(round(v)) for v in power)
    return CPRSReference(n, EPSILON0 + 2.0 * n, coeffs)


def cprs_potential_route_A(ch: CPRSChoice) -> Expr:
    """-(a~a~''/2 + a~'^2/4) + U(z(x))."""
    at = ch.a_tilde()
    dat = differentiate(at)
    correction = at * differentiate(at, 2) / 2.0 + dat * dat / 4.0
    return simplify(compose(U_CPRS, ch.z()) - correction)


@dataclass(frozen=True)
class CPRSFamily:
    choice: CPRSChoice
    pair: FactorPair
    quasi: QuasiSpec
    quoted_forms: dict[str, Expr]
    exact_route: dict[str, Expr]
    model: SwansonModel


def cprs_family(ch: CPRSChoice) -> CPRSFamily:
    k = ch.kappa
    sw = float(np.sqrt(ch.omega_tilde))
    wt = ch.omega_tilde
    up = ch.power(1.0 - k)
    down = ch.power(-(1.0 - k))
    lead = up / (sw * (1.0 - k))
    b = lead + (2.0 * sw * (1.0 - k) + k / 2.0) * down
    b1 = lead + sw * (4.0 - 3.0 * k) / 2.0 * down
    b2 = -lead + sw * (4.0 - k) / 2.0 * down
    X2 = ch.power(2.0 * (1.0 - k))
    m2 = wt * (1.0 - k) ** 2 / 2.0
    V_pm = (
        k * (2.0 - 3.0 * k) * wt / 4.0 * ch.power(-2.0 * (1.0 - k))
        + X2 / (wt * (1.0 - k) ** 2)
        + 4.0 * wt * (1.0 - k) ** 2 * (X2 - m2) / ((X2 + m2) * (X2 + m2))
    )
    V_bar = wt * (2.0 - k) * (4.0 - 5.0 * k) / 4.0 * ch.power(-2.0 * (1.0 - k)) + X2 / (wt * (1.0 - k) ** 2) + 2.0
    at = ch.a_tilde()
    b1_exact = differentiate(at) / 2.0 + compose(W_CPRS, ch.z())
    model = SwansonModel(SwansonParams(ch.omega, ch.alpha, ch.beta), LadderSpec(ch.power(k), simplify(b)))
    return CPRSFamily(
        choice=ch,
        pair=FactorPair(at, simplify(b1), simplify(b2)),
        quasi=QuasiSpec.perfect_square(EPSILON0),
        quoted_forms={
            "b": simplify(b),
            "b1": simplify(b1),
            "b2": simplify(b2),
            "V_plus_minus": simplify(V_pm),
            "V_bar": simplify(V_bar),
        },
        exact_route={"b1_exact": simplify(b1_exact)},
        model=model,
    )


def cprs_operator(ch: CPRSChoice, g: Grid):
    """h+ = -d/dx a~^2 d/dx + V+ with V+ from the coordinate-transform route."""
    return sturm_liouville_matrix(simplify(ch.a_tilde() * ch.a_tilde()), sample(cprs_potential_route_A(ch), g), g)


def _positive_grid(g: Grid) -> Grid:
    """The part of g with x >= 10 h, for formulas with poles or fractional powers at the origin."""
    x_min = 10.0 * g.h
    if g.x_min >= x_min:
        return g
    n = int(np.sum(g.points > x_min))
    return Grid(g.x_max - (n + 1) * g.h, g.x_max, n)


def cprs_audit(ch: CPRSChoice, g: Grid) -> dict:
    fam = cprs_family(ch)
    gp = _positive_grid(g)
    route_A = cprs_potential_route_A(ch)
    forms = fam.quoted_forms
    tri_quoted = build_triplet(fam.pair, fam.quasi)
    exact_pair_Vp = simplify(
        fam.exact_route["b1_exact"] * fam.exact_route["b1_exact"]
        - differentiate(fam.pair.a_tilde * fam.exact_route["b1_exact"])
        + EPSILON0
    )
    entries = [
        _audit_entry("v_plus_closed_form", forms["V_plus_minus"], route_A, gp),
        _audit_entry("b1_quoted_vs_exact", forms["b1"], fam.exact_route["b1_exact"], gp),
        _audit_entry("v_plus_exact_pair_route", exact_pair_Vp, route_A, gp),
        _audit_entry("v_plus_quoted_pair_route", tri_quoted.V_plus, route_A, gp),
        _audit_entry("v_minus_quoted_pair_route", forms["V_plus_minus"], tri_quoted.V_minus, gp),
        _audit_entry("v_bar_quoted_pair_route", forms["V_bar"], tri_quoted.V_bar, gp),
        _audit_entry("constraint", constraint_residual(fam.pair, fam.quasi), np.zeros(gp.n), gp),
        _audit_entry("v_plus_model_b_route", hermitian_potential(fam.model), route_A, gp),
    ]
    ys = np.linspace(-8.0, 8.0, 1601)
    return {
        "family": "cprs",
        "choice": {"kappa": ch.kappa, "alpha": ch.alpha, "omega_tilde": ch.omega_tilde},
        "quoted_forms": {k: render(v) for k, v in forms.items()},
        "exact_route": {k: render(v) for k, v in fam.exact_route.items()},
        "superpotential_closure": CPRS_SUPERPOTENTIAL.closure_residual(ys),
        "alpha_condition": {
            "enforced": "16*alpha^2 <= 1",
            "quoted": "alpha^2 <= 16",
            "consistent": False,
        },
        "q1_condition": {
            "quoted": "q1 = sqrt(omega_tilde)",
            "defining": "q1 = omega_tilde + alpha + beta = omega_tilde",
            "gap": abs(float(np.sqrt(ch.omega_tilde)) - ch.omega_tilde),
        },
        "entries": entries,
    }


# --------------------------------------------------------------------------
# Coordinate map, wavefunction transport and the Riccati equation


@dataclass(frozen=True, eq=False)
class CoordinateMap:
    z: Field
    closed: Field | None = None
    max_dev: float | None = None


def coordinate_map(a_tilde: Expr, g: Grid, kappa: float | None = None, omega_tilde: float | None = None) -> CoordinateMap:
    """z(x) = int_{x_1}^x dx'/a~; with (kappa, omega_tilde) also the closed form, aligned at x_1."""
    av = sample(a_tilde, g).values
    bad = ~(av > 0)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ChoiceError(f"a~ must be positive, got {av[i]} at x={g.points[i]!r}")
    z = corrected_cumulative_integral(simplify(1.0 / a_tilde), g)
    if kappa is None:
        return CoordinateMap(z)
    wt = 1.0 if omega_tilde is None else omega_tilde
    x = g.points
    closed = x ** (1.0 - kappa) / (np.sqrt(wt) * (1.0 - kappa))
    shifted = z.values + closed[0]
    return CoordinateMap(z, Field(g, closed), float(np.max(np.abs(shifted - closed))))


def transport_wavefunction(
    phi: Callable[[np.ndarray], np.ndarray] | Expr,
    a_tilde: Expr,
    g: Grid,
    z: Field | np.ndarray | None = None,
) -> Field:
    """psi(x) = phi(z(x)) / sqrt(a~(x)), normalized so that h * sum psi^2 = 1."""
    zv = coordinate_map(a_tilde, g).z.values if z is None else (z.values if isinstance(z, Field) else np.asarray(z))
    vals = evaluate(phi, zv) if isinstance(phi, Expr) else np.asarray(phi(zv), dtype=float)
    psi = vals / np.sqrt(sample(a_tilde, g).values)
    norm = np.sqrt(g.h * np.sum(psi * psi))
    if norm == 0:
        raise ChoiceError("transported wavefunction vanishes on the grid")
    return Field(g, psi / norm)


def eigen_residual(A, psi: Field | np.ndarray, energy: float, buffer: int = 0) -> float:
    """||A psi - E psi|| / ||psi|| over rows buffer..n-buffer."""
    v = psi.values if isinstance(psi, Field) else np.asarray(psi, dtype=float)
    r = A.matvec(v) - energy * v
    sl = slice(buffer, len(v) - buffer)
    return float(np.linalg.norm(r[sl]) / np.linalg.norm(v))


def cprs_eigenfunction(ch: CPRSChoice, n: int, g: Grid) -> Field:
    ref = cprs_reference(n)
    return transport_wavefunction(ref.wavefunction, ch.a_tilde(), g, sample(ch.z(), g))


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    x: np.ndarray
    values: np.ndarray
    valid: np.ndarray
    blowup_x: list[float] = field(default_factory=list)
    residual: float = float("nan")


RICCATI_BLOWUP = 1e12
RESOLVED = 0.005


def riccati_coefficient(ch: CPRSChoice) -> Expr:
    k = ch.kappa
    sw = float(np.sqrt(ch.omega_tilde))
    return simplify(ch.power(1.0 - k) / (sw * (1.0 - k)) + 2.0 * sw * (1.0 - k) * ch.power(-(1.0 - k)))


def _rk4_path(f, xs: np.ndarray, y0: float, substeps: int) -> tuple[np.ndarray, float | None]:
    out = np.full(len(xs), np.nan)
    y = y0
    out[0] = y0
    for i in range(1, len(xs)):
        x = xs[i - 1]
        step = (xs[i] - xs[i - 1]) / substeps
        for _ in range(substeps):
            k1 = f(x, y)
            k2 = f(x + step / 2, y + step / 2 * k1)
            k3 = f(x + step / 2, y + step / 2 * k2)
            k4 = f(x + step, y + step * k3)
            y = y + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            x += step
            if not np.isfinite(y) or abs(y) > RICCATI_BLOWUP:
                return out, float(x)
        out[i] = y
    return out, None


def riccati_integrate(ch: CPRSChoice, x0: float, varrho0: float, g: Grid, substeps: int = 4) -> RiccatiSolution:
    """RK4 solution of varrho' = varrho^2 + 2 Z varrho + (3 + sqrt(w~)/2) across the grid from (x0, varrho0).

    Values past a blow-up (|varrho| > 1e12) are NaN and the location is recorded.
    The residual is max |D varrho - rhs| / (1 + |rhs|) with a five-point
    central derivative D, over points whose whole stencil is resolved
    (|varrho| h <= 0.005, i.e. at least ~200 grid steps from a pole).
    """
    if not g.points[0] <= x0 <= g.points[-1]:
        raise ChoiceError(f"x0={x0} is outside the grid range [{g.points[0]}, {g.points[-1]}]")
    Zexpr = riccati_coefficient(ch)
    const = 3.0 + float(np.sqrt(ch.omega_tilde)) / 2.0

    def f(x, y):
        return y * y + 2.0 * float(evaluate(Zexpr, x)) * y + const

    x = g.points
    values = np.full(g.n, np.nan)
    blowups: list[float] = []
    right = np.concatenate([[x0], x[x >= x0]])
    left = np.concatenate([[x0], x[x < x0][::-1]])
    path, bx = _rk4_path(f, right, varrho0, substeps)
    values[x >= x0] = path[1:] if right[1:].size else values[x >= x0]
    if bx is not None:
        blowups.append(bx)
    if left.size > 1:
        path, bx = _rk4_path(f, left, varrho0, substeps)
        values[x < x0] = path[1:][::-1]
        if bx is not None:
            blowups.append(bx)
    valid = np.isfinite(values)
    residual = float("nan")
    if valid.sum() >= 5:
        Z = evaluate(Zexpr, x)
        rhs = values * values + 2.0 * Z * values + const
        d = np.full(g.n, np.nan)
        v = values
        d[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * g.h)
        resolved = valid & (np.abs(np.where(valid, values, 0.0)) * g.h <= RESOLVED)
        stencil = np.zeros(g.n, dtype=bool)
        stencil[2:-2] = resolved[:-4] & resolved[1:-3] & resolved[2:-2] & resolved[3:-1] & resolved[4:]
        ok = stencil & np.isfinite(d)
        if ok.any():
            residual = float(np.max(np.abs(d[ok] - rhs[ok]) / (1.0 + np.abs(rhs[ok]))))
    return RiccatiSolution(x.copy(), values, valid, blowups, residual)
