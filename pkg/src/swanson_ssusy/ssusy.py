"""Second-derivative supersymmetry built from two first-order factors.

With xi_i = a~ d/dx + b_i the supercharges are A- = xi_2 xi_1 and A+ = (A-)^T.
A factor pair generates a triplet of Hamiltonians sharing the mass a~^2:

    h+   = xi_1^+ xi_1 + e1
    hbar = xi_1 xi_1^+ + e1 = xi_2^+ xi_2 + e2     (the compatibility constraint)
    h-   = xi_2 xi_2^+ + e2

and A+ A- = (h+ - e1)(h+ - e2), A- A+ = (h- - e1)(h- - e2).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.sparse as sp

from .expr import Const, Expr, differentiate, evaluate, render, simplify
from .grid import Grid, sample
from .operators import (
    DEFAULT_BUFFER,
    BandedOperator,
    LadderSpec,
    compose,
    identity_residual,
    ladder_matrix,
    polynomial,
    sturm_liouville_matrix,
    transpose,
)

ZERO_TOL = 1e-12


class QuasiError(ValueError):
    pass


@dataclass(frozen=True)
class FactorPair:
    a_tilde: Expr
    b1: Expr
    b2: Expr

    @property
    def mass(self) -> Expr:
        return simplify(self.a_tilde * self.a_tilde)

    def xi(self, i: int) -> LadderSpec:
        return LadderSpec(self.a_tilde, self.b1 if i == 1 else self.b2)

    def to_dict(self) -> dict:
        return {"a_tilde": render(self.a_tilde), "b1": render(self.b1), "b2": render(self.b2)}


Kind = Literal["perfect_square", "split_c", "general"]


@dataclass(frozen=True)
class QuasiSpec:
    """Quadratic quasi-Hamiltonian K = (H - e1)(H - e2)."""

    kind: Kind
    lam: float = 0.0
    mu: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in ("perfect_square", "split_c", "general"):
            raise QuasiError(f"unknown quasi kind {self.kind!r}")
        if self.kind == "general" and not self.lam**2 > self.mu:
            raise QuasiError(f"general quasi-Hamiltonian needs lambda^2 > mu, got lambda={self.lam}, mu={self.mu}")

    @classmethod
    def perfect_square(cls, lam: float) -> "QuasiSpec":
        return cls("perfect_square", lam=float(lam), mu=float(lam) ** 2)

    @classmethod
    def split_c(cls, c: float) -> "QuasiSpec":
        return cls("split_c", c=float(c))

    @classmethod
    def general(cls, lam: float, mu: float) -> "QuasiSpec":
        return cls("general", lam=float(lam), mu=float(mu))

    @property
    def energies(self) -> tuple[float, float]:
        """Factorization energies (e1, e2)."""
        if self.kind == "perfect_square":
            return self.lam, self.lam
        if self.kind == "split_c":
            return self.c / 2.0, -self.c / 2.0
        root = float(np.sqrt(self.lam**2 - self.mu))
        return self.lam + root, self.lam - root

    @property
    def poly(self) -> tuple[float, float, float]:
        """Coefficients of t^2, t, 1 in (t - e1)(t - e2)."""
        e1, e2 = self.energies
        return 1.0, -(e1 + e2), e1 * e2

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "split_c":
            d["c"] = self.c
        else:
            d["lambda"] = self.lam
        if self.kind == "general":
            d["mu"] = self.mu
        return d


def product_potential(a_tilde: Expr, b: Expr, order: str) -> Expr:
    """Potential of xi^+ xi ("dagger_first") or xi xi^+ ("dagger_last") for xi = a~ d/dx + b."""
    da = differentiate(a_tilde)
    if order == "dagger_first":
        return simplify(b * b - differentiate(a_tilde * b))
    if order == "dagger_last":
        shifted = b - da
        return simplify(a_tilde * differentiate(shifted) + b * shifted)
    raise ValueError(f"order must be 'dagger_first' or 'dagger_last', got {order!r}")


@dataclass(frozen=True)
class Triplet:
    mass: Expr
    V_plus: Expr
    V_bar: Expr
    V_minus: Expr
    energies: tuple[float, float]

    @property
    def h_plus(self) -> tuple[Expr, Expr]:
        return self.mass, self.V_plus

    @property
    def h_bar(self) -> tuple[Expr, Expr]:
        return self.mass, self.V_bar

    @property
    def h_minus(self) -> tuple[Expr, Expr]:
        return self.mass, self.V_minus

    def matrices(self, g: Grid) -> dict[str, BandedOperator]:
        return {
            name: sturm_liouville_matrix(self.mass, sample(V, g), g)
            for name, V in (("h_plus", self.V_plus), ("h_bar", self.V_bar), ("h_minus", self.V_minus))
        }


def build_triplet(p: FactorPair, q: QuasiSpec) -> Triplet:
    e1, e2 = q.energies
    return Triplet(
        mass=p.mass,
        V_plus=simplify(product_potential(p.a_tilde, p.b1, "dagger_first") + e1),
        V_bar=simplify(product_potential(p.a_tilde, p.b2, "dagger_first") + e2),
        V_minus=simplify(product_potential(p.a_tilde, p.b2, "dagger_last") + e2),
        energies=(e1, e2),
    )


def constraint_residual(p: FactorPair, q: QuasiSpec) -> Expr:
    """[xi_1 xi_1^+ potential + e1] - [xi_2^+ xi_2 potential + e2]; zero iff the pair is compatible."""
    e1, e2 = q.energies
    left = product_potential(p.a_tilde, p.b1, "dagger_last")
    right = product_potential(p.a_tilde, p.b2, "dagger_first")
    return simplify(left - right + (e1 - e2))


def compatibility_form(p: FactorPair, q: QuasiSpec) -> Expr:
    """a~a~'' - [a~(b1+b2)' - a~'(b1-b2) + (b1-b2)(b1+b2)] - (e1 - e2).

    For a perfect square the energy term drops out.  This is the negative of
    constraint_residual, written in the sum/difference variables.
    """
    at = p.a_tilde
    s = p.b1 + p.b2
    dlt = p.b1 - p.b2
    e1, e2 = q.energies
    e = at * differentiate(at, 2) - (at * differentiate(s) - differentiate(at) * dlt + dlt * s)
    if e1 != e2:
        e = e - (e1 - e2)
    return simplify(e)


@dataclass(frozen=True)
class ConstraintReport:
    expression: str
    max_abs: float
    argmax_x: float
    identically_zero: bool
    literal_zero: bool

    def to_dict(self) -> dict:
        return {
            "expression": self.expression,
            "max_abs": self.max_abs,
            "argmax_x": self.argmax_x,
            "identically_zero": self.identically_zero,
            "literal_zero": self.literal_zero,
        }


def constraint_report(p: FactorPair, q: QuasiSpec, g: Grid) -> ConstraintReport:
    r = constraint_residual(p, q)
    literal = r == Const(0.0)
    values = np.abs(evaluate(r, g.points))
    i = int(np.argmax(values))
    scale = 1.0 + float(np.max(np.abs(evaluate(build_triplet(p, q).V_plus, g.points))))
    return ConstraintReport(
        expression=render(r),
        max_abs=float(values[i]),
        argmax_x=float(g.points[i]),
        identically_zero=bool(literal or values[i] <= ZERO_TOL * scale),
        literal_zero=bool(literal),
    )


def factor_matrices(p: FactorPair, g: Grid) -> tuple[BandedOperator, BandedOperator]:
    return ladder_matrix(p.xi(1), g), ladder_matrix(p.xi(2), g)


def supercharge_matrices(p: FactorPair, g: Grid) -> tuple[BandedOperator, BandedOperator]:
    xi1, xi2 = factor_matrices(p, g)
    A_minus = compose(xi2, xi1)
    return A_minus, transpose(A_minus)


def intertwining_residual(
    A: BandedOperator, hp: BandedOperator, hm: BandedOperator, buffer: int = DEFAULT_BUFFER
) -> float:
    """Probe residual of A hp = hm A."""
    return identity_residual(compose(A, hp), compose(hm, A), buffer)


def quasi_hamiltonian_residual(
    p: FactorPair, q: QuasiSpec, g: Grid, buffer: int = DEFAULT_BUFFER
) -> tuple[float, float]:
    """Probe residuals of A+A- = poly(h+) and A-A+ = poly(h-)."""
    A_minus, A_plus = supercharge_matrices(p, g)
    mats = build_triplet(p, q).matrices(g)
    r_plus = identity_residual(compose(A_plus, A_minus), polynomial(mats["h_plus"], q.poly), buffer)
    r_minus = identity_residual(compose(A_minus, A_plus), polynomial(mats["h_minus"], q.poly), buffer)
    return r_plus, r_minus


def charge_blocks(A_minus: BandedOperator, A_plus: BandedOperator) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Q = [[0, 0], [A-, 0]] and Q# = [[0, A+], [0, 0]] as 2n x 2n sparse matrices."""
    Am = A_minus.to_sparse()
    Ap = A_plus.to_sparse()
    Z = sp.csr_matrix(Am.shape)
    Q = sp.bmat([[Z, Z], [Am, Z]], format="csr")
    Qs = sp.bmat([[Z, Ap], [Z, Z]], format="csr")
    return Q, Qs


def _max_abs(M: sp.spmatrix) -> float:
    M = sp.csr_matrix(M)
    return float(np.max(np.abs(M.data))) if M.nnz else 0.0


def nilpotency_check(p: FactorPair, g: Grid) -> float:
    """max(|Q^2|, |Q#^2|); zero by block structure."""
    Q, Qs = charge_blocks(*supercharge_matrices(p, g))
    return max(_max_abs(Q @ Q), _max_abs(Qs @ Qs))


def anticommutator_blocks(p: FactorPair, g: Grid) -> dict[str, float]:
    """Checks that {Q, Q#} = diag(A+A-, A-A+) and is symmetric."""
    A_minus, A_plus = supercharge_matrices(p, g)
    Q, Qs = charge_blocks(A_minus, A_plus)
    K = (Q @ Qs + Qs @ Q).tocsr()
    n = g.n
    expected = sp.block_diag(
        [compose(A_plus, A_minus).to_sparse(), compose(A_minus, A_plus).to_sparse()], format="csr"
    )
    return {"block_gap": _max_abs(K - expected), "asymmetry": _max_abs(K - K.T), "size": 2 * n}


def verify(p: FactorPair, q: QuasiSpec, g: Grid, buffer: int = DEFAULT_BUFFER) -> dict:
    """The ssusy residual report."""
    A_minus, A_plus = supercharge_matrices(p, g)
    mats = build_triplet(p, q).matrices(g)
    xi1, xi2 = factor_matrices(p, g)
    qp, qm = quasi_hamiltonian_residual(p, q, g, buffer)
    return {
        "constraint_max": constraint_report(p, q, g).max_abs,
        "intertwine": intertwining_residual(A_minus, mats["h_plus"], mats["h_minus"], buffer),
        "intertwine_plus": intertwining_residual(xi1, mats["h_plus"], mats["h_bar"], buffer),
        "intertwine_minus": intertwining_residual(xi2, mats["h_bar"], mats["h_minus"], buffer),
        "quasi_plus": qp,
        "quasi_minus": qm,
        "nilpotency": nilpotency_check(p, g),
        "grid": g.to_dict(),
        "buffer": buffer,
    }
