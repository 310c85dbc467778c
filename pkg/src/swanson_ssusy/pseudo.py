"""Pseudo-supersymmetry: the Hermitian sector conjugated back by the weight rho.

theta- = D(rho)^-1 A- D(rho) and theta+ = D(rho)^-1 A+ D(rho) are pseudo-adjoint
with respect to the metric zeta = D(rho^2), and intertwine the non-Hermitian
partners H~+- = D(rho)^-1 h+- D(rho).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import evaluate
from .grid import Field, Grid
from .operators import (
    DEFAULT_BUFFER,
    BandedOperator,
    compose,
    conjugate_by_weight,
    identity_residual,
    polynomial,
    transpose,
)
from .ssusy import FactorPair, QuasiSpec, build_triplet, charge_blocks, constraint_report, supercharge_matrices
from .swanson import SwansonModel, rho_weight

RHO_CONDITION_LIMIT = 1e8


@dataclass(frozen=True, eq=False)
class PseudoSector:
    rho: Field
    theta_minus: BandedOperator
    theta_plus: BandedOperator
    H_plus_nh: BandedOperator
    H_minus_nh: BandedOperator
    h_plus: BandedOperator
    h_minus: BandedOperator
    A_minus: BandedOperator
    constraint_max: float = 0.0
    v_plus_mismatch: float = 0.0


def build_pseudo_sector(m: SwansonModel, p: FactorPair, q: QuasiSpec, g: Grid) -> PseudoSector:
    """Conjugate the Hermitian sector of the pair by the model's weight rho.

    ``v_plus_mismatch`` records how far the pair's V+ is from the model's V+
    on the grid; ``constraint_max`` carries the compatibility bookkeeping.
    """
    return sector_from_weight(rho_weight(m, g), p, q, g, m.V_plus)


def sector_from_weight(rho: Field, p: FactorPair, q: QuasiSpec, g: Grid, v_plus=None) -> PseudoSector:
    """Pseudo sector for an explicit positive weight (rho = 1 gives back the Hermitian sector)."""
    inv = 1.0 / rho.values
    A_minus, A_plus = supercharge_matrices(p, g)
    triplet = build_triplet(p, q)
    mats = triplet.matrices(g)
    mismatch = 0.0
    if v_plus is not None:
        mismatch = float(np.max(np.abs(evaluate(triplet.V_plus, g.points) - evaluate(v_plus, g.points))))
    return PseudoSector(
        rho=rho,
        theta_minus=conjugate_by_weight(A_minus, inv),
        theta_plus=conjugate_by_weight(A_plus, inv),
        H_plus_nh=conjugate_by_weight(mats["h_plus"], inv),
        H_minus_nh=conjugate_by_weight(mats["h_minus"], inv),
        h_plus=mats["h_plus"],
        h_minus=mats["h_minus"],
        A_minus=A_minus,
        constraint_max=constraint_report(p, q, g).max_abs,
        v_plus_mismatch=mismatch,
    )


def _rel_gap(X: BandedOperator, Y: BandedOperator) -> float:
    scale = Y.max_abs()
    gap = float(np.max(np.abs((X - Y).bands)))
    return gap / scale if scale > 0 else gap


def pseudo_adjoint_residual(s: PseudoSector, rho: np.ndarray | None = None) -> float:
    """max |zeta^-1 (theta-)^T zeta - theta+| / max |theta+| with zeta = D(rho^2).

    Passing ``rho`` overrides the sector's weight (used for negative controls).
    """
    r = s.rho.values if rho is None else np.asarray(rho, dtype=float)
    lhs = conjugate_by_weight(transpose(s.theta_minus), 1.0 / r**2)
    return _rel_gap(lhs, s.theta_plus)


def chained_pseudo_adjoint_residual(s: PseudoSector) -> float:
    """The same relation evaluated as rho^-2 (rho^-1 A- rho)^T rho^2, one diagonal at a time."""
    r = s.rho.values
    step = conjugate_by_weight(s.A_minus, 1.0 / r)
    step = transpose(step)
    step = conjugate_by_weight(step, 1.0 / r)
    step = conjugate_by_weight(step, 1.0 / r)
    return _rel_gap(step, s.theta_plus)


def pseudo_intertwining_residual(s: PseudoSector, buffer: int = DEFAULT_BUFFER) -> tuple[float, float]:
    """Probe residuals of H~+ theta+ = theta+ H~- and H~- theta- = theta- H~+."""
    r_plus = identity_residual(compose(s.H_plus_nh, s.theta_plus), compose(s.theta_plus, s.H_minus_nh), buffer)
    r_minus = identity_residual(compose(s.H_minus_nh, s.theta_minus), compose(s.theta_minus, s.H_plus_nh), buffer)
    return r_plus, r_minus


def pseudo_quasi_residual(s: PseudoSector, q: QuasiSpec, buffer: int = DEFAULT_BUFFER) -> tuple[float, float]:
    """Probe residuals of theta+ theta- = poly(H~+) and theta- theta+ = poly(H~-)."""
    r_plus = identity_residual(compose(s.theta_plus, s.theta_minus), polynomial(s.H_plus_nh, q.poly), buffer)
    r_minus = identity_residual(compose(s.theta_minus, s.theta_plus), polynomial(s.H_minus_nh, q.poly), buffer)
    return r_plus, r_minus


def rho_condition(s: PseudoSector) -> float:
    """cond(D(rho)) = max rho / min rho."""
    v = s.rho.values
    return float(np.max(v) / np.min(v))


def pseudo_nilpotency(s: PseudoSector) -> float:
    Q, Qs = charge_blocks(s.theta_minus, s.theta_plus)
    sq = [(Q @ Q).tocsr(), (Qs @ Qs).tocsr()]
    return max((float(np.max(np.abs(M.data))) if M.nnz else 0.0) for M in sq)


def report(s: PseudoSector, q: QuasiSpec, buffer: int = DEFAULT_BUFFER) -> dict:
    ip, im = pseudo_intertwining_residual(s, buffer)
    qp, qm = pseudo_quasi_residual(s, q, buffer)
    cond = rho_condition(s)
    return {
        "pseudo_adjoint": pseudo_adjoint_residual(s),
        "pseudo_adjoint_chained": chained_pseudo_adjoint_residual(s),
        "pseudo_intertwine_plus": ip,
        "pseudo_intertwine_minus": im,
        "pseudo_quasi_plus": qp,
        "pseudo_quasi_minus": qm,
        "pseudo_nilpotency": pseudo_nilpotency(s),
        "rho_condition": cond,
        "rho_condition_flag": bool(cond > RHO_CONDITION_LIMIT),
        "v_plus_mismatch": s.v_plus_mismatch,
        "buffer": buffer,
    }
