"""Lowest eigenvalues of symmetric banded operators, spectra via similarity, comparisons and refinement studies."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from .grid import Field, Grid
from .operators import BandedOperator, OperatorError, conjugate_by_weight, transpose

DENSE_LIMIT = 3000
SYMMETRIZE_TOL = 1e-8


class SpectralError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    eigenvalues: np.ndarray
    k: int
    grid: Grid
    method: str
    residuals: np.ndarray | None = None
    vectors: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "k": self.k,
            "grid": self.grid.to_dict(),
            "method": self.method,
        }
        if self.residuals is not None:
            d["residuals"] = [float(v) for v in self.residuals]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "eigenvalue"])
        for i, v in enumerate(self.eigenvalues):
            w.writerow([i, repr(float(v))])
        return buf.getvalue()


# --------------------------------------------------------------------------
# Sturm sequences


@numba.njit(cache=True)
def _sturm_count(d, e2, lam, pivmin):
    """Number of eigenvalues strictly below lam (LDL^T inertia)."""
    count = 0
    q = d[0] - lam
    if abs(q) < pivmin:
        q = -pivmin
    if q < 0:
        count += 1
    for i in range(1, d.shape[0]):
        q = d[i] - lam - e2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0:
            count += 1
    return count


@numba.njit(cache=True)
def _bisect_lowest(d, e2, k, lo, hi, pivmin):
    """The k lowest eigenvalues, each bisected until the bracket stops shrinking."""
    out = np.empty(k)
    for j in range(k):
        a = lo
        b = hi
        while True:
            mid = 0.5 * (a + b)
            if mid <= a or mid >= b:
                break
            if _sturm_count(d, e2, mid, pivmin) > j:
                b = mid
            else:
                a = mid
        out[j] = b
        lo = a
    return out


def sturm_count(diag: np.ndarray, off: np.ndarray, lam: float) -> int:
    """Eigenvalues below lam of the symmetric tridiagonal (diag, off)."""
    d = np.ascontiguousarray(diag, dtype=float)
    e2 = np.ascontiguousarray(off, dtype=float) ** 2
    return int(_sturm_count(d, e2, float(lam), _pivmin(d, off)))


def _pivmin(d, off) -> float:
    scale = max(float(np.max(np.abs(d))), float(np.max(np.abs(off))) if len(off) else 0.0, 1.0)
    return np.finfo(float).tiny * scale**2 if scale**2 < 1e300 else np.finfo(float).tiny


def tridiagonal_lowest(diag: np.ndarray, off: np.ndarray, k: int) -> np.ndarray:
    d = np.ascontiguousarray(diag, dtype=float)
    off = np.ascontiguousarray(off, dtype=float)
    radius = np.zeros_like(d)
    radius[:-1] += np.abs(off)
    radius[1:] += np.abs(off)
    lo = float(np.min(d - radius))
    hi = float(np.max(d + radius))
    pad = 1e-12 * max(abs(lo), abs(hi), 1.0)
    return _bisect_lowest(d, off**2, int(k), lo - pad, hi + pad, _pivmin(d, off))


def _inverse_iteration(A: BandedOperator, lam: float, steps: int = 3) -> np.ndarray:
    w = A.bandwidth
    n = A.n
    ab = np.zeros((2 * w + 1, n))
    for k in range(-w, w + 1):
        dk = A.diagonal(k)
        # solve_banded layout: ab[w - k, j] = A[j - k, j]
        if k >= 0:
            ab[w - k, k:] = dk
        else:
            ab[w - k, : n + k] = dk
    shift = lam + 1e-10 * max(abs(lam), 1.0)
    ab[w] -= shift
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    for _ in range(steps):
        v = sla.solve_banded((w, w), ab, v)
        v /= np.linalg.norm(v)
    return v


def eigen_symmetric(A: BandedOperator, k: int, vectors: bool = False) -> SpectrumResult:
    if not A.symmetric:
        raise SpectralError("eigen_symmetric needs an exactly symmetric operator")
    if k < 0 or k > A.n:
        raise SpectralError(f"k must be in [0, {A.n}], got {k}")
    g = A.grid
    if k == 0:
        return SpectrumResult(np.zeros(0), 0, g, "empty")
    if A.bandwidth <= 1:
        off = A.diagonal(1) if A.bandwidth == 1 else np.zeros(A.n - 1)
        vals = tridiagonal_lowest(A.diagonal(0), off, k)
        method = "sturm-bisection"
    elif A.n <= DENSE_LIMIT:
        vals = sla.eigh(A.to_dense(), eigvals_only=True, subset_by_index=[0, k - 1])
        method = "dense"
    else:
        raise SpectralError(
            f"banded operator with bandwidth {A.bandwidth} and n={A.n} > {DENSE_LIMIT}; "
            "use a coarser grid for operator products"
        )
    vals = np.sort(np.asarray(vals, dtype=float))
    if not vectors:
        return SpectrumResult(vals, k, g, method)
    V = np.column_stack([_inverse_iteration(A, lam) for lam in vals])
    res = np.array([np.linalg.norm(A.matvec(V[:, i]) - vals[i] * V[:, i]) for i in range(k)])
    return SpectrumResult(vals, k, g, method, residuals=res, vectors=V)


def symmetrized(A: BandedOperator, rho: Field | np.ndarray, tol: float = SYMMETRIZE_TOL) -> BandedOperator:
    """D(rho) A D(rho)^-1 made exactly symmetric; fails if it is not symmetric to tol * max|A|."""
    S = conjugate_by_weight(A, rho)
    St = transpose(S)
    gap = float(np.max(np.abs(S.bands - St.bands)))
    if gap > tol * A.max_abs():
        raise SpectralError(
            f"D(rho) A D(rho)^-1 is not symmetric: max asymmetry {gap:.3e} "
            f"exceeds {tol:g} * max|A| = {tol * A.max_abs():.3e}; wrong weight or not pseudo-Hermitian"
        )
    return BandedOperator(A.grid, 0.5 * (S.bands + St.bands))


def eigen_via_similarity(A_nonsym: BandedOperator, rho: Field | np.ndarray, k: int) -> SpectrumResult:
    r = eigen_symmetric(symmetrized(A_nonsym, rho), k)
    return SpectrumResult(r.eigenvalues, r.k, r.grid, "similarity+" + r.method)


# --------------------------------------------------------------------------
# Comparison


@dataclass(frozen=True)
class SpectrumComparison:
    matched: list[tuple[float, float]]
    unmatched_first: list[float]
    unmatched_second: list[float]
    max_deviation: float
    gaps: list[float]
    ok: bool

    def to_dict(self) -> dict:
        return {
            "matched": [list(p) for p in self.matched],
            "unmatched_first": self.unmatched_first,
            "unmatched_second": self.unmatched_second,
            "max_deviation": self.max_deviation,
            "gaps": self.gaps,
            "ok": self.ok,
        }


def _values(s) -> np.ndarray:
    return np.sort(np.asarray(s.eigenvalues if isinstance(s, SpectrumResult) else s, dtype=float))


def spectrum_compare(s1, s2, tol: float, allow_missing: int = 0, offset: float = 0.0) -> SpectrumComparison:
    """Greedy two-pointer matching of sorted lists (s1 + offset against s2).

    Levels of either list above the top of the other (plus tol) lie outside
    the common window and are not counted as missing.
    """
    a = _values(s1) + offset
    b = _values(s2)
    if len(a) and len(b):
        top = min(a[-1], b[-1]) + tol
        a = a[a <= top]
        b = b[b <= top]
    i = j = 0
    matched, ua, ub = [], [], []
    while i < len(a) and j < len(b):
        if abs(a[i] - b[j]) <= tol:
            matched.append((float(a[i] - offset), float(b[j])))
            i += 1
            j += 1
        elif a[i] < b[j]:
            ua.append(float(a[i] - offset))
            i += 1
        else:
            ub.append(float(b[j]))
            j += 1
    ua.extend(float(v - offset) for v in a[i:])
    ub.extend(float(v) for v in b[j:])
    dev = max((abs(p + offset - q) for p, q in matched), default=0.0)
    levels = [q for _, q in matched]
    gaps = [float(y - x) for x, y in zip(levels, levels[1:])]
    ok = bool(matched) and len(ua) + len(ub) <= allow_missing
    return SpectrumComparison(matched, ua, ub, float(dev), gaps, ok)


# --------------------------------------------------------------------------
# Refinement


def _order_from_differences(h: Sequence[float], lam: Sequence[float]) -> float:
    """Order p with lam(h) = L + C h^p through three (h, lam) samples."""
    d1 = lam[0] - lam[1]
    d2 = lam[1] - lam[2]
    if d2 == 0 or d1 / d2 <= 0:
        return float("nan")
    target = d1 / d2

    def f(p):
        return (h[0] ** p - h[1] ** p) / (h[1] ** p - h[2] ** p) - target

    try:
        return float(brentq(f, 0.05, 12.0))
    except ValueError:
        return float("nan")


def _order_from_errors(h: Sequence[float], err: Sequence[float]) -> float:
    e1, e2 = abs(err[-2]), abs(err[-1])
    if e1 == 0 or e2 == 0:
        return float("nan")
    return float(np.log(e1 / e2) / np.log(h[-2] / h[-1]))


def convergence_study(
    builder: Callable[[Grid], BandedOperator],
    grids: Sequence[Grid],
    k: int,
    reference: Sequence[float] | None = None,
) -> dict:
    """Observed order per level from a refinement chain of at least three grids."""
    if len(grids) < 3:
        raise SpectralError(f"a convergence study needs at least 3 grids, got {len(grids)}")
    g0 = grids[0]
    for g in grids[1:]:
        if (g.x_min, g.x_max) != (g0.x_min, g0.x_max):
            raise SpectralError("refinement grids must share the same domain")
    ns = [g.n for g in grids]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise SpectralError(f"grid sizes must strictly increase, got {ns}")
    spectra = [eigen_symmetric(builder(g), k).eigenvalues for g in grids]
    hs = [g.h for g in grids]
    levels = []
    for i in range(k):
        lam = [float(s[i]) for s in spectra]
        entry = {
            "index": i,
            "eigenvalues": lam,
            "order": _order_from_differences(hs[-3:], lam[-3:]),
        }
        if reference is not None and i < len(reference):
            err = [v - reference[i] for v in lam]
            entry["reference"] = float(reference[i])
            entry["errors"] = err
            entry["order_vs_reference"] = _order_from_errors(hs, err)
        levels.append(entry)
    return {"grids": [g.to_dict() for g in grids], "h": hs, "k": k, "levels": levels}


__all__ = [
    "SpectralError",
    "SpectrumResult",
    "SpectrumComparison",
    "sturm_count",
    "tridiagonal_lowest",
    "eigen_symmetric",
    "eigen_via_similarity",
    "symmetrized",
    "spectrum_compare",
    "convergence_study",
    "OperatorError",
]
