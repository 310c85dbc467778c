"""Banded matrix images of first-order ladder operators and Sturm-Liouville operators.

A ``BandedOperator`` stores diagonals by row: ``bands[w + k, i] = A[i, i + k]``
for offsets ``-w <= k <= w``; entries that would fall outside the matrix are
kept at zero.  The discrete adjoint is the exact transpose, so products such
as X^T X come out bit-for-bit symmetric.

Operator identities that hold in the continuum (commutators, intertwining,
quasi-Hamiltonian factorizations) are measured by their action on a few
smooth probe functions, on interior rows only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np
import scipy.sparse as sp

from .expr import Expr, differentiate, simplify
from .grid import Field, Grid, sample

DEFAULT_BUFFER = 5


class OperatorError(ValueError):
    pass


@dataclass(frozen=True)
class LadderSpec:
    """eta = a d/dx + b; its formal adjoint is -a d/dx + (b - a')."""

    a: Expr
    b: Expr

    def adjoint_coefficients(self) -> tuple[Expr, Expr]:
        return simplify(-self.a), simplify(self.b - differentiate(self.a))


@dataclass(frozen=True, eq=False)
class BandedOperator:
    grid: Grid
    bands: np.ndarray

    def __post_init__(self):
        b = np.array(self.bands, dtype=float)
        if b.ndim != 2 or b.shape[0] % 2 != 1 or b.shape[1] != self.grid.n:
            raise OperatorError(f"bands must have shape (2w+1, {self.grid.n}), got {b.shape}")
        w = (b.shape[0] - 1) // 2
        n = self.grid.n
        if w >= n:
            # diagonals at |k| >= n do not exist
            b = b[w - (n - 1): w + n]
            w = n - 1
        for k in range(-w, w + 1):
            if k > 0:
                b[w + k, n - k:] = 0.0
            elif k < 0:
                b[w + k, :-k] = 0.0
        b.setflags(write=False)
        object.__setattr__(self, "bands", b)
        object.__setattr__(self, "symmetric", _bands_symmetric(b))

    @property
    def bandwidth(self) -> int:
        return (self.bands.shape[0] - 1) // 2

    @property
    def n(self) -> int:
        return self.grid.n

    def diagonal(self, k: int = 0) -> np.ndarray:
        """The k-th diagonal as an array of length n - |k| (A[i, i+k])."""
        w = self.bandwidth
        if abs(k) > w:
            return np.zeros(self.n - abs(k))
        row = self.bands[w + k]
        return row[: self.n - k] if k >= 0 else row[-k:]

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for k in range(-self.bandwidth, self.bandwidth + 1):
            out += np.diag(self.diagonal(k), k)
        return out

    def to_sparse(self) -> sp.csr_matrix:
        w = self.bandwidth
        offsets = list(range(-w, w + 1))
        return sp.diags([self.diagonal(k) for k in offsets], offsets, shape=(self.n, self.n), format="csr")

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = np.zeros(self.n)
        w = self.bandwidth
        for k in range(-w, w + 1):
            if k >= 0:
                out[: self.n - k] += self.bands[w + k, : self.n - k] * v[k:]
            else:
                out[-k:] += self.bands[w + k, -k:] * v[: self.n + k]
        return out

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.bands)))

    def __matmul__(self, other: "BandedOperator") -> "BandedOperator":
        return compose(self, other)

    def __add__(self, other: "BandedOperator") -> "BandedOperator":
        _same_grid(self, other)
        w = max(self.bandwidth, other.bandwidth)
        return BandedOperator(self.grid, _pad(self.bands, w) + _pad(other.bands, w))

    def __sub__(self, other: "BandedOperator") -> "BandedOperator":
        _same_grid(self, other)
        w = max(self.bandwidth, other.bandwidth)
        return BandedOperator(self.grid, _pad(self.bands, w) - _pad(other.bands, w))

    def __mul__(self, scalar: float) -> "BandedOperator":
        return BandedOperator(self.grid, self.bands * float(scalar))

    __rmul__ = __mul__

    def shift(self, value: float) -> "BandedOperator":
        """A + value * I."""
        b = np.array(self.bands)
        b[self.bandwidth] += value
        return BandedOperator(self.grid, b)

    def dump(self, stream: TextIO) -> None:
        """Text dump: header line, then one line per diagonal ``offset: v_0 v_1 ...``.

        Row ``k`` lists A[i, i+k] for the rows i where the entry exists.
        """
        stream.write(f"# banded n={self.n} bandwidth={self.bandwidth} h={self.grid.h!r}\n")
        for k in range(-self.bandwidth, self.bandwidth + 1):
            stream.write(f"{k}: " + " ".join(repr(float(v)) for v in self.diagonal(k)) + "\n")


def _bands_symmetric(b: np.ndarray) -> bool:
    w = (b.shape[0] - 1) // 2
    n = b.shape[1]
    for k in range(1, w + 1):
        upper = b[w + k, : n - k]
        lower = b[w - k, k:]
        if not np.array_equal(upper, lower):
            return False
    return True


def _pad(b: np.ndarray, w: int) -> np.ndarray:
    cur = (b.shape[0] - 1) // 2
    if cur == w:
        return b
    out = np.zeros((2 * w + 1, b.shape[1]))
    out[w - cur: w + cur + 1] = b
    return out


def _same_grid(a: BandedOperator, b: BandedOperator) -> None:
    if a.grid != b.grid:
        raise OperatorError(f"grid mismatch: {a.grid} vs {b.grid}")


def identity(g: Grid) -> BandedOperator:
    return BandedOperator(g, np.ones((1, g.n)))


def diagonal_operator(values: Field | np.ndarray, g: Grid | None = None) -> BandedOperator:
    if isinstance(values, Field):
        return BandedOperator(values.grid, values.values[None, :])
    return BandedOperator(g, np.asarray(values, dtype=float)[None, :])


def compose(A: BandedOperator, B: BandedOperator) -> BandedOperator:
    """Exact banded product A @ B; the bandwidths add."""
    _same_grid(A, B)
    n = A.n
    wa, wb = A.bandwidth, B.bandwidth
    w = wa + wb
    out = np.zeros((2 * w + 1, n))
    # contributions to each target diagonal arrive in ascending p, i.e. in
    # ascending inner index, which keeps X^T X exactly symmetric
    for p in range(-wa, wa + 1):
        a_row = A.bands[wa + p]
        for q in range(-wb, wb + 1):
            b_row = B.bands[wb + q]
            shifted = np.zeros(n)
            if p >= 0:
                shifted[: n - p] = b_row[p:]
            else:
                shifted[-p:] = b_row[: n + p]
            out[w + p + q] += a_row * shifted
    return BandedOperator(A.grid, out)


def transpose(A: BandedOperator) -> BandedOperator:
    w = A.bandwidth
    n = A.n
    out = np.zeros_like(A.bands)
    for k in range(-w, w + 1):
        src = A.bands[w - k]
        if k >= 0:
            out[w + k, : n - k] = src[k:]
        else:
            out[w + k, -k:] = src[: n + k]
    return BandedOperator(A.grid, out)


def conjugate_by_weight(A: BandedOperator, w: Field | np.ndarray) -> BandedOperator:
    """D(w) A D(w)^-1 for a strictly positive weight."""
    wv = w.values if isinstance(w, Field) else np.asarray(w, dtype=float)
    if np.any(wv <= 0) or not np.all(np.isfinite(wv)):
        i = int(np.flatnonzero((wv <= 0) | ~np.isfinite(wv))[0])
        raise OperatorError(f"weight must be positive, got {wv[i]} at index {i}")
    bw = A.bandwidth
    n = A.n
    out = np.array(A.bands)
    for k in range(-bw, bw + 1):
        if k == 0:
            continue
        ratio = np.ones(n)
        if k > 0:
            ratio[: n - k] = wv[: n - k] / wv[k:]
        else:
            ratio[-k:] = wv[-k:] / wv[: n + k]
        out[bw + k] *= ratio
    return BandedOperator(A.grid, out)


def ladder_matrix(s: LadderSpec, g: Grid, which: str = "eta") -> BandedOperator:
    """Central-difference image of eta; ``which="eta_dagger"`` gives its exact transpose."""
    if which not in ("eta", "eta_dagger"):
        raise OperatorError(f"which must be 'eta' or 'eta_dagger', got {which!r}")
    a = sample(s.a, g).values
    b = sample(s.b, g).values
    half = a / (2.0 * g.h)
    bands = np.vstack([-half, b, half])
    eta = BandedOperator(g, bands)
    return eta if which == "eta" else transpose(eta)


def sturm_liouville_matrix(mass: Expr, potential: Field | np.ndarray, g: Grid) -> BandedOperator:
    """-d/dx m d/dx + V with the mass sampled at cell midpoints (exactly symmetric)."""
    from .expr import evaluate

    m = np.asarray(evaluate(mass, g.half_points), dtype=float)
    bad = ~(m > 0)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise OperatorError(f"mass must be positive, got {m[i]} at half-point x={g.half_points[i]!r}")
    V = potential.values if isinstance(potential, Field) else np.asarray(potential, dtype=float)
    h2 = g.h**2
    off = -m[1:-1] / h2
    upper = np.zeros(g.n)
    lower = np.zeros(g.n)
    upper[:-1] = off
    lower[1:] = off
    diag = (m[:-1] + m[1:]) / h2 + V
    return BandedOperator(g, np.vstack([lower, diag, upper]))


def first_derivative_matrix(coeff: Field, g: Grid) -> BandedOperator:
    """Central-difference c(x) d/dx."""
    half = coeff.values / (2.0 * g.h)
    return BandedOperator(g, np.vstack([-half, np.zeros(g.n), half]))


def polynomial(A: BandedOperator, coeffs: Sequence[float]) -> BandedOperator:
    """c0 A^2 + c1 A + c2 for ``coeffs = (c0, c1, c2)`` (highest power first)."""
    c0, c1, c2 = coeffs
    return (compose(A, A) * c0 + A * c1).shift(c2)


def commutator_symbol(s: LadderSpec) -> Expr:
    """2 a b' - a a'', the value of [eta, eta^dagger]."""
    return simplify(2.0 * s.a * differentiate(s.b) - s.a * differentiate(s.a, 2))


# --------------------------------------------------------------------------
# Residuals measured on smooth probes


def probe_fields(g: Grid) -> list[np.ndarray]:
    """Smooth, rapidly decaying test functions centred inside the grid."""
    x = g.points
    c = 0.5 * (g.x_min + g.x_max)
    s = (g.x_max - g.x_min) / 10.0
    return [
        np.exp(-0.5 * ((x - c) / s) ** 2),
        (x - c + 0.5 * s) / s * np.exp(-0.5 * ((x - c + 0.5 * s) / (0.8 * s)) ** 2),
        np.exp(-0.5 * ((x - c - 0.7 * s) / (0.7 * s)) ** 2),
    ]


def _interior(n: int, buffer: int) -> slice:
    if 2 * buffer >= n:
        raise OperatorError(f"buffer {buffer} leaves no interior rows on a grid of {n} points")
    return slice(buffer, n - buffer)


def identity_residual(
    lhs: BandedOperator,
    rhs: BandedOperator,
    buffer: int = DEFAULT_BUFFER,
    probes: Iterable[np.ndarray] | None = None,
) -> float:
    """max |(lhs - rhs) f| / max(|lhs f|, |rhs f|) over probes f and interior rows."""
    _same_grid(lhs, rhs)
    sl = _interior(lhs.n, buffer)
    num = 0.0
    den = 0.0
    for f in probes if probes is not None else probe_fields(lhs.grid):
        lf, rf = lhs.matvec(f)[sl], rhs.matvec(f)[sl]
        num = max(num, float(np.max(np.abs(lf - rf))))
        den = max(den, float(np.max(np.abs(lf))), float(np.max(np.abs(rf))))
    return num / den if den > 0 else num


def commutator_matrix(s: LadderSpec, g: Grid) -> BandedOperator:
    eta = ladder_matrix(s, g)
    eta_t = transpose(eta)
    return compose(eta, eta_t) - compose(eta_t, eta)


def commutator_residual(s: LadderSpec, g: Grid, buffer: int = DEFAULT_BUFFER) -> float:
    """Discrete eta eta^T - eta^T eta against multiplication by 2ab' - aa''."""
    target = diagonal_operator(sample(commutator_symbol(s), g))
    return identity_residual(commutator_matrix(s, g), target, buffer)


def adjoint_gap(s: LadderSpec, g: Grid, buffer: int = DEFAULT_BUFFER) -> float:
    """Diagnostic: transpose of eta versus a direct discretization of -a d/dx + (b - a')."""
    a_adj, b_adj = s.adjoint_coefficients()
    direct = ladder_matrix(LadderSpec(a_adj, b_adj), g)
    return identity_residual(ladder_matrix(s, g, "eta_dagger"), direct, buffer)
