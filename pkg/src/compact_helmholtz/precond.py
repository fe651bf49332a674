"""Fast direct solver for the second-order operator.

The lateral directions are diagonalised by fast trigonometric transforms
(DST-I for Dirichlet sides, DCT-I for Neumann sides); what remains is one
complex tridiagonal system per lateral mode pair, solved along z by batched
elimination.  Work happens in a transposed ``(nz, nx, ny)`` layout so each
elimination step touches one contiguous plane.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.linalg

from .core import Kind, ResonanceError, Setup

PIVOT_GUARD = 1e-12
BATCH_ELEMENTS = 1 << 21


@dataclass(frozen=True)
class LateralTransform:
    """Eigen-decomposition of the 1D neighbour matrix ``Lambda`` for one axis.

    For Dirichlet ends ``Lambda`` has ones on both off-diagonals; a Neumann
    end doubles the single off-diagonal entry of its boundary row.
    """

    kind: Kind
    n: int
    eigenvalues: np.ndarray  # of Lambda (so the second difference is eigenvalues - 2)

    def forward(self, U: np.ndarray, axis: int) -> np.ndarray:
        if self.kind is Kind.DIRICHLET:
            return scipy.fft.dst(U, type=1, axis=axis, norm="ortho")
        # DCT-I applied twice is 2(n-1) times the identity
        return scipy.fft.dct(U, type=1, axis=axis) / (2 * (self.n - 1))

    def inverse(self, C: np.ndarray, axis: int) -> np.ndarray:
        if self.kind is Kind.DIRICHLET:
            return scipy.fft.dst(C, type=1, axis=axis, norm="ortho")
        return scipy.fft.dct(C, type=1, axis=axis)

    def matrix(self) -> np.ndarray:
        n = self.n
        L = np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
        if self.kind is Kind.NEUMANN:
            L[0, 1] = L[-1, -2] = 2.0
        return L


def build_transform(kind: Kind, n: int) -> LateralTransform:
    if n < 1:
        raise ValueError("transform size must be positive")
    if kind is Kind.DIRICHLET:
        j = np.arange(1, n + 1)
        lam = 2 * np.cos(j * np.pi / (n + 1))
    elif kind is Kind.NEUMANN:
        if n < 2:
            raise ValueError("Neumann transform needs at least two points")
        j = np.arange(n)
        lam = 2 * np.cos(j * np.pi / (n - 1))
    else:
        raise ValueError("lateral transforms exist for Dirichlet or Neumann sides only")
    return LateralTransform(kind, n, lam)


@dataclass(frozen=True)
class ZPencilSystem:
    """Tridiagonal system ``lower[l] x[l-1] + diag[l] x[l] + upper[l] x[l+1]``."""

    lower: np.ndarray  # length n, lower[0] unused
    diag: np.ndarray
    upper: np.ndarray  # length n, upper[-1] unused
    mode: tuple = ()

    def dense(self) -> np.ndarray:
        n = len(self.diag)
        return (np.diag(self.diag) + np.diag(self.upper[:-1], 1) + np.diag(self.lower[1:], -1)).astype(complex)


def _z_closure(setup: Setup):
    """(upper[0], lower[-1], extra diagonal at bottom, at top)."""
    ikh2 = 2j * setup.k * setup.h
    out = []
    for side in (0, 1):
        kind = setup.bc.face(2, side).kind
        off = 1.0 if kind is Kind.DIRICHLET else 2.0
        extra = ikh2 if kind is Kind.SOMMERFELD else 0.0
        out.append((off, extra))
    return out[0][0], out[1][0], out[0][1], out[1][1]


def _transforms(setup: Setup):
    cached = setup._cache.get("transforms")
    if cached is None:
        kind = setup.lateral_kind
        cached = (build_transform(kind, setup.shape[0]), build_transform(kind, setup.shape[1]))
        setup._cache["transforms"] = cached
    return cached


def _mode_shift(setup: Setup) -> np.ndarray:
    """Per-pencil diagonal ``lam_m + lam_n - 4 + k^2 h^2 - 2`` (shape nx, ny)."""
    tx, ty = _transforms(setup)
    kh2 = (setup.k * setup.h) ** 2
    return (tx.eigenvalues[:, None] - 2) + (ty.eigenvalues[None, :] - 2) + kh2 - 2


def z_pencil(setup: Setup, m: int, n: int) -> ZPencilSystem:
    """The z-system for lateral mode pair ``(m, n)`` (zero-based)."""
    return _pencil_at(_mode_shift(setup)[m, n], setup.shape[2], _z_closure(setup), (m, n))


def _pivot_scale(diag) -> np.ndarray:
    return np.maximum(np.abs(diag), 2.0)


def solve_z_pencil(pencil: ZPencilSystem, rhs: np.ndarray) -> np.ndarray:
    """Thomas elimination with a pivot guard and a pivoted dense fallback."""
    d, lo, up = pencil.diag, pencil.lower, pencil.upper
    n = len(d)
    scale = float(np.max(_pivot_scale(d)))
    cp = np.zeros(n, dtype=complex)
    x = np.array(rhs, dtype=complex)
    denom = d[0]
    ok = abs(denom) >= PIVOT_GUARD * scale
    if ok:
        cp[0] = up[0] / denom
        x[0] /= denom
        for l in range(1, n):
            denom = d[l] - lo[l] * cp[l - 1]
            if abs(denom) < PIVOT_GUARD * scale:
                ok = False
                break
            cp[l] = up[l] / denom
            x[l] = (x[l] - lo[l] * x[l - 1]) / denom
    if ok:
        for l in range(n - 2, -1, -1):
            x[l] -= cp[l] * x[l + 1]
        return x
    return _dense_pencil_solve(pencil, np.asarray(rhs, dtype=complex), scale)


def _dense_pencil_solve(pencil: ZPencilSystem, rhs: np.ndarray, scale: float) -> np.ndarray:
    M = pencil.dense()
    lu, piv = scipy.linalg.lu_factor(M)
    piv_abs = np.abs(np.diag(lu))
    if piv_abs.min() < PIVOT_GUARD * scale:
        l = int(np.argmin(piv_abs))
        raise ResonanceError(
            f"second-order operator is singular for lateral mode {pencil.mode} (z row {l})",
            mode=tuple(pencil.mode) + (l,),
        )
    return scipy.linalg.lu_solve((lu, piv), rhs)


def _pencil_at(shift_mn, nz: int, closure, mode) -> ZPencilSystem:
    up0, lo_last, ex0, ex1 = closure
    d = np.full(nz, shift_mn, dtype=complex)
    d[0] += ex0
    d[-1] += ex1
    lower = np.ones(nz, dtype=complex)
    upper = np.ones(nz, dtype=complex)
    if nz > 1:
        upper[0], lower[-1] = up0, lo_last
    return ZPencilSystem(lower, d, upper, mode)


def _solve_batch(shift: np.ndarray, R: np.ndarray, closure) -> np.ndarray:
    """In-place elimination of the pencils stacked in ``R`` (nz, b, ny).

    Returns the (row, col) indices of pencils whose pivots tripped the guard;
    their entries in ``R`` are garbage and must be recomputed.
    """
    nz = R.shape[0]
    up0, lo_last, ex0, ex1 = closure
    scale = _pivot_scale(shift) + abs(ex0) + abs(ex1)
    if nz == 1:
        d = shift + ex0 + ex1
        R[0] /= d
        return np.argwhere(np.abs(d) < PIVOT_GUARD * scale)
    cp = np.empty((nz - 1,) + shift.shape, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        denom = shift + ex0
        minpiv = np.abs(denom)
        cp[0] = up0 / denom
        R[0] /= denom
        for l in range(1, nz):
            a = lo_last if l == nz - 1 else 1.0
            denom = shift - a * cp[l - 1]
            if l == nz - 1:
                denom = denom + ex1
            np.minimum(minpiv, np.abs(denom), out=minpiv)
            R[l] -= a * R[l - 1]
            R[l] /= denom
            if l < nz - 1:
                cp[l] = 1.0 / denom
        for l in range(nz - 2, -1, -1):
            R[l] -= cp[l] * R[l + 1]
    return np.argwhere(~(minpiv >= PIVOT_GUARD * scale))


def precondition_solve(setup: Setup, Y: np.ndarray) -> np.ndarray:
    """Solve ``A2 U = Y`` directly."""
    Y = setup.check_field(Y)
    if setup.dim == 1:
        return _solve_1d(setup, Y)
    tx, ty = _transforms(setup)
    shift = _mode_shift(setup)
    closure = _z_closure(setup)
    # (nz, nx, ny) layout: z planes contiguous
    R = np.ascontiguousarray(np.moveaxis(np.asarray(Y, dtype=complex), 2, 0))
    R = tx.forward(R, 1)
    R = ty.forward(R, 2)
    nz, nx, ny = R.shape
    step = max(1, BATCH_ELEMENTS // max(1, nz * ny))
    original = None  # transformed right-hand side, rebuilt only if a pivot guard trips
    for m0 in range(0, nx, step):
        m1 = min(nx, m0 + step)
        block = np.ascontiguousarray(R[:, m0:m1])
        bad = _solve_batch(shift[m0:m1], block, closure)
        if len(bad) and original is None:
            original = ty.forward(tx.forward(np.moveaxis(np.asarray(Y, dtype=complex), 2, 0), 1), 2)
        for m, n in bad:
            pencil = _pencil_at(shift[m0 + m, n], nz, closure, (int(m0 + m), int(n)))
            block[:, m, n] = _dense_pencil_solve(pencil, original[:, m0 + m, n],
                                                 float(np.max(_pivot_scale(pencil.diag))))
        R[:, m0:m1] = block
    R = ty.inverse(R, 2)
    R = tx.inverse(R, 1)
    return np.ascontiguousarray(np.moveaxis(R, 0, 2))


def _solve_1d(setup: Setup, Y: np.ndarray) -> np.ndarray:
    n = setup.shape[0]
    t = build_transform(Kind.DIRICHLET, n)
    lam = t.eigenvalues - 2 + (setup.k * setup.h) ** 2
    bad = np.abs(lam) < PIVOT_GUARD * np.maximum(np.abs(lam), 2.0)
    if bad.any():
        j = int(np.argmax(bad)) + 1
        raise ResonanceError(f"second-order operator is singular for mode {j}", mode=(j,))
    return t.inverse(t.forward(np.asarray(Y, dtype=complex), 0) / lam, 0)


def precondition_check(setup: Setup, Y: np.ndarray) -> float:
    """Relative residual of ``A2 precondition_solve(Y) = Y``."""
    from .operator import apply_A2

    U = precondition_solve(setup, Y)
    return float(np.linalg.norm(apply_A2(setup, U) - Y) / max(np.linalg.norm(Y), 1e-300))
