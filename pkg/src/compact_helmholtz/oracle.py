"""Dense reference assembly, independent of the matrix-free kernels.

Two constructions are offered.  ``stencil-walk`` visits every row, expands
the operator as products of the 1D second-difference stencil ``(1, -2, 1)``
and resolves each neighbour that falls outside the unknown set by literal
ghost substitution.  ``kronecker`` builds the same matrix from Kronecker
products of 1D blocks and is only available for separable closures.

Nothing here shares code with ``operator`` beyond the problem descriptor.
"""
from __future__ import annotations

import cmath
import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import ConfigurationError, Kind, Setup, local_order

MAX_UNKNOWNS = 4096

_E = {-1: 1.0, 0: -2.0, 1: 1.0}  # second difference
_D = {-1: 0.0, 0: 1.0, 1: 0.0}   # identity


@dataclass(frozen=True)
class DenseOperator:
    matrix: np.ndarray
    provenance: str

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, x):
        return self.matrix @ x


def _guard(setup: Setup) -> None:
    if setup.grid.size > MAX_UNKNOWNS:
        raise ConfigurationError(
            f"dense oracle limited to {MAX_UNKNOWNS} unknowns, got {setup.grid.size}"
        )


def _coefficients(setup: Setup):
    kh2 = (setup.k * setup.h) ** 2
    cross = (1 + kh2 / 30) / 6
    shift = kh2 * (1 - kh2 / 12 + kh2**2 / 360)
    return kh2, cross, shift


def _w6(a, b, c, cross, shift):
    """Weight of offset (a, b, c) in the 27-point operator, term by term."""
    ex, ey, ez = _E[a], _E[b], _E[c]
    dx, dy, dz = _D[a], _D[b], _D[c]
    return (ex * dy * dz + dx * ey * dz + dx * dy * ez
            + cross * (ex * ey * dz + ex * dy * ez + dx * ey * ez)
            + ex * ey * ez / 30
            + shift * dx * dy * dz)


def _w2(a, b, c, kh2):
    ex, ey, ez = _E[a], _E[b], _E[c]
    dx, dy, dz = _D[a], _D[b], _D[c]
    return ex * dy * dz + dx * ey * dz + dx * dy * ez + kh2 * dx * dy * dz


class _Resolver:
    """Maps lattice positions (possibly ghost) to unknowns or known data."""

    def __init__(self, setup: Setup, with_data: bool, src=None):
        self.setup = setup
        self.with_data = with_data
        self.src = src  # when set, Neumann mirrors carry their pointwise defect
        self.shape = setup.shape
        self.kinds = [(setup.bc.face(d, 0).kind, setup.bc.face(d, 1).kind) for d in range(setup.dim)]

    def point(self, idx):
        g = self.setup.grid
        return tuple(g.origin[d] + g.h * idx[d] for d in range(g.dim))

    def resolve(self, idx):
        """Return (list of (flat, coeff), constant)."""
        idx = list(idx)
        defect = 0j
        for d, n in enumerate(self.shape):
            for side, ghost, inner in ((0, -1, 1), (1, n, n - 2)):
                if idx[d] == ghost and self.kinds[d][side] is Kind.NEUMANN:
                    if self.src is not None:
                        defect += _mirror_defect(self.setup, self.src, d, side, self.point(idx))
                    idx[d] = inner
        for d, n in enumerate(self.shape):
            for side, ghost in ((0, -1), (1, n)):
                if idx[d] == ghost:
                    if self.kinds[d][side] is not Kind.DIRICHLET:
                        raise AssertionError("unresolved non-Dirichlet ghost")
                    face = self.setup.bc.face(d, side)
                    if not self.with_data or face.data is None:
                        return [], defect
                    p = self.point(idx)
                    if self.setup.dim == 1:
                        p = (p[0], 0.0, 0.0)
                    return [], defect + complex(face.data[(0, 0, 0)](*p))
        return [(int(np.ravel_multi_index(idx, self.shape)), 1.0)], defect


def _sommerfeld_tangent_weights(k, h):
    """P1 and P0 stencils (3x3 over lateral offsets) with their phases."""
    ikh = 1j * k * h
    kh2 = (k * h) ** 2
    m3 = 1.0 / (1.0 + 2.0 * ikh / 3.0 * (1.0 + 2.0 * kh2 / 15.0))
    m1 = (ikh / 90.0 + (1.0 + kh2 / 30.0) / (6.0 * m3)) / (1.0 + 2.0 * ikh / 3.0)
    lat = m1 + 2.0 * ikh / 3.0 * (1.0 / 60.0 - m1)
    ident = 1.0 - 2.0 * ikh / 3.0 - 4j * (h * k) ** 3 / 45.0
    P1, P0 = {}, {}
    for a, b in itertools.product((-1, 0, 1), repeat=2):
        sig = _E[a] * _D[b] + _D[a] * _E[b]
        prod = _E[a] * _E[b]
        dd = _D[a] * _D[b]
        P1[(a, b)] = cmath.exp(2 * ikh) * m3 * (lat * sig + prod / (30.0 * m3) + ident * dd)
        P0[(a, b)] = cmath.exp(ikh) * m3 * (4.0 * ikh / 3.0 * (1.0 + 2.0 * kh2 / 15.0) * dd
                                            - 4.0 * ikh / 3.0 * (1.0 / 60.0 - m1) * sig)
    return P1, P0


def _walk(setup: Setup, which: str, with_data: bool, src=None, matrix: bool = True):
    """Row-by-row stencil expansion; returns (matrix or None, constants)."""
    n = setup.grid.size
    M = np.zeros((n, n), dtype=complex) if matrix else None
    const = np.zeros(n, dtype=complex)
    res = _Resolver(setup, with_data, src)
    k, h = setup.k, setup.h
    kh2, cross, shift = _coefficients(setup)

    if setup.dim == 1:
        d1 = 1 - kh2**2 / 360
        d2 = -2 + kh2 - 7 * kh2**2 / 90
        w = {-1: d1, 0: d2, 1: d1} if which == "A6" else {-1: 1.0, 0: -2 + kh2, 1: 1.0}
        for i in range(setup.shape[0]):
            for a, wt in w.items():
                terms, c = res.resolve((i + a,))
                for col, cf in terms if matrix else ():
                    M[i, col] += wt * cf
                const[i] += wt * c
        return M, const

    nz = setup.shape[2]
    zkind = (setup.bc.z0.kind, setup.bc.z1.kind)
    P1, P0 = _sommerfeld_tangent_weights(k, h)

    def add(row, idx, wt):
        terms, c = res.resolve(idx)
        for col, cf in terms if matrix else ():
            M[row, col] += wt * cf
        const[row] += wt * c

    for row, (i, j, l) in enumerate(itertools.product(*(range(s) for s in setup.shape))):
        for a, b, c in itertools.product((-1, 0, 1), repeat=3):
            zz = l + c
            side = 0 if zz == -1 else 1 if zz == nz else None
            if which == "A2":
                wt = _w2(a, b, c, kh2)
                if wt == 0:
                    continue
                if side is not None and zkind[side] is Kind.SOMMERFELD:
                    # U_ghost = U_inner + 2ikh U_face
                    face = 0 if side == 0 else nz - 1
                    inner = 1 if side == 0 else nz - 2
                    add(row, (i + a, j + b, inner), wt)
                    add(row, (i + a, j + b, face), wt * 2j * k * h)
                    continue
                add(row, (i + a, j + b, zz), wt)
                continue
            wt = _w6(a, b, c, cross, shift)
            if side is not None and zkind[side] is Kind.SOMMERFELD:
                continue  # whole ghost plane handled below
            add(row, (i + a, j + b, zz), wt)
        if which == "A6":
            for side, face, inner in ((0, 0, 1), (1, nz - 1, nz - 2)):
                if zkind[side] is not Kind.SOMMERFELD or l != face:
                    continue
                for (a, b), wt in P1.items():
                    if wt != 0:
                        add(row, (i + a, j + b, inner), wt)
                for (a, b), wt in P0.items():
                    if wt != 0:
                        add(row, (i + a, j + b, face), wt)
    return M, const


def _lambda_1d(n: int, kind_lo: Kind, kind_hi: Kind, ikh2: complex = 0j) -> np.ndarray:
    """Second difference block with closures: Dirichlet, Neumann or Sommerfeld."""
    A = np.diag(np.full(n, -2.0 + 0j)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    for kind, row, nb in ((kind_lo, 0, 1), (kind_hi, n - 1, n - 2)):
        if kind is Kind.NEUMANN:
            A[row, nb] = 2.0
        elif kind is Kind.SOMMERFELD:
            A[row, nb] = 2.0
            A[row, row] += ikh2
    return A


def _kronecker(setup: Setup, which: str) -> np.ndarray:
    kh2, cross, shift = _coefficients(setup)
    if setup.dim == 1:
        L = _lambda_1d(setup.shape[0], Kind.DIRICHLET, Kind.DIRICHLET)
        I = np.eye(setup.shape[0])
        if which == "A2":
            return L + kh2 * I
        return (1 - kh2**2 / 360) * (L + 2 * I) + (-2 + kh2 - 7 * kh2**2 / 90) * I
    Ls, Is = [], []
    ikh2 = 2j * setup.k * setup.h
    for d in range(3):
        lo, hi = setup.bc.face(d, 0).kind, setup.bc.face(d, 1).kind
        if which == "A6" and Kind.SOMMERFELD in (lo, hi):
            raise ConfigurationError("Kronecker construction of A6 covers Dirichlet/Neumann only")
        Ls.append(_lambda_1d(setup.shape[d], lo, hi, ikh2))
        Is.append(np.eye(setup.shape[d]))

    def k3(a, b, c):
        return np.kron(a, np.kron(b, c))

    Lx, Ly, Lz = (k3(Ls[0], Is[1], Is[2]), k3(Is[0], Ls[1], Is[2]), k3(Is[0], Is[1], Ls[2]))
    Id = np.eye(setup.grid.size)
    if which == "A2":
        return Lx + Ly + Lz + kh2 * Id
    return (Lx + Ly + Lz + cross * (Lx @ Ly + Lx @ Lz + Ly @ Lz)
            + k3(Ls[0], Ls[1], Ls[2]) / 30 + shift * Id)


def assemble_dense(setup: Setup, which: str = "A6", construction: str = "stencil-walk") -> DenseOperator:
    if which not in ("A6", "A2"):
        raise ValueError(f"unknown operator {which!r}")
    _guard(setup)
    if construction == "stencil-walk":
        M, _ = _walk(setup, which, with_data=False)
    elif construction == "kronecker":
        M = _kronecker(setup, which)
    else:
        raise ValueError(f"unknown construction {construction!r}")
    return DenseOperator(M, construction)


# ---------------------------------------------------------------------------
# reference right-hand sides


def _volume_row(src, p, h, k):
    k2 = k * k
    x, y, z = p
    fv = lambda o: complex(src(o, x, y, z))
    lap = fv((2, 0, 0)) + fv((0, 2, 0)) + fv((0, 0, 2))
    mix = fv((2, 2, 0)) + fv((2, 0, 2)) + fv((0, 2, 2))
    quart = fv((4, 0, 0)) + fv((0, 4, 0)) + fv((0, 0, 4))
    return h**2 * ((1 - k2 * h**2 / 12 + k2**2 * h**4 / 360) * fv((0, 0, 0))
                   + h**2 / 12 * (1 - k2 * h**2 / 30) * lap
                   + h**4 / 360 * quart + h**4 / 90 * mix)


def _neumann_row(setup, src, axis, side, p):
    """Source part of the Neumann ghost relation at one boundary node."""
    h, k = setup.h, setup.k
    face = setup.bc.face(axis, side)
    s = 1 if side == 0 else -1
    fv = lambda n, a=0, b=0: complex(src(local_order(axis, n, a, b), *p)) * s**n
    bv = lambda a=0, b=0: (0j if face.data is None
                           else s * complex(face.data[local_order(axis, 0, a, b)](*p)))
    return (-2 * h * (1 - h**2 * k**2 / 6 + h**4 * k**4 / 120) * bv()
            - h**3 / 3 * (1 - h**2 * k**2 / 20) * fv(1)
            - h**5 / 60 * fv(3)
            - 7 * h**5 / 180 * (fv(1, 2, 0) + fv(1, 0, 2))
            + h**5 / 90 * (bv(2, 2) + k**2 * (bv(2, 0) + bv(0, 2)) + bv(4, 0) + bv(0, 4)))


def _mirror_defect(setup, src, axis, side, p):
    """``u(ghost) - u(mirror image)`` across a Neumann face, by odd Taylor terms.

    Works in the inward local coordinate; odd normal derivatives of order
    three and five follow from differentiating the equation along the normal.
    """
    h, k = setup.h, setup.k
    face = setup.bc.face(axis, side)
    s = 1 if side == 0 else -1
    q = list(p)
    g = setup.grid
    q[axis] = g.origin[axis] + h * (0 if side == 0 else g.shape[axis] - 1)
    fv = lambda n, a=0, b=0: complex(src(local_order(axis, n, a, b), *q)) * s**n
    bv = lambda a=0, b=0: (0j if face.data is None
                           else s * complex(face.data[local_order(axis, 0, a, b)](*q)))
    d1 = bv()
    lap_d1 = bv(2, 0) + bv(0, 2)
    d3 = fv(1) - k**2 * d1 - lap_d1
    lap_d3 = (fv(1, 2, 0) + fv(1, 0, 2)) - k**2 * lap_d1 - (bv(4, 0) + 2 * bv(2, 2) + bv(0, 4))
    d5 = fv(3) - k**2 * d3 - lap_d3
    # ghost sits at local -h, its mirror at +h
    return -2 * (h * d1 + h**3 / 6 * d3 + h**5 / 120 * d5)


def _edge_rows(setup):
    """Flat indices of rows on two open faces of different axes, one Neumann."""
    rows = []
    for row, idx in enumerate(itertools.product(*(range(s) for s in setup.shape))):
        open_axes, neumann = 0, False
        for d in range(3):
            hit = [setup.bc.face(d, side).kind for side, pos in ((0, 0), (1, setup.shape[d] - 1))
                   if idx[d] == pos and setup.bc.face(d, side).kind is not Kind.DIRICHLET]
            open_axes += bool(hit)
            neumann |= Kind.NEUMANN in hit
        if open_axes >= 2 and neumann:
            rows.append(row)
    return rows


def _sommerfeld_row(setup, src, axis, side, p):
    h, k = setup.h, setup.k
    ik = 1j * k
    ikh = ik * h
    kh2 = (k * h) ** 2
    m3 = 1.0 / (1.0 + 2.0 * ikh / 3.0 * (1.0 + 2.0 * kh2 / 15.0))
    m1 = (ikh / 90.0 + (1.0 + kh2 / 30.0) / (6.0 * m3)) / (1.0 + 2.0 * ikh / 3.0)
    m2 = 1.0 / (10.0 * m1 * m3)
    face = setup.bc.face(axis, side)
    s = 1 if side == 0 else -1
    fv = lambda n, a=0, b=0: complex(src(local_order(axis, n, a, b), *p)) * s**n
    gv = lambda a=0, b=0: (0j if face.data is None
                           else -complex(face.data[local_order(axis, 0, a, b)](*p)))
    # phase-shifted source  fbar = e^{ik zeta} f  and its normal derivatives
    e = [fv(0), fv(1), fv(2), fv(3)]
    fbar1 = e[1] + ik * e[0]
    fbar2 = e[2] + 2 * ik * e[1] + ik * ik * e[0]
    fbar3 = e[3] + 3 * ik * e[2] + 3 * ik * ik * e[1] + ik**3 * e[0]
    fbar_t = (fv(1, 2, 0) + fv(1, 0, 2)) + ik * (fv(0, 2, 0) + fv(0, 0, 2))
    Fbar = ((h**2 / 6 + k**2 * h**4 / 45) * fbar1 - ikh * h**3 / 90 * fbar2
            + h**4 / 120 * (fbar3 - fbar_t))
    g, gxx, gyy = gv(), gv(2, 0), gv(0, 2)
    gx4, gy4, gxy = gv(4, 0), gv(0, 4), gv(2, 2)
    lap = gxx + gyy
    bih = gx4 + gy4 + 2 * gxy
    data = (g - (h**2 / 6 + k**2 * h**4 / 45) * lap + h**4 / 120 * bih
            + m1 * h**2 * lap - m1 * h**4 / 6 * bih + m1 * h**4 / 12 * (gx4 + gy4)
            + m1 * m2 * h**4 / 3 * gxy)
    return -cmath.exp(ikh) * m3 * (2 * h * Fbar + m1 * h**5 / 3 * fbar_t + 2 * h * data)


def dense_rhs(setup: Setup, src=None, which: str = "A6") -> np.ndarray:
    """Reference right-hand side assembled node by node."""
    src = src if src is not None else setup.source
    _guard(setup)
    _, const = _walk(setup, which, with_data=True, matrix=False)
    F = np.zeros(setup.grid.size, dtype=complex)
    edge_rows = set(_edge_rows(setup)) if setup.dim == 3 and which == "A6" else set()
    h, k = setup.h, setup.k
    g = setup.grid
    if setup.dim == 1:
        for i in range(setup.shape[0]):
            x = g.origin[0] + h * i
            if which == "A2":
                F[i] = h**2 * src((0,), x)
            else:
                f0 = lambda xx: complex(src((0,), xx))
                f2 = lambda xx: complex(src((2,), xx))
                F[i] = (h**2 * (1 - 7 * k**2 * h**2 / 90) * f0(x)
                        - k**2 * h**4 / 360 * (f0(x - h) + f0(x + h))
                        + 7 * h**4 / 90 * f2(x) + h**4 / 360 * (f2(x - h) + f2(x + h)))
        return F - const
    for row, idx in enumerate(itertools.product(*(range(s) for s in setup.shape))):
        p = tuple(g.origin[d] + h * idx[d] for d in range(3))
        if which == "A2":
            F[row] = h**2 * complex(src((0, 0, 0), *p))
        else:
            F[row] = _volume_row(src, p, h, k)
        for axis in range(3):
            for side in (0, 1):
                if idx[axis] != (0 if side == 0 else setup.shape[axis] - 1):
                    continue
                face = setup.bc.face(axis, side)
                if face.kind is Kind.DIRICHLET:
                    continue
                if which == "A2":
                    if face.data is None:
                        continue
                    val = complex(face.data[(0, 0, 0)](*p))
                    loc = (val if side == 0 else -val) if face.kind is Kind.NEUMANN else -val
                    F[row] += 2 * h * loc
                elif face.kind is Kind.NEUMANN:
                    if row not in edge_rows:
                        F[row] -= _neumann_row(setup, src, axis, side, p)
                else:
                    F[row] -= _sommerfeld_row(setup, src, axis, side, p)
    if edge_rows:
        _, with_defects = _walk(setup, which, with_data=True, src=src, matrix=False)
        rows = sorted(edge_rows)
        const[rows] = with_defects[rows]
    return F - const


# ---------------------------------------------------------------------------
# dense solves and spectra


def dense_solve(op, F: np.ndarray) -> np.ndarray:
    """LU solve with partial pivoting; raises on a singular matrix."""
    M = op.matrix if isinstance(op, DenseOperator) else np.asarray(op)
    shape = np.shape(F)
    try:
        lu, piv = scipy.linalg.lu_factor(M, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise np.linalg.LinAlgError(str(exc)) from exc
    if np.any(np.abs(np.diag(lu)) <= np.finfo(float).eps * max(1.0, np.abs(M).max())):
        raise np.linalg.LinAlgError("matrix is singular to working precision")
    return scipy.linalg.lu_solve((lu, piv), np.ravel(F)).reshape(shape)


def dense_eigs(op) -> np.ndarray:
    """Eigenvalues sorted by real part (then imaginary part)."""
    M = op.matrix if isinstance(op, DenseOperator) else np.asarray(op)
    if M.shape[0] > MAX_UNKNOWNS:
        raise ConfigurationError(f"dense oracle limited to {MAX_UNKNOWNS} unknowns")
    if np.allclose(M, M.conj().T, rtol=0, atol=1e-14 * max(1.0, np.abs(M).max())):
        w = scipy.linalg.eigvalsh(M).astype(complex)
    else:
        w = scipy.linalg.eigvals(M)
    return w[np.lexsort((w.imag, w.real))]
