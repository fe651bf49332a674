"""Matrix-free sixth-order (27-point) and second-order (7-point) Helmholtz operators.

All operators are h^2-scaled: the second difference along an axis is
``L u_i = u_{i-1} - 2 u_i + u_{i+1}`` with no 1/h^2 factor, and every
right-hand side carries the matching h^2.

The 3D compact operator factors as ``A6 = Lz T + S`` with the tangential
pieces

    T = I + c1 (Lx + Ly) + Lx Ly / 30
    S = Lx + Ly + c1 Lx Ly + c0

so every ghost plane below or above a z face enters a row only through
``T U_ghost``.  Neumann and Sommerfeld closures replace that product
wholesale.  Lateral Neumann faces use the same identity with the axes
permuted, which for the homogeneous part is a pointwise mirror.

Ghosts are eliminated in a fixed order: x, then y, then z.
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass
import numpy as np

from .core import ConfigurationError, Kind, Setup, local_order

SLAB_ELEMENTS = 1 << 19  # padded elements per x-slab in the chunked kernels


# ---------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class StencilCoefficients1D:
    d1: complex
    d2: complex
    d3: complex

    @classmethod
    def build(cls, k: complex, h: float) -> "StencilCoefficients1D":
        kh2 = (k * h) ** 2
        d1 = 1 - kh2 * kh2 / 360
        d2 = -2 + kh2 - 7 * kh2 * kh2 / 90
        return cls(d1, d2, d1)


@dataclass(frozen=True)
class CompactStencil3D:
    """Weights of the 27-point operator grouped by distance class."""

    center: complex
    face: complex
    edge: complex
    corner: complex
    c1: complex  # coefficient of the cross second differences
    c0: complex  # k^2 h^2 (1 - k^2h^2/12 + k^4h^4/360)

    @classmethod
    def build(cls, k: complex, h: float) -> "CompactStencil3D":
        kh2 = (k * h) ** 2
        c1 = (1 + kh2 / 30) / 6
        c0 = kh2 * (1 - kh2 / 12 + kh2 * kh2 / 360)
        return cls(
            center=-6 + 12 * c1 - 8 / 30 + c0,
            face=1 - 4 * c1 + 4 / 30,
            edge=c1 - 2 / 30,
            corner=1 / 30 + 0j,
            c1=c1,
            c0=c0,
        )

    def weight(self, offset) -> complex:
        dist = sum(abs(o) for o in offset)
        return (self.center, self.face, self.edge, self.corner)[dist]


def sommerfeld_mu(k: complex, h: float) -> tuple:
    ikh = 1j * k * h
    kh2 = (k * h) ** 2
    mu3 = 1 / (1 + (2 * ikh / 3) * (1 + 2 * kh2 / 15))
    mu1 = (ikh / 90 + (1 + kh2 / 30) / (6 * mu3)) / (1 + 2 * ikh / 3)
    mu2 = 1 / (10 * mu1 * mu3)
    return mu1, mu2, mu3


@dataclass(frozen=True)
class GhostEliminationPlan:
    """How ``T U_ghost`` is rewritten in terms of unknowns for one face.

    Neumann:     T U_ghost = T U_1                                + G
    Sommerfeld:  T U_ghost = phase2 * P1 U_1 + phase1 * P0 U_0    + G

    with ``P1 = mu3 (a1 + b1 (L1 + L2)) + L1 L2 / 30`` and
    ``P0 = mu3 (a0 + b0 (L1 + L2))``.  ``G`` collects source and data terms
    and lives in the right-hand side.
    """

    kind: Kind
    axis: int
    side: int
    mirror: tuple  # (identity, cross, product) weights of T
    mu1: complex = 0j
    mu2: complex = 0j
    mu3: complex = 0j
    phase1: complex = 0j
    phase2: complex = 0j
    a1: complex = 0j
    b1: complex = 0j
    a0: complex = 0j
    b0: complex = 0j


def build_ghost_plan(setup: Setup, axis: int, side: int) -> GhostEliminationPlan:
    face = setup.bc.face(axis, side)
    if face.kind is Kind.DIRICHLET:
        raise ConfigurationError("Dirichlet faces carry no ghost plane")
    k, h = setup.k, setup.h
    st = CompactStencil3D.build(k, h)
    mirror = (1.0 + 0j, st.c1, 1 / 30 + 0j)
    if face.kind is Kind.NEUMANN:
        return GhostEliminationPlan(Kind.NEUMANN, axis, side, mirror)
    if axis != 2:
        raise ConfigurationError("Sommerfeld conditions are only allowed on z faces")
    mu1, mu2, mu3 = sommerfeld_mu(k, h)
    ikh = 1j * k * h
    kh2 = (k * h) ** 2
    return GhostEliminationPlan(
        Kind.SOMMERFELD, axis, side, mirror,
        mu1=mu1, mu2=mu2, mu3=mu3,
        phase1=cmath.exp(ikh), phase2=cmath.exp(2 * ikh),
        a1=1 - 2 * ikh / 3 - 4j * k**3 * h**3 / 45,
        b1=mu1 + (2 * ikh / 3) * (1 / 60 - mu1),
        a0=(4 * ikh / 3) * (1 + 2 * kh2 / 15),
        b0=-(4 * ikh / 3) * (1 / 60 - mu1),
    )


def _plans(setup: Setup) -> dict:
    plans = setup._cache.get("ghost_plans")
    if plans is None:
        plans = {}
        for axis in range(3):
            for side in (0, 1):
                if setup.bc.face(axis, side).kind is not Kind.DIRICHLET:
                    plans[(axis, side)] = build_ghost_plan(setup, axis, side)
        setup._cache["ghost_plans"] = plans
    return plans


# ---------------------------------------------------------------------------
# padded slab construction


def _padded_coords(setup: Setup, axis: int) -> np.ndarray:
    g = setup.grid
    return g.origin[axis] + g.h * np.arange(-1, g.shape[axis] + 1)


def _slab_size(shape) -> int:
    per_row = (shape[1] + 2) * (shape[2] + 2)
    return max(1, min(shape[0], SLAB_ELEMENTS // per_row))


def _fill_slab(setup: Setup, U: np.ndarray, i0: int, i1: int, with_data: bool) -> np.ndarray:
    """Padded copy of rows ``i0-1 .. i1`` with every pad populated.

    Dirichlet pads take boundary data (zero unless ``with_data``), Neumann
    pads mirror the first interior layer.  Sommerfeld z pads stay zero; the
    kernels replace them at the level of ``T``.
    """
    nx, ny, nz = setup.shape
    bc = setup.bc
    ext = np.zeros((i1 - i0 + 2, ny + 2, nz + 2), dtype=complex)
    lo, hi = max(i0 - 1, 0), min(i1 + 1, nx)
    ext[lo - i0 + 1:hi - i0 + 1, 1:-1, 1:-1] = U[lo:hi]

    if with_data:
        xs = _padded_coords(setup, 0)[i0:i1 + 2]
        ys = _padded_coords(setup, 1)
        zs = _padded_coords(setup, 2)
        # z faces first so lateral Dirichlet data owns the shared edges
        for side, plane in ((0, 0), (1, -1)):
            face = bc.face(2, side)
            if face.kind is Kind.DIRICHLET and face.data is not None:
                ext[:, :, plane] = face.data[(0, 0, 0)](xs[:, None], ys[None, :], zs[plane])
        for side, plane in ((0, 0), (1, -1)):
            face = bc.face(1, side)
            if face.kind is Kind.DIRICHLET and face.data is not None:
                ext[:, plane, :] = face.data[(0, 0, 0)](xs[:, None], ys[plane], zs[None, :])
        if i0 == 0:
            face = bc.x0
            if face.kind is Kind.DIRICHLET and face.data is not None:
                ext[0] = face.data[(0, 0, 0)](xs[0], ys[:, None], zs[None, :])
        if i1 == nx:
            face = bc.x1
            if face.kind is Kind.DIRICHLET and face.data is not None:
                ext[-1] = face.data[(0, 0, 0)](xs[-1], ys[:, None], zs[None, :])

    if i0 == 0 and bc.x0.kind is Kind.NEUMANN:
        ext[0] = ext[2]
    if i1 == nx and bc.x1.kind is Kind.NEUMANN:
        ext[-1] = ext[-3]
    if bc.y0.kind is Kind.NEUMANN:
        ext[:, 0] = ext[:, 2]
    if bc.y1.kind is Kind.NEUMANN:
        ext[:, -1] = ext[:, -3]
    if bc.z0.kind is Kind.NEUMANN:
        ext[:, :, 0] = ext[:, :, 2]
    if bc.z1.kind is Kind.NEUMANN:
        ext[:, :, -1] = ext[:, :, -3]
    return ext


def _rows_A6(setup: Setup, ext: np.ndarray, st: "CompactStencil3D", plans: dict) -> np.ndarray:
    """Rows of ``A6`` for the interior of one padded slab."""
    c1, c0 = st.c1, st.c0
    mid = ext[1:-1]
    lx_all = ext[:-2] + ext[2:] - 2 * mid
    lx = lx_all[:, 1:-1]
    ly = mid[:, :-2] + mid[:, 2:] - 2 * mid[:, 1:-1]
    lxly = lx_all[:, :-2] + lx_all[:, 2:] - 2 * lx
    uc = mid[:, 1:-1]
    del lx_all, mid
    sig = lx + ly
    W = uc + c1 * sig + lxly / 30
    for side, (g, u0, u1) in ((0, (0, 1, 2)), (1, (-1, -2, -3))):
        plan = plans.get((2, side))
        if plan is not None and plan.kind is Kind.SOMMERFELD:
            W[:, :, g] = plan.phase2 * (
                plan.mu3 * (plan.a1 * uc[:, :, u1] + plan.b1 * sig[:, :, u1]) + lxly[:, :, u1] / 30
            ) + plan.phase1 * plan.mu3 * (plan.a0 * uc[:, :, u0] + plan.b0 * sig[:, :, u0])
    res = W[:, :, :-2] + W[:, :, 2:] - 2 * W[:, :, 1:-1]
    res += sig[:, :, 1:-1] + c1 * lxly[:, :, 1:-1] + c0 * uc[:, :, 1:-1]
    return res


def _sweep_A6(setup: Setup, U: np.ndarray, with_data: bool) -> np.ndarray:
    st = CompactStencil3D.build(setup.k, setup.h)
    plans = _plans(setup)
    nx = setup.shape[0]
    out = np.empty(setup.shape, dtype=complex)
    step = _slab_size(setup.shape)
    for i0 in range(0, nx, step):
        i1 = min(nx, i0 + step)
        out[i0:i1] = _rows_A6(setup, _fill_slab(setup, U, i0, i1, with_data), st, plans)
    return out


def _sweep_A2(setup: Setup, U: np.ndarray, with_data: bool) -> np.ndarray:
    kh2 = (setup.k * setup.h) ** 2
    ikh2 = 2j * setup.k * setup.h
    bc = setup.bc
    nx = setup.shape[0]
    out = np.empty(setup.shape, dtype=complex)
    step = _slab_size(setup.shape)
    for i0 in range(0, nx, step):
        i1 = min(nx, i0 + step)
        ext = _fill_slab(setup, U, i0, i1, with_data)
        if bc.z0.kind is Kind.SOMMERFELD:
            ext[:, :, 0] = ext[:, :, 2] + ikh2 * ext[:, :, 1]
        if bc.z1.kind is Kind.SOMMERFELD:
            ext[:, :, -1] = ext[:, :, -3] + ikh2 * ext[:, :, -2]
        c = ext[1:-1, 1:-1, 1:-1]
        res = (kh2 - 6) * c
        res += ext[:-2, 1:-1, 1:-1]
        res += ext[2:, 1:-1, 1:-1]
        res += ext[1:-1, :-2, 1:-1]
        res += ext[1:-1, 2:, 1:-1]
        res += ext[1:-1, 1:-1, :-2]
        res += ext[1:-1, 1:-1, 2:]
        out[i0:i1] = res
    return out


# ---------------------------------------------------------------------------
# 1D operators


def _apply_1d(U: np.ndarray, diag: complex, off: complex) -> np.ndarray:
    out = diag * U
    out[1:] += off * U[:-1]
    out[:-1] += off * U[1:]
    return out


# ---------------------------------------------------------------------------
# public operator applications


def apply_A6(setup: Setup, U: np.ndarray) -> np.ndarray:
    """Sixth-order compact operator applied to ``U`` (homogeneous closures)."""
    U = setup.check_field(U)
    if setup.dim == 1:
        c = StencilCoefficients1D.build(setup.k, setup.h)
        return _apply_1d(U.astype(complex), c.d2, c.d1)
    return _sweep_A6(setup, U, with_data=False)


def apply_A2(setup: Setup, U: np.ndarray) -> np.ndarray:
    """Second-order 7-point operator (the preconditioner) applied to ``U``."""
    U = setup.check_field(U)
    if setup.dim == 1:
        return _apply_1d(U.astype(complex), -2 + (setup.k * setup.h) ** 2, 1.0)
    return _sweep_A2(setup, U, with_data=False)


# ---------------------------------------------------------------------------
# right-hand sides


def _require_source(setup: Setup, src):
    src = src if src is not None else setup.source
    if src is None:
        raise ConfigurationError("a source model is required to assemble the right-hand side")
    return src


def _has_dirichlet_data(setup: Setup) -> bool:
    return any(
        setup.bc.face(a, s).kind is Kind.DIRICHLET and setup.bc.face(a, s).data is not None
        for a in range(setup.dim) for s in (0, 1)
    )


def _volume_rhs(setup: Setup, src) -> np.ndarray:
    h, k2 = setup.h, setup.k ** 2
    kh2 = k2 * h * h
    cf = 1 - kh2 / 12 + kh2 * kh2 / 360
    c_lap = (h * h / 12) * (1 - kh2 / 30)
    c_bih = h**4 / 360
    c_mix = h**4 / 90
    xs, ys, zs = (setup.grid.coords(a) for a in range(3))
    F = np.empty(setup.shape, dtype=complex)
    step = max(1, SLAB_ELEMENTS // (len(ys) * len(zs)))
    Y, Z = ys[None, :, None], zs[None, None, :]
    for i0 in range(0, len(xs), step):
        X = xs[i0:i0 + step, None, None]

        def d(order):
            return src(order, X, Y, Z)

        lap = d((2, 0, 0)) + d((0, 2, 0)) + d((0, 0, 2))
        mixed = d((2, 2, 0)) + d((2, 0, 2)) + d((0, 2, 2))
        # pure fourth derivatives only: the biharmonic reading leaves an O(h^4) defect
        quart = d((4, 0, 0)) + d((0, 4, 0)) + d((0, 0, 4))
        F[i0:i0 + step] = h * h * (cf * d((0, 0, 0)) + c_lap * lap + c_bih * quart + c_mix * mixed)
    return F


def _face_axes(axis: int):
    return [d for d in range(3) if d != axis]


def _face_mesh(setup: Setup, axis: int, side: int):
    """Broadcastable coordinates on the unknown points of one face."""
    g = setup.grid
    coords = []
    t1, t2 = _face_axes(axis)
    for d in range(3):
        if d == axis:
            coords.append(np.array(g.origin[d] + g.h * (0 if side == 0 else g.shape[d] - 1)))
        elif d == t1:
            coords.append(g.coords(d)[:, None])
        else:
            coords.append(g.coords(d)[None, :])
    return coords


def _face_index(axis: int, side: int):
    idx = [slice(None)] * 3
    idx[axis] = 0 if side == 0 else -1
    return tuple(idx)


def _face_data(face, axis: int, coords, t1o: int = 0, t2o: int = 0):
    if face.data is None:
        return 0.0
    return face.data[local_order(axis, 0, t1o, t2o)](*coords)


def neumann_source_term(setup: Setup, src, axis: int, side: int) -> np.ndarray:
    """``G`` of the Neumann closure on one face, expressed on that face."""
    h, k = setup.h, setup.k
    k2 = k * k
    face = setup.bc.face(axis, side)
    coords = _face_mesh(setup, axis, side)
    sgn = 1.0 if side == 0 else -1.0

    def f(n, a=0, b=0):
        return src(local_order(axis, n, a, b), *coords)

    def beta(a=0, b=0):
        return _face_data(face, axis, coords, a, b)

    kh2 = k2 * h * h
    G = -2 * h * (1 - kh2 / 6 + kh2 * kh2 / 120) * beta()
    G = G - (h**3 / 3) * (1 - kh2 / 20) * f(1)
    G = G - (h**5 / 60) * f(3)
    G = G - (7 * h**5 / 180) * (f(1, 2, 0) + f(1, 0, 2))
    G = G + (h**5 / 90) * (beta(2, 2) + k2 * (beta(2, 0) + beta(0, 2)) + beta(4, 0) + beta(0, 4))
    return sgn * np.broadcast_to(G, _face_shape(setup, axis)).astype(complex)


def sommerfeld_source_term(setup: Setup, src, axis: int, side: int) -> np.ndarray:
    """``G`` of the Sommerfeld closure on one face (data ``g = u_n - i k u``)."""
    h, k = setup.h, setup.k
    ik = 1j * k
    k2 = k * k
    plan = _plans(setup)[(axis, side)]
    mu1, mu2, mu3 = plan.mu1, plan.mu2, plan.mu3
    face = setup.bc.face(axis, side)
    coords = _face_mesh(setup, axis, side)
    sgn = 1.0 if side == 0 else -1.0

    def f(n, a=0, b=0):
        return src(local_order(axis, n, a, b), *coords) * sgn**n

    # derivatives of the phase-shifted source  e^{i k zeta} f  at the face
    fb1 = f(1) + ik * f(0)
    fb2 = f(2) + 2 * ik * f(1) - k2 * f(0)
    fb3 = f(3) + 3 * ik * f(2) - 3 * k2 * f(1) - ik * k2 * f(0)
    fb1_t = f(1, 2, 0) + ik * f(0, 2, 0) + f(1, 0, 2) + ik * f(0, 0, 2)

    def gam(a=0, b=0):
        return -_face_data(face, axis, coords, a, b)

    Fbar = (h**2 / 6 + k2 * h**4 / 45) * fb1 - (ik * h**4 / 90) * fb2 + (h**4 / 120) * (fb3 - fb1_t)
    lap_g = gam(2, 0) + gam(0, 2)
    bih_g = gam(4, 0) + gam(0, 4) + 2 * gam(2, 2)
    Gam = gam() - (h**2 / 6 + k2 * h**4 / 45) * lap_g + (h**4 / 120) * bih_g
    Gam2 = (-mu1 * h**2 * lap_g + (mu1 * h**4 / 6) * bih_g
            - (mu1 * h**4 / 12) * (gam(4, 0) + gam(0, 4)) - (mu1 * mu2 * h**4 / 3) * gam(2, 2))
    G = -plan.phase1 * (mu3 * (2 * h * Fbar + (mu1 * h**5 / 3) * fb1_t) + 2 * h * mu3 * (Gam - Gam2))
    return np.broadcast_to(G, _face_shape(setup, axis)).astype(complex)


def neumann_ghost_defect(setup: Setup, src, axis: int, side: int, coords) -> np.ndarray:
    """Pointwise ``u(ghost) - u(mirror)`` across one Neumann face.

    ``coords`` gives the ghost node positions; the entry along ``axis`` is
    ignored.  Odd normal derivatives beyond the first come from the equation.
    """
    h, k2 = setup.h, setup.k ** 2
    face = setup.bc.face(axis, side)
    g = setup.grid
    pts = list(coords)
    pts[axis] = np.array(g.origin[axis] + g.h * (0 if side == 0 else g.shape[axis] - 1))

    def f(n, a=0, b=0):
        return src(local_order(axis, n, a, b), *pts)

    def beta(a=0, b=0):
        return _face_data(face, axis, pts, a, b)

    lap_b = beta(2, 0) + beta(0, 2)
    bih_b = beta(4, 0) + beta(0, 4) + 2 * beta(2, 2)
    lap_f1 = f(1, 2, 0) + f(1, 0, 2)
    u3 = f(1) - k2 * beta() - lap_b
    u5 = f(3) - k2 * f(1) - lap_f1 + k2 * k2 * beta() + 2 * k2 * lap_b + bih_b
    sgn = 1.0 if side == 0 else -1.0
    return -2 * sgn * (h * beta() + (h**3 / 6) * u3 + (h**5 / 120) * u5)


def _edge_mask(setup: Setup):
    """Rows lying on two or more non-Dirichlet faces, at least one Neumann.

    ``None`` when there are no such rows.
    """
    on_open = np.zeros(setup.shape, dtype=np.int8)
    on_neumann = np.zeros(setup.shape, dtype=bool)
    for axis in range(3):
        hit = np.zeros(setup.shape[axis], dtype=bool)
        for side in (0, 1):
            kind = setup.bc.face(axis, side).kind
            if kind is Kind.DIRICHLET:
                continue
            pos = 0 if side == 0 else -1
            hit[pos] = True
            if kind is Kind.NEUMANN:
                idx = [slice(None)] * 3
                idx[axis] = pos
                on_neumann[tuple(idx)] = True
        shape = [1, 1, 1]
        shape[axis] = -1
        on_open += hit.reshape(shape)
    mask = (on_open >= 2) & on_neumann
    return mask if mask.any() else None


def _defect_slab(setup: Setup, src, i0: int, i1: int) -> np.ndarray:
    """Padded slab: zero on unknowns, ghost defects on Neumann pads.

    A node outside several faces picks up its defect one axis at a time
    (x, then y, then z), mirroring across each face in turn.
    """
    g = setup.grid
    nx, ny, nz = setup.shape
    h = setup.h
    ext = np.zeros((i1 - i0 + 2, ny + 2, nz + 2), dtype=complex)
    pads = _padded_coords(setup, 0)[i0:i1 + 2], _padded_coords(setup, 1), _padded_coords(setup, 2)
    last = (i1 - i0 + 1, ny + 1, nz + 1)
    cats = []
    for d in range(3):
        opts = [("mid", slice(1, last[d]), None)]
        for side, pos in ((0, 0), (1, last[d])):
            if d == 0 and not (i0 == 0 if side == 0 else i1 == nx):
                continue
            kind = setup.bc.face(d, side).kind
            opts.append((kind, slice(pos, pos + 1), side))
        cats.append(opts)
    for combo in np.ndindex(*(len(c) for c in cats)):
        parts = [cats[d][combo[d]] for d in range(3)]
        kinds = [p[0] for p in parts]
        if Kind.NEUMANN not in kinds or Kind.SOMMERFELD in kinds:
            continue
        coords = []
        for d, (_, sl, _) in enumerate(parts):
            shape = [1, 1, 1]
            shape[d] = -1
            coords.append(pads[d][sl].reshape(shape))
        total = 0.0
        for d, (kind, _, side) in enumerate(parts):
            if kind is not Kind.NEUMANN:
                continue
            total = total + neumann_ghost_defect(setup, src, d, side, coords)
            edge = g.origin[d] + h * (0 if side == 0 else g.shape[d] - 1)
            coords[d] = np.array(edge + (h if side == 0 else -h)).reshape([1, 1, 1])
        idx = tuple(p[1] for p in parts)
        ext[idx] = np.broadcast_to(total, ext[idx].shape)
    return ext


def _face_shape(setup: Setup, axis: int) -> tuple:
    return tuple(setup.shape[d] for d in _face_axes(axis))


def _rhs_1d(setup: Setup, src, sixth: bool) -> np.ndarray:
    h, k2 = setup.h, setup.k ** 2
    x = setup.grid.coords(0)
    f = lambda xx: np.asarray(src((0,), xx), dtype=complex)
    if sixth:
        f2 = lambda xx: np.asarray(src((2,), xx), dtype=complex)
        F = (h * h * (1 - 7 * k2 * h * h / 90) * f(x)
             - (k2 * h**4 / 360) * (f(x - h) + f(x + h))
             + (7 * h**4 / 90) * f2(x)
             + (h**4 / 360) * (f2(x - h) + f2(x + h)))
        off = StencilCoefficients1D.build(setup.k, h).d1
    else:
        F = h * h * f(x)
        off = 1.0
    for side, idx, xb in ((0, 0, x[0] - h), (1, -1, x[-1] + h)):
        face = setup.bc.face(0, side)
        if face.data is not None:
            F[idx] -= off * face.data[(0, 0, 0)](xb, 0.0, 0.0)
    return F


def assemble_rhs(setup: Setup, src=None) -> np.ndarray:
    """Right-hand side of the sixth-order system, boundary data folded in."""
    src = _require_source(setup, src)
    if setup.dim == 1:
        return _rhs_1d(setup, src, sixth=True)
    F = _volume_rhs(setup, src)
    edges = _edge_mask(setup)
    for axis in range(3):
        for side in (0, 1):
            kind = setup.bc.face(axis, side).kind
            face = _face_index(axis, side)
            if kind is Kind.NEUMANN:
                G = neumann_source_term(setup, src, axis, side)
                if edges is not None:
                    G = np.where(edges[face], 0, G)
                F[face] -= G
            elif kind is Kind.SOMMERFELD:
                F[face] -= sommerfeld_source_term(setup, src, axis, side)
    if _has_dirichlet_data(setup):
        F -= _sweep_A6(setup, np.zeros(setup.shape, dtype=complex), with_data=True)
    if edges is not None:
        # where two open faces meet, the face closures would double count the
        # shared ghosts; use the pointwise defects there instead
        st = CompactStencil3D.build(setup.k, setup.h)
        plans = _plans(setup)
        step = _slab_size(setup.shape)
        for i0 in range(0, setup.shape[0], step):
            i1 = min(setup.shape[0], i0 + step)
            m = edges[i0:i1]
            if m.any():
                D = _rows_A6(setup, _defect_slab(setup, src, i0, i1), st, plans)
                F[i0:i1][m] -= D[m]
    return F


def assemble_rhs2(setup: Setup, src=None) -> np.ndarray:
    """Right-hand side of the second-order system (used for Err2 columns)."""
    src = _require_source(setup, src)
    if setup.dim == 1:
        return _rhs_1d(setup, src, sixth=False)
    h = setup.h
    X, Y, Z = setup.grid.mesh()
    F = h * h * np.asarray(src((0, 0, 0), X, Y, Z), dtype=complex) * np.ones(setup.shape)
    for axis in range(3):
        for side in (0, 1):
            face = setup.bc.face(axis, side)
            if face.kind is Kind.DIRICHLET or face.data is None:
                continue
            coords = _face_mesh(setup, axis, side)
            val = _face_data(face, axis, coords)
            # local inward-derivative data: beta_loc = sgn * beta, gamma_loc = -g
            loc = (1.0 if side == 0 else -1.0) * val if face.kind is Kind.NEUMANN else -val
            F[_face_index(axis, side)] += 2 * h * np.broadcast_to(loc, _face_shape(setup, axis))
    if _has_dirichlet_data(setup):
        F -= _sweep_A2(setup, np.zeros(setup.shape, dtype=complex), with_data=True)
    return F


def residual(setup: Setup, U: np.ndarray, F: np.ndarray):
    """Return ``(F - A6 U, relative l2 norm, zero_rhs_flag)``.

    When ``F`` vanishes the absolute norm is returned and the flag is set.
    """
    R = F - apply_A6(setup, U)
    nF = np.linalg.norm(F)
    nR = np.linalg.norm(R)
    if nF == 0:
        return R, float(nR), True
    return R, float(nR / nF), False
