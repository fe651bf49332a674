"""Manufactured solutions with closed-form sources and boundary data.

Every exact solution is a finite sum of products of 1D factors, and every 1D
factor is a finite sum of ``poly(x) * exp(s x)`` terms.  Such sums are closed
under differentiation, ``d/dx [p e^{sx}] = (p' + s p) e^{sx}``, so all
derivatives the scheme asks for are exact closed forms rather than
numerical approximations.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P

from .core import (
    BoundaryConfig,
    FaceBC,
    Kind,
    Setup,
    SourceModel,
    TANGENTIAL,
    dirichlet,
    local_order,
    make_setup,
    neumann,
    sommerfeld,
)

TABLE_KS = (10.0, 20.0, 30.0, 40.0, 50.0)
SOIL_K = 35.7 + 0.43j


class Factor:
    """``sum_t poly_t(x) * exp(rate_t * x)`` in one variable."""

    def __init__(self, terms):
        merged: dict = {}
        for coeffs, rate in terms:
            rate = complex(rate)
            c = np.asarray(coeffs, dtype=complex)
            if rate in merged:
                merged[rate] = P.polyadd(merged[rate], c)
            else:
                merged[rate] = c
        self.terms = tuple((P.polytrim(c, 0) if np.any(c) else np.zeros(1, complex), r)
                           for r, c in merged.items())
        self._derivs = {0: self}

    @classmethod
    def poly(cls, coeffs) -> "Factor":
        return cls([(coeffs, 0.0)])

    @classmethod
    def exp(cls, rate, scale=1.0) -> "Factor":
        return cls([([scale], rate)])

    @classmethod
    def cos(cls, freq, phase=0.0) -> "Factor":
        e = cmath.exp(1j * phase)
        return cls([([e / 2], 1j * freq), ([1 / (2 * e)], -1j * freq)])

    @classmethod
    def sin(cls, freq, phase=0.0) -> "Factor":
        e = cmath.exp(1j * phase)
        return cls([([e / 2j], 1j * freq), ([-1 / (2j * e)], -1j * freq)])

    def __mul__(self, other):
        if not isinstance(other, Factor):
            return Factor([(c * other, r) for c, r in self.terms])
        return Factor([(P.polymul(c1, c2), r1 + r2) for c1, r1 in self.terms for c2, r2 in other.terms])

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, Factor):
            other = Factor.poly([other])
        return Factor(list(self.terms) + list(other.terms))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def derivative(self, n: int = 1) -> "Factor":
        if n not in self._derivs:
            prev = self.derivative(n - 1)
            self._derivs[n] = Factor([(P.polyadd(P.polyder(c) if len(c) > 1 else [0], r * c), r)
                                      for c, r in prev.terms])
        return self._derivs[n]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        for c, r in self.terms:
            val = P.polyval(x, c)
            out += val if r == 0 else val * np.exp(r * x)
        return out


@dataclass(frozen=True)
class SeparableField:
    """``sum_m coef_m * prod_d factor_{m,d}(x_d)``."""

    terms: tuple  # of (coef, (Factor, ...))

    @property
    def dim(self) -> int:
        return len(self.terms[0][1])

    def derivative(self, order) -> Callable:
        parts = [(c, tuple(f.derivative(o) for f, o in zip(fs, order))) for c, fs in self.terms]

        def fn(*coords):
            total = 0j
            for c, fs in parts:
                v = c
                for f, x in zip(fs, coords):
                    v = v * f(x)
                total = total + v
            return total

        return fn

    def __call__(self, *coords):
        return self.derivative((0,) * self.dim)(*coords)

    def helmholtz(self, k) -> "SeparableField":
        """Field equal to ``laplacian(u) + k^2 u``."""
        out = []
        for c, fs in self.terms:
            out.append((c * k * k, fs))
            for d in range(len(fs)):
                g = list(fs)
                g[d] = fs[d].derivative(2)
                out.append((c, tuple(g)))
        return SeparableField(tuple(out))


class FieldSource(SourceModel):
    """Source model exposing every derivative of a separable field."""

    def __init__(self, fld: SeparableField):
        object.__setattr__(self, "derivs", _AllOrders(fld))


class _AllOrders(dict):
    def __init__(self, fld):
        super().__init__()
        self.fld = fld

    def __missing__(self, order):
        fn = self.fld.derivative(order)
        self[order] = fn
        return fn

    def __contains__(self, order):
        return len(order) == self.fld.dim


@dataclass(frozen=True, eq=False)
class ManufacturedProblem:
    name: str
    dim: int
    k: complex
    exact_field: SeparableField
    face_kinds: tuple  # six Kind values (only the first two used in 1D)
    data_faces: tuple = ()  # faces whose data is sampled from the exact solution
    description: str = ""
    source_field: SeparableField = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "source_field", self.exact_field.helmholtz(self.k))

    @property
    def source(self) -> SourceModel:
        return FieldSource(self.source_field)

    def exact(self, *coords):
        return self.exact_field(*coords)

    def face_bc(self, axis: int, side: int) -> FaceBC:
        kind = self.face_kinds[2 * axis + side]
        with_data = (axis, side) in self.data_faces
        if kind is Kind.DIRICHLET:
            return dirichlet(self._lift(self.exact_field.derivative((0,) * self.dim)) if with_data else None)
        if not with_data:
            return FaceBC(kind)
        data = {}
        for a, b in TANGENTIAL:
            o = local_order(axis, 0, a, b)
            data[o] = self._face_data(kind, axis, side, o)
        return FaceBC(kind, data)

    def _lift(self, fn):
        if self.dim == 1:
            return lambda x, y=None, z=None: fn(x)
        return fn

    def _face_data(self, kind, axis, side, order):
        du = self.exact_field.derivative(tuple(o + (d == axis) for d, o in enumerate(order)))
        if kind is Kind.NEUMANN:
            return du
        u = self.exact_field.derivative(order)
        sgn = -1.0 if side == 0 else 1.0
        ik = 1j * self.k
        return lambda x, y, z: sgn * du(x, y, z) - ik * u(x, y, z)

    @property
    def bc(self) -> BoundaryConfig:
        faces = [self.face_bc(a, s) for a in range(3) for s in (0, 1)] if self.dim == 3 else \
            [self.face_bc(0, 0), self.face_bc(0, 1)] + [dirichlet()] * 4
        return BoundaryConfig(*faces)

    def setup(self, h: float, check_resolution: bool = True, k=None) -> Setup:
        return make_setup(h, self.k if k is None else k, self.bc, self.source, dim=self.dim,
                          check_resolution=check_resolution)

    def sample(self, setup: Setup) -> np.ndarray:
        mesh = setup.grid.mesh()
        return np.broadcast_to(self.exact(*mesh), setup.shape).astype(complex)


def exact_error(setup: Setup, U: np.ndarray, problem: ManufacturedProblem) -> float:
    """Max-norm error over the unknowns."""
    mesh = setup.grid.mesh()
    step = max(1, (1 << 20) // max(1, int(np.prod(setup.shape[1:]))))
    err = 0.0
    if setup.dim == 1:
        return float(np.max(np.abs(U - problem.exact(mesh[0]))))
    for i0 in range(0, setup.shape[0], step):
        ex = problem.exact(mesh[0][i0:i0 + step], mesh[1], mesh[2])
        err = max(err, float(np.max(np.abs(U[i0:i0 + step] - ex))))
    return err


# ---------------------------------------------------------------------------
# factors used by the catalog

def cubic_bump() -> Factor:
    """x^3 (1 - x)^3."""
    return Factor.poly(P.polymul(P.polypow([0, 1], 3), P.polypow([1, -1], 3)))


def damped_cos(k) -> Factor:
    """y (1 - y) cos(k pi y)."""
    return Factor.poly([0, 1, -1]) * Factor.cos(k * math.pi)


def radiating(k) -> Factor:
    """e^{ik(z+1)} + e^{-ik(z-1)} - 2."""
    e = np.exp(1j * k)
    return Factor([([e], 1j * k), ([e], -1j * k), ([-2.0], 0.0)])


D, N, S = Kind.DIRICHLET, Kind.NEUMANN, Kind.SOMMERFELD


def one_d_dirichlet(k=20.0) -> ManufacturedProblem:
    u = Factor.poly([0, 1, -1]) * Factor.cos(k * math.pi)
    return ManufacturedProblem("1d-dirichlet", 1, complex(k), SeparableField(((1.0, (u,)),)),
                               (D,) * 6, description="x(1-x) cos(k pi x), zero Dirichlet data")


def three_d_dirichlet(k=20.0) -> ManufacturedProblem:
    u = SeparableField(((1.0, (cubic_bump(), damped_cos(k), Factor.sin(k * math.pi))),))
    return ManufacturedProblem("3d-dirichlet", 3, complex(k), u, (D,) * 6,
                               description="x^3(1-x)^3 y(1-y)cos(k pi y) sin(k pi z)")


def three_d_dirichlet_neumann(k=20.0) -> ManufacturedProblem:
    u = SeparableField(((1.0, (cubic_bump(), damped_cos(k), Factor.cos(k * math.pi))),))
    return ManufacturedProblem("3d-dirichlet-neumann", 3, complex(k), u, (D, D, D, D, N, D),
                               data_faces=((2, 1),),
                               description="Neumann u_z=0 at z=0, u=u_b at z=1")


def three_d_dirichlet_sommerfeld(k=20.0) -> ManufacturedProblem:
    u = SeparableField(((1.0, (cubic_bump(), damped_cos(k), radiating(k))),))
    return ManufacturedProblem("3d-dirichlet-sommerfeld", 3, complex(k), u, (D, D, D, D, S, S),
                               data_faces=((2, 0),),
                               description="radiation faces at z=0 and z=1")


FAMILIES = {
    "1d-dirichlet": one_d_dirichlet,
    "3d-dirichlet": three_d_dirichlet,
    "3d-dirichlet-neumann": three_d_dirichlet_neumann,
    "3d-dirichlet-sommerfeld": three_d_dirichlet_sommerfeld,
}


def problem_catalog() -> list:
    out = []
    for name, make in FAMILIES.items():
        for k in TABLE_KS:
            out.append(make(k))
    out.append(three_d_dirichlet_sommerfeld(SOIL_K))
    return out


def get_problem(name: str, k) -> ManufacturedProblem:
    makers = dict(FAMILIES)
    makers.update(VERIFICATION)
    if name not in makers:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(makers)}")
    return makers[name](k)


# ---------------------------------------------------------------------------
# verification problems: nonzero boundary data on every closure


def _wavy(rate, freq, phase) -> Factor:
    return Factor.exp(rate) * Factor.cos(freq, phase)


def neumann_data(k=5.0) -> ManufacturedProblem:
    u = SeparableField(((1.0, (_wavy(0.4, 2.1, 0.3), _wavy(-0.3, 1.7, 0.5), _wavy(0.6, k, 0.7))),))
    return ManufacturedProblem("neumann-data", 3, complex(k), u, (D, D, D, D, N, N),
                               data_faces=((0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)),
                               description="Neumann data on both z faces")


def sommerfeld_data(k=5.0) -> ManufacturedProblem:
    u = SeparableField(((1.0, (_wavy(0.4, 2.1, 0.3), _wavy(-0.3, 1.7, 0.5), _wavy(0.6, k, 0.7))),))
    return ManufacturedProblem("sommerfeld-data", 3, complex(k), u, (D, D, D, D, S, S),
                               data_faces=((0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)),
                               description="radiation data on both z faces")


def sommerfeld_homogeneous(k=5.0) -> ManufacturedProblem:
    # u = e^{-ikz} cos(a z) has u_z + i k u = 0 at z = 0
    zf = Factor.exp(-1j * k) * Factor.cos(2.3)
    u = SeparableField(((1.0, (_wavy(0.4, 2.1, 0.3), _wavy(-0.3, 1.7, 0.5), zf)),))
    return ManufacturedProblem("sommerfeld-homogeneous", 3, complex(k), u, (D, D, D, D, S, D),
                               data_faces=((0, 0), (0, 1), (1, 0), (1, 1), (2, 1)),
                               description="homogeneous radiation face at z=0")


def lateral_neumann(k=5.0) -> ManufacturedProblem:
    u = SeparableField(((1.0, (_wavy(0.4, 2.1, 0.3), _wavy(-0.3, 1.7, 0.5), _wavy(0.6, k, 0.7))),))
    return ManufacturedProblem("lateral-neumann", 3, complex(k), u, (N, N, N, N, D, D),
                               data_faces=((0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)),
                               description="Neumann data on the four lateral faces")


def lateral_neumann_sommerfeld(k=5.0) -> ManufacturedProblem:
    u = SeparableField(((1.0, (_wavy(0.4, 2.1, 0.3), _wavy(-0.3, 1.7, 0.5), _wavy(0.6, k, 0.7))),))
    return ManufacturedProblem("lateral-neumann-sommerfeld", 3, complex(k), u, (N, N, N, N, S, N),
                               data_faces=((0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)),
                               description="Neumann sides, radiation bottom, Neumann top")


VERIFICATION = {
    "neumann-data": neumann_data,
    "sommerfeld-data": sommerfeld_data,
    "sommerfeld-homogeneous": sommerfeld_homogeneous,
    "lateral-neumann": lateral_neumann,
    "lateral-neumann-sommerfeld": lateral_neumann_sommerfeld,
}


def verification_problems(k=5.0) -> list:
    return [make(k) for make in VERIFICATION.values()]
