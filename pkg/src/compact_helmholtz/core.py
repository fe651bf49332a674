"""Shared types: grids, wavenumbers, boundary configurations, sources, reports.

Fields are plain ``numpy`` complex arrays of shape ``(nx, ny, nz)`` (C order,
so z is the fastest index) for 3D problems and ``(n,)`` for 1D problems.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

PPW_LIMIT = 2.0 * math.pi / 10.0

Order = tuple  # derivative multi-index, one entry per spatial dimension


class HelmholtzError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(HelmholtzError, ValueError):
    """Invalid grid, wavenumber, boundary or source configuration."""


class ResonanceError(HelmholtzError, ArithmeticError):
    """The second-order operator is (numerically) singular for some mode."""

    def __init__(self, message: str, mode: Optional[tuple] = None):
        super().__init__(message)
        self.mode = mode


class Kind(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    SOMMERFELD = "sommerfeld"


@dataclass(frozen=True)
class FaceBC:
    """Boundary condition on one face.

    ``data`` maps tangential derivative orders (3-tuples whose normal entry is
    zero) to callables ``g(x, y, z)``.  ``None`` means homogeneous data.

    * Dirichlet: ``u = g``; only order ``(0, 0, 0)`` is used.
    * Neumann: ``du/d(axis) = beta``; the derivative is along the positive
      coordinate direction on both faces of an axis.
    * Sommerfeld: ``du/dn - i k u = g`` with ``n`` the outward normal.
    """

    kind: Kind
    data: Optional[Mapping[tuple, Callable]] = None

    @property
    def homogeneous(self) -> bool:
        return self.data is None


def dirichlet(g: Optional[Callable] = None) -> FaceBC:
    return FaceBC(Kind.DIRICHLET, None if g is None else {(0, 0, 0): g})


def neumann(data: Optional[Mapping[tuple, Callable]] = None) -> FaceBC:
    return FaceBC(Kind.NEUMANN, data)


def sommerfeld(data: Optional[Mapping[tuple, Callable]] = None) -> FaceBC:
    return FaceBC(Kind.SOMMERFELD, data)


FACE_NAMES = ("x0", "x1", "y0", "y1", "z0", "z1")


@dataclass(frozen=True)
class BoundaryConfig:
    x0: FaceBC = field(default_factory=dirichlet)
    x1: FaceBC = field(default_factory=dirichlet)
    y0: FaceBC = field(default_factory=dirichlet)
    y1: FaceBC = field(default_factory=dirichlet)
    z0: FaceBC = field(default_factory=dirichlet)
    z1: FaceBC = field(default_factory=dirichlet)

    def face(self, axis: int, side: int) -> FaceBC:
        return getattr(self, FACE_NAMES[2 * axis + side])

    def kinds(self) -> tuple:
        return tuple(self.face(a, s).kind for a in range(3) for s in range(2))

    def validate(self, dim: int = 3) -> None:
        if dim == 1:
            for side in (0, 1):
                if self.face(0, side).kind is not Kind.DIRICHLET:
                    raise ConfigurationError("1D problems support Dirichlet faces only")
            return
        lateral = {self.face(a, s).kind for a in (0, 1) for s in (0, 1)}
        if Kind.SOMMERFELD in lateral:
            raise ConfigurationError("Sommerfeld conditions are only allowed on z faces")
        if len(lateral) != 1:
            raise ConfigurationError(
                "lateral faces must be all Dirichlet or all Neumann, got "
                + ", ".join(sorted(k.value for k in lateral))
            )


@dataclass(frozen=True)
class Wavenumber:
    k: complex

    def __post_init__(self):
        object.__setattr__(self, "k", complex(self.k))
        if self.k.real < 0:
            raise ConfigurationError(f"Re(k) must be non-negative, got {self.k}")

    @property
    def k2(self) -> complex:
        return self.k * self.k

    def check_resolution(self, h: float) -> None:
        if abs(self.k) * h >= PPW_LIMIT:
            raise ConfigurationError(
                f"points-per-wavelength violated: |k| h = {abs(self.k) * h:.4g}"
                f" >= 2 pi / 10 = {PPW_LIMIT:.4g}"
            )


@dataclass(frozen=True)
class Grid:
    """Uniform lattice of unknown-bearing points.

    ``origin[d]`` is the coordinate of the first unknown along axis ``d``:
    ``h`` when the low face is Dirichlet (its nodes are known data), else 0.
    """

    h: float
    shape: tuple
    origin: tuple
    a: float = 1.0

    def __post_init__(self):
        if not self.h > 0:
            raise ConfigurationError("h must be positive")
        if any(n < 1 for n in self.shape):
            raise ConfigurationError(f"every axis needs at least one unknown, got {self.shape}")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.h * np.arange(self.shape[axis])

    def mesh(self) -> tuple:
        """Coordinates reshaped for broadcasting over the field shape."""
        out = []
        for d in range(self.dim):
            shape = [1] * self.dim
            shape[d] = self.shape[d]
            out.append(self.coords(d).reshape(shape))
        return tuple(out)

    @classmethod
    def for_bc(cls, h: float, bc: BoundaryConfig, a: float = 1.0, dim: int = 3) -> "Grid":
        intervals = a / h
        n_int = int(round(intervals))
        if n_int < 1 or abs(intervals - n_int) > 1e-9 * max(1.0, intervals):
            raise ConfigurationError(f"extent {a} is not an integer multiple of h = {h}")
        shape, origin = [], []
        for axis in range(dim):
            lo, hi = bc.face(axis, 0).kind, bc.face(axis, 1).kind
            count = n_int - 1 + (lo is not Kind.DIRICHLET) + (hi is not Kind.DIRICHLET)
            shape.append(count)
            origin.append(h if lo is Kind.DIRICHLET else 0.0)
        return cls(h=h, shape=tuple(shape), origin=tuple(origin), a=a)


def flat_index(grid: Grid, idx) -> np.ndarray:
    return np.ravel_multi_index(idx, grid.shape)


def unflat_index(grid: Grid, flat) -> tuple:
    return np.unravel_index(flat, grid.shape)


def interior_orders(dim: int) -> set:
    """Source derivatives used by the volume right-hand side."""
    if dim == 1:
        return {(0,), (2,)}
    orders = {(0, 0, 0)}
    for a in range(3):
        for p in (2, 4):
            o = [0, 0, 0]
            o[a] = p
            orders.add(tuple(o))
    for a in range(3):
        for b in range(a + 1, 3):
            o = [0, 0, 0]
            o[a] = o[b] = 2
            orders.add(tuple(o))
    return orders


def local_order(axis: int, normal: int, t1: int, t2: int) -> tuple:
    """Multi-index with ``normal`` along ``axis`` and t1/t2 along the other axes."""
    o = [0, 0, 0]
    o[axis] = normal
    tang = [d for d in range(3) if d != axis]
    o[tang[0]] = t1
    o[tang[1]] = t2
    return tuple(o)


TANGENTIAL = ((0, 0), (2, 0), (0, 2), (4, 0), (0, 4), (2, 2))


def face_source_orders(axis: int, kind: Kind) -> set:
    if kind is Kind.NEUMANN:
        pairs = [(1, 0, 0), (3, 0, 0), (1, 2, 0), (1, 0, 2)]
    elif kind is Kind.SOMMERFELD:
        pairs = [(0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0),
                 (1, 2, 0), (1, 0, 2), (0, 2, 0), (0, 0, 2)]
    else:
        return set()
    return {local_order(axis, *p) for p in pairs}


def face_data_orders(axis: int, kind: Kind) -> set:
    if kind is Kind.DIRICHLET:
        return {(0, 0, 0)}
    return {local_order(axis, 0, a, b) for a, b in TANGENTIAL}


@dataclass(frozen=True)
class SourceModel:
    """Right-hand side ``f`` with the analytic derivatives the scheme needs.

    ``derivs`` maps derivative multi-indices to callables of the coordinates.
    Order ``(0, 0, 0)`` (or ``(0,)`` in 1D) is ``f`` itself.
    """

    derivs: Mapping[tuple, Callable]

    def __call__(self, order: tuple, *coords) -> np.ndarray:
        return self.derivs[order](*coords)

    def missing(self, orders) -> list:
        return sorted(o for o in orders if o not in self.derivs)


@dataclass(frozen=True, eq=False)
class Setup:
    """Checked problem descriptor produced by :func:`validate_setup`."""

    grid: Grid
    wavenumber: Wavenumber
    bc: BoundaryConfig
    source: Optional[SourceModel] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def k(self) -> complex:
        return self.wavenumber.k

    @property
    def shape(self) -> tuple:
        return self.grid.shape

    @property
    def lateral_kind(self) -> Kind:
        return self.bc.x0.kind

    def zeros(self) -> np.ndarray:
        return np.zeros(self.grid.shape, dtype=complex)

    def check_field(self, U: np.ndarray) -> np.ndarray:
        U = np.asarray(U)
        if U.shape != self.grid.shape:
            raise ValueError(f"field shape {U.shape} does not match grid {self.grid.shape}")
        return U


def required_source_orders(bc: BoundaryConfig, dim: int) -> set:
    orders = interior_orders(dim)
    if dim == 3:
        for axis in range(3):
            for side in (0, 1):
                orders |= face_source_orders(axis, bc.face(axis, side).kind)
    return orders


def validate_setup(
    grid: Grid,
    k,
    bc: BoundaryConfig,
    src: Optional[SourceModel] = None,
    check_resolution: bool = True,
) -> Setup:
    """Check all invariants and return an immutable :class:`Setup`.

    ``src`` may be omitted when only operator applications are needed.
    """
    wk = k if isinstance(k, Wavenumber) else Wavenumber(k)
    bc.validate(grid.dim)
    if grid.dim not in (1, 3):
        raise ConfigurationError("only 1D and 3D grids are supported")
    if check_resolution:
        wk.check_resolution(grid.h)
    expected = Grid.for_bc(grid.h, bc, grid.a, grid.dim)
    if expected.shape != grid.shape or not np.allclose(expected.origin, grid.origin):
        raise ConfigurationError(
            f"grid shape {grid.shape} inconsistent with boundary faces (expected {expected.shape})"
        )
    if grid.dim == 3 and grid.shape[2] < 2 and any(
        bc.face(2, s).kind is not Kind.DIRICHLET for s in (0, 1)
    ):
        raise ConfigurationError("non-Dirichlet z faces need at least two unknown planes")
    if grid.dim == 3 and bc.x0.kind is Kind.NEUMANN and min(grid.shape[:2]) < 2:
        raise ConfigurationError("Neumann lateral faces need at least two unknowns per axis")
    if src is not None:
        missing = src.missing(required_source_orders(bc, grid.dim))
        if missing:
            raise ConfigurationError(f"source model lacks derivatives {missing}")
    if grid.dim == 3:
        for axis in range(3):
            for side in (0, 1):
                face = bc.face(axis, side)
                if face.data is None:
                    continue
                lacking = sorted(o for o in face_data_orders(axis, face.kind) if o not in face.data)
                if lacking:
                    raise ConfigurationError(
                        f"face {FACE_NAMES[2 * axis + side]} data lacks derivatives {lacking}"
                    )
    return Setup(grid=grid, wavenumber=wk, bc=bc, source=src)


def make_setup(h: float, k, bc: Optional[BoundaryConfig] = None, src: Optional[SourceModel] = None,
               dim: int = 3, a: float = 1.0, check_resolution: bool = True) -> Setup:
    """Build the grid implied by ``bc`` and validate everything in one call."""
    bc = bc or BoundaryConfig()
    bc.validate(dim)
    grid = Grid.for_bc(h, bc, a, dim)
    return validate_setup(grid, k, bc, src, check_resolution=check_resolution)


@dataclass(frozen=True)
class SolveReport:
    method: str
    iterations: int
    residual_history: np.ndarray
    status: str  # "converged" | "max_iter" | "div" | "breakdown"
    wall_time: float
    err_max: Optional[float] = None
    psi: Optional[float] = None
    flags: tuple = ()

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final_residual(self) -> float:
        return float(self.residual_history[-1])

    def label(self) -> str:
        if self.status == "converged":
            return str(self.iterations)
        if self.status == "div":
            return "div"
        return f">{self.iterations}"


def as_sequence(x) -> Sequence:
    return x if isinstance(x, (list, tuple)) else [x]
