import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from compact_helmholtz.core import Kind, local_order
from compact_helmholtz.krylov import IterationConfig, solve
from compact_helmholtz.operator import assemble_rhs, assemble_rhs2
from compact_helmholtz.precond import precondition_solve
from compact_helmholtz.problems import (
    FAMILIES, SOIL_K, TABLE_KS, VERIFICATION, exact_error, get_problem, problem_catalog,
)

CATALOG = problem_catalog()
ALL_PROBLEMS = CATALOG + [make(5.0) for make in VERIFICATION.values()]
IDS = [f"{p.name}-{p.k}" for p in ALL_PROBLEMS]


def _points(dim, n, seed):
    return np.random.default_rng(seed).random((dim, n))


def test_catalog_contents():
    names = {(p.name, p.k) for p in CATALOG}
    assert len(CATALOG) == 4 * 5 + 1
    for fam in FAMILIES:
        for k in TABLE_KS:
            assert (fam, complex(k)) in names
    assert ("3d-dirichlet-sommerfeld", SOIL_K) in names


def test_unknown_problem_name():
    with pytest.raises(KeyError):
        get_problem("2d-dirichlet", 10.0)


@pytest.mark.parametrize("prob", ALL_PROBLEMS, ids=IDS)
def test_source_satisfies_the_equation(prob):
    pts = _points(prob.dim, 200, 7)
    lap = sum(prob.exact_field.derivative(tuple(2 * (d == a) for d in range(prob.dim)))(*pts)
              for a in range(prob.dim))
    f = prob.source_field(*pts)
    scale = max(1.0, float(np.max(np.abs(f))))
    assert np.max(np.abs(lap + prob.k ** 2 * prob.exact(*pts) - f)) <= 1e-10 * scale


def _face_points(axis, side, n=50, seed=3):
    pts = _points(3, n, seed)
    pts[axis] = float(side)
    return pts


@pytest.mark.parametrize("prob", [p for p in ALL_PROBLEMS if p.dim == 3], ids=lambda p: f"{p.name}-{p.k}")
def test_declared_boundary_conditions_hold(prob):
    bc = prob.bc
    u = prob.exact_field
    for axis in range(3):
        for side in (0, 1):
            face = bc.face(axis, side)
            pts = _face_points(axis, side)
            val = u(*pts)
            dn = u.derivative(local_order(axis, 1, 0, 0))(*pts)
            if face.kind is Kind.DIRICHLET:
                lhs = val
            elif face.kind is Kind.NEUMANN:
                lhs = dn
            else:
                lhs = (dn if side else -dn) - 1j * prob.k * val
            target = 0 if face.homogeneous else face.data[(0, 0, 0)](*pts)
            scale = max(1.0, float(np.max(np.abs(dn))))
            assert np.max(np.abs(lhs - target)) <= 1e-10 * scale, (axis, side)


@pytest.mark.parametrize("k", TABLE_KS)
def test_three_d_dirichlet_vanishes_on_every_face(k):
    prob = get_problem("3d-dirichlet", k)
    for axis in range(3):
        for side in (0, 1):
            assert np.max(np.abs(prob.exact(*_face_points(axis, side)))) < 1e-12


@pytest.mark.parametrize("k", [20.0, SOIL_K])
def test_radiating_factor_needs_data_only_at_the_bottom(k):
    prob = get_problem("3d-dirichlet-sommerfeld", k)
    phi = lambda z: mp.exp(1j * k * (z + 1)) + mp.exp(-1j * k * (z - 1)) - 2
    top = mp.diff(phi, 1) - 1j * k * phi(1)
    bottom = -mp.diff(phi, 0) - 1j * k * phi(0)
    assert abs(top) < 1e-12
    assert abs(bottom - 2j * k * (1 - mp.exp(1j * k))) < 1e-12
    assert not prob.face_bc(2, 0).homogeneous and prob.face_bc(2, 1).homogeneous


def test_one_d_value_at_the_midpoint():
    assert get_problem("1d-dirichlet", 20.0).exact(np.array(0.5)) == pytest.approx(0.25)


def _printed_1d_source(x, k):
    # the published right-hand side, reading the k^2 bracket as (pi^2 - 1) x (1 - x)
    return (-(2 + k ** 2 * (math.pi ** 2 - 1) * x * (1 - x)) * np.cos(k * math.pi * x)
            + 2 * k * math.pi * (2 * x - 1) * np.sin(k * math.pi * x))


def _literal_1d_source(x, k):
    return (-(2 + k ** 2 * (math.pi ** 2 - x * (1 - x))) * np.cos(k * math.pi * x)
            + 2 * k * math.pi * (2 * x - 1) * np.sin(k * math.pi * x))


@pytest.mark.parametrize("k", TABLE_KS)
def test_published_one_d_source_matches_the_derived_one(k):
    prob = get_problem("1d-dirichlet", k)
    x = np.random.default_rng(11).random(200)
    derived = prob.source_field(x)
    scale = float(np.max(np.abs(derived)))
    # u'' + k^2 u carries the printed overall sign once the bracket is grouped as above
    assert np.max(np.abs(derived - _printed_1d_source(x, k))) <= 1e-10 * scale
    assert np.max(np.abs(derived - _literal_1d_source(x, k))) > 1e-3 * scale


# independent arbitrary-precision expressions of the exact solutions
def _mp_exact(name, k):
    kp = k * mp.pi
    bump = lambda x: x ** 3 * (1 - x) ** 3
    damped = lambda y: y * (1 - y) * mp.cos(kp * y)
    if name == "1d-dirichlet":
        return lambda x: x * (1 - x) * mp.cos(kp * x)
    if name == "3d-dirichlet":
        return lambda x, y, z: bump(x) * damped(y) * mp.sin(kp * z)
    if name == "3d-dirichlet-neumann":
        return lambda x, y, z: bump(x) * damped(y) * mp.cos(kp * z)
    rad = lambda z: mp.exp(1j * k * (z + 1)) + mp.exp(-1j * k * (z - 1)) - 2
    return lambda x, y, z: bump(x) * damped(y) * rad(z)


ORDERS_3D = [(0, 0, 0), (1, 0, 0), (0, 0, 1), (2, 0, 0), (0, 2, 0), (0, 0, 2), (2, 2, 0),
             (0, 2, 2), (4, 0, 0), (0, 0, 4), (1, 2, 0), (0, 0, 3), (2, 2, 2), (0, 4, 2)]


@pytest.mark.parametrize("name", list(FAMILIES))
@pytest.mark.parametrize("k", [10.0, 20.0])
def test_closed_form_derivatives_agree_with_numerical_differentiation(name, k):
    prob = get_problem(name, k)
    ref = _mp_exact(name, k)
    orders = [(n,) for n in range(7)] if prob.dim == 1 else ORDERS_3D
    pts = _points(prob.dim, 3, 5).T
    with mp.workdps(40):
        for order in orders:
            scale = (k * math.pi + 1) ** sum(order)
            got = prob.exact_field.derivative(order)(*pts.T)
            for p, g in zip(pts, got):
                want = complex(mp.diff(ref, tuple(mp.mpf(float(c)) for c in p), order))
                assert abs(g - want) <= 1e-8 * scale, (order, p)


@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_source_agrees_with_numerical_differentiation(x, y, z):
    k = 20.0
    ref = _mp_exact("3d-dirichlet-sommerfeld", k)
    with mp.workdps(30):
        p = (mp.mpf(x), mp.mpf(y), mp.mpf(z))
        lap = sum(mp.diff(ref, p, o) for o in [(2, 0, 0), (0, 2, 0), (0, 0, 2)])
        want = complex(lap + k ** 2 * ref(*p))
    got = complex(get_problem("3d-dirichlet-sommerfeld", k).source_field(x, y, z))
    assert abs(got - want) <= 1e-8 * (k * math.pi) ** 2


@pytest.mark.parametrize("name", ["1d-dirichlet", "3d-dirichlet-sommerfeld"])
def test_sampled_exact_solution_has_zero_error(name):
    prob = get_problem(name, 10.0)
    s = prob.setup(1 / 16)
    assert exact_error(s, prob.sample(s), prob) == 0.0


def test_one_d_errors_at_h_64():
    prob = get_problem("1d-dirichlet", 20.0)
    s = prob.setup(1 / 64)
    U, rep = solve(s, assemble_rhs(s), IterationConfig(method="gmres"))
    assert rep.converged
    assert exact_error(s, U, prob) == pytest.approx(5.08e-5, rel=0.05)
    U2 = precondition_solve(s, assemble_rhs2(s))
    assert exact_error(s, U2, prob) == pytest.approx(2.4e-2, rel=0.05)
