import numpy as np
import pytest
from hypothesis import given, strategies as st

from compact_helmholtz import oracle, spectra
from compact_helmholtz.core import BoundaryConfig, ConfigurationError, Kind, dirichlet, make_setup

from conftest import BC_CODES, small_setup

NO_RADIATION = [c for c in BC_CODES if "S" not in c]


@pytest.mark.parametrize("code", NO_RADIATION)
@pytest.mark.parametrize("which", ["A6", "A2"])
def test_stencil_walk_agrees_with_kronecker_sums(code, which):
    s = small_setup(code, 5, 3.7)
    walk = oracle.assemble_dense(s, which).matrix
    kron = oracle.assemble_dense(s, which, "kronecker").matrix
    np.testing.assert_allclose(walk, kron, rtol=0, atol=1e-13)


def test_kronecker_refuses_radiation_faces_for_the_compact_operator():
    with pytest.raises(ConfigurationError):
        oracle.assemble_dense(small_setup("DDS", 4), "A6", "kronecker")


def test_unknown_operator_or_construction():
    s = small_setup("DDD", 4)
    with pytest.raises(ValueError):
        oracle.assemble_dense(s, "A4")
    with pytest.raises(ValueError):
        oracle.assemble_dense(s, "A6", "fft")


def test_one_d_matrix_is_tridiagonal_toeplitz():
    k, h = 7.0, 1 / 10
    s = make_setup(h, k, BoundaryConfig(dirichlet(), dirichlet()), dim=1, check_resolution=False)
    M = oracle.assemble_dense(s).matrix
    kh2 = (k * h) ** 2
    off = 1 - kh2 ** 2 / 360
    diag_expected = -2 + kh2 - 7 * kh2 ** 2 / 90
    assert np.allclose(np.diag(M), diag_expected)
    assert np.allclose(np.diag(M, 1), off) and np.allclose(np.diag(M, -1), off)
    assert np.count_nonzero(np.triu(M, 2)) == 0 and np.count_nonzero(np.tril(M, -2)) == 0


def test_second_order_interior_row_sum():
    k, n = 4.0, 6
    s = small_setup("DDD", n, k)
    M = oracle.assemble_dense(s, "A2").matrix
    centre = np.ravel_multi_index((2, 2, 2), s.shape)
    assert M[centre].sum() == pytest.approx((k / n) ** 2)
    assert np.count_nonzero(M[centre]) == 7


def test_compact_interior_row_has_27_entries():
    s = small_setup("DDD", 6, 4.0)
    M = oracle.assemble_dense(s).matrix
    centre = np.ravel_multi_index((2, 2, 2), s.shape)
    assert np.count_nonzero(M[centre]) == 27


def test_size_guard():
    s = make_setup(1 / 18, 1.0, dim=3, check_resolution=False)  # 17^3 > limit
    assert s.grid.size > oracle.MAX_UNKNOWNS
    with pytest.raises(ConfigurationError):
        oracle.assemble_dense(s)
    with pytest.raises(ConfigurationError):
        oracle.dense_eigs(np.eye(oracle.MAX_UNKNOWNS + 1))


@pytest.mark.filterwarnings("ignore::scipy.linalg.LinAlgWarning")
def test_dense_solve_identity_and_singular():
    F = np.arange(6.0) + 1j
    np.testing.assert_array_equal(oracle.dense_solve(np.eye(6), F), F)
    with pytest.raises(np.linalg.LinAlgError):
        oracle.dense_solve(np.zeros((3, 3)), np.ones(3))


def test_dense_solve_keeps_the_field_shape(rng):
    s = small_setup("DND", 4)
    op = oracle.assemble_dense(s)
    F = rng.standard_normal(s.shape)
    U = oracle.dense_solve(op, F)
    assert U.shape == s.shape
    np.testing.assert_allclose(op @ U.ravel(), F.ravel(), atol=1e-12)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
def test_diagonal_eigenvalues_come_back_sorted(values):
    w = oracle.dense_eigs(np.diag(values))
    np.testing.assert_allclose(w.real, np.sort(values), atol=1e-12)


@pytest.mark.parametrize("n", [2, 5, 9])
def test_dirichlet_second_difference_spectrum(n):
    L = oracle._lambda_1d(n, Kind.DIRICHLET, Kind.DIRICHLET)
    j = np.arange(1, n + 1)
    expected = -4 * np.sin(j * np.pi / (2 * (n + 1))) ** 2
    np.testing.assert_allclose(np.sort(oracle.dense_eigs(L).real), np.sort(expected), atol=1e-13)


@pytest.mark.parametrize("which, closed", [("A6", "A"), ("A2", "A_p")])
def test_sine_products_are_eigenvectors(which, closed):
    N, k = 5, 4.0
    s = small_setup("DDD", N + 1, k)
    M = oracle.assemble_dense(s, which).matrix
    x = np.arange(1, N + 1) / (N + 1)
    for m, n, p in [(1, 1, 1), (2, 3, 5), (5, 4, 1)]:
        v = np.einsum("i,j,k->ijk", np.sin(m * np.pi * x), np.sin(n * np.pi * x), np.sin(p * np.pi * x)).ravel()
        lam = spectra.eig_3d(m, n, p, N, k, s.h, closed)
        np.testing.assert_allclose(M @ v, lam * v, atol=1e-12)


@pytest.mark.parametrize("code", ["DDD", "NNN", "DNN"])
def test_operator_is_symmetric_in_the_all_dirichlet_case(code):
    M = oracle.assemble_dense(small_setup(code, 5, 3.0)).matrix
    if code == "DDD":
        np.testing.assert_allclose(M, M.T, atol=1e-14)
    else:
        # Neumann closures double the inward weight, so only a diagonal similarity symmetrises
        assert not np.allclose(M, M.T)


def test_radiation_faces_make_the_operator_non_hermitian():
    M = oracle.assemble_dense(small_setup("DDS", 4, 3.0)).matrix
    assert not np.allclose(M, M.conj().T)
    w = oracle.dense_eigs(M)
    assert np.all(np.abs(w) > 0)
    assert w.dtype == complex
