import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from compact_helmholtz import oracle, spectra
from compact_helmholtz.core import BoundaryConfig, ConfigurationError, dirichlet, make_setup

from conftest import small_setup


def one_d_setup(N, k):
    return make_setup(1 / (N + 1), k, BoundaryConfig(dirichlet(), dirichlet()), dim=1, check_resolution=False)


@pytest.mark.parametrize("N", [3, 5, 7, 8])
@pytest.mark.parametrize("which, closed", [("A6", "A"), ("A2", "A_p")])
def test_1d_closed_forms_match_dense_spectra(N, which, closed):
    k = 6.0
    s = one_d_setup(N, k)
    dense = np.sort(oracle.dense_eigs(oracle.assemble_dense(s, which)).real)
    formula = np.sort(spectra.eig_1d(np.arange(1, N + 1), N, k, s.h, closed).real)
    np.testing.assert_allclose(formula, dense, rtol=1e-11, atol=1e-13)


@pytest.mark.parametrize("N", [3, 5, 8])
@pytest.mark.parametrize("which, closed", [("A6", "A"), ("A2", "A_p")])
def test_3d_closed_forms_match_dense_spectra(N, which, closed):
    k = 4.0
    s = small_setup("DDD", N + 1, k)
    dense = np.sort(oracle.dense_eigs(oracle.assemble_dense(s, which)).real)
    idx = np.array(list(itertools.product(range(1, N + 1), repeat=3)))
    formula = np.sort(spectra.eig_3d(idx[:, 0], idx[:, 1], idx[:, 2], N, k, s.h, closed).real)
    np.testing.assert_allclose(formula, dense, rtol=1e-11, atol=1e-12)


def test_preconditioned_1d_ratio():
    N, k, h = 31, 20.0, 1 / 32
    j = np.arange(1, N + 1)
    d = spectra.eig_1d(j, N, k, h, "A") / spectra.eig_1d(j, N, k, h, "A_p") - 1
    kh = k * h
    expected = kh ** 4 * (14 + np.cos(j * np.pi * h)) / 180 / (4 * np.sin(j * np.pi * h / 2) ** 2 - kh ** 2)
    np.testing.assert_allclose(d.real, expected, rtol=1e-12)


@given(st.integers(1, 20), st.integers(1, 20), st.integers(1, 20), st.floats(0.0, 30.0))
def test_eig_3d_is_symmetric_in_the_mode_indices(m, n, s, k):
    N, h = 20, 1 / 21
    ref = spectra.eig_3d(m, n, s, N, k, h)
    for perm in itertools.permutations((m, n, s)):
        assert spectra.eig_3d(*perm, N, k, h) == pytest.approx(ref, rel=1e-14, abs=1e-15)


def test_index_and_operator_are_validated():
    with pytest.raises(ConfigurationError):
        spectra.eig_1d(0, 5, 1.0, 0.1)
    with pytest.raises(ConfigurationError):
        spectra.eig_3d(1, 1, 6, 5, 1.0, 0.1)
    with pytest.raises(ConfigurationError):
        spectra.eig_1d(1, 5, 1.0, 0.1, which="B")


@pytest.mark.parametrize("k", [3.0, 10.0, 20.0, 30.0])
def test_sorted_triple_reduction_equals_exhaustive_scan(k):
    fast = spectra.spectrum_summary(16, k, 1 / 17)
    full = spectra.spectrum_summary(16, k, 1 / 17, exhaustive=True)
    # summation order differs between the two paths, so compare to rounding
    assert fast.d_min == pytest.approx(full.d_min, rel=1e-12)
    assert fast.d_max == pytest.approx(full.d_max, rel=1e-12)
    assert fast.delta0 == pytest.approx(full.delta0, rel=1e-15)


def test_summary_matches_brute_force_over_modes():
    N, k, h = 16, 20.0, 1 / 17
    idx = np.array(list(itertools.product(range(1, N + 1), repeat=3)))
    lam = spectra.eig_3d(idx[:, 0], idx[:, 1], idx[:, 2], N, k, h, "A").real
    lam_p = spectra.eig_3d(idx[:, 0], idx[:, 1], idx[:, 2], N, k, h, "A_p").real
    d = lam / lam_p - 1
    summary = spectra.spectrum_summary(N, k, h)
    assert summary.d_min == pytest.approx(d.min(), rel=1e-12)
    assert summary.d_max == pytest.approx(d.max(), rel=1e-12)
    at = int(np.argmin(np.abs(lam_p)))
    assert summary.delta0 == pytest.approx(abs(lam_p[at]) / h ** 2)
    assert sorted(summary.mode_at_min) == sorted(idx[at].tolist())


def test_summary_invariants_are_enforced():
    with pytest.raises(ValueError):
        spectra.SpectrumSummary(1.0, 0.0, 1.0, (1, 1, 1))
    with pytest.raises(ValueError):
        spectra.SpectrumSummary(0.0, 1.0, -1.0, (1, 1, 1))
    with pytest.raises(ConfigurationError):
        spectra.spectrum_summary(8, 3.0 + 1j)


def test_table_pair_flips_the_sign():
    s = spectra.spectrum_summary(63, 10.0, 1 / 64)
    assert s.table_pair == (-s.d_max, -s.d_min)
    assert spectra.matches_printed(s.table_pair[0], "-.015")
    assert spectra.matches_printed(s.table_pair[1], "0.49")


@pytest.mark.parametrize("k, inv_h, lower, upper", [(20, 128, "-.158", ".49"), (50, 512, "-.298", ".49")])
def test_published_cells(k, inv_h, lower, upper):
    lo, hi = spectra.spectrum_summary(inv_h - 1, k, 1 / inv_h).table_pair
    assert spectra.matches_printed(lo, lower) and spectra.matches_printed(hi, upper)


def test_single_cell_request():
    cells, deltas = spectra.bound_table((10,), (64,))
    assert len(cells) == 1 and cells[0].matches


def test_printed_unit_and_matching():
    assert spectra.printed_unit("-.0038") == pytest.approx(1e-4)
    assert spectra.printed_unit("180") == 1.0
    assert spectra.matches_printed(-0.00856, "-.009")  # rounded
    assert spectra.matches_printed(-0.03154, "-.031")  # truncated
    assert not spectra.matches_printed(-0.0335, "-.031")


def test_delta0_published_example():
    # the two bracketing candidates are 44.69 and 63.0; the smaller is returned
    assert spectra.estimate_delta0(20.0, 1 / 32) == pytest.approx(44.69, abs=0.01)


def test_delta0_small_wavenumber():
    assert spectra.estimate_delta0(2.9, 1 / 64) == pytest.approx(1 / 3)


def test_delta0_rejects_underresolved_grids():
    with pytest.raises(ConfigurationError):
        spectra.estimate_delta0(20.0, 1 / 16)


def test_delta0_warns_near_the_spectrum():
    k = 2 * 64 * np.sin(3 * np.pi / 128)  # exactly on a discrete eigenvalue
    with pytest.warns(spectra.ResonanceWarning):
        spectra.estimate_delta0(k, 1 / 64)


@given(st.floats(3.01, 40.0), st.sampled_from([64, 128, 256]))
def test_exhaustive_delta0_dominates_the_estimate(k, inv_h):
    h = 1 / inv_h
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", spectra.ResonanceWarning)
        est = spectra.estimate_delta0(k, h)
    if est > 0:
        assert spectra.delta0_exhaustive_1d(k, h) >= est - 1e-9 * k * k


@given(st.sampled_from([(20.0, 64), (20.0, 128), (20.0, 256), (10.0, 64), (5.0, 32)]))
def test_1d_ratios_lie_in_the_theoretical_bracket(case):
    k, inv_h = case
    h, N = 1 / inv_h, inv_h - 1
    delta0 = spectra.estimate_delta0(k, h)
    lo, hi = spectra.one_d_bounds(k, h, delta0)
    j = np.arange(1, N + 1)
    d = np.abs(spectra.eig_1d(j, N, k, h, "A") / spectra.eig_1d(j, N, k, h, "A_p") - 1)
    assert np.all(d >= lo * (1 - 1e-9)) and np.all(d <= hi * (1 + 1e-9))
