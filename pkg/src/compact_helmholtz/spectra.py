"""Closed-form spectra of the all-Dirichlet operators and derived bounds.

With Dirichlet closures both ``A6`` and ``A2`` are diagonalised by the same
sine basis, so every eigenvalue of the preconditioned operator ``A6 A2^{-1}``
is a ratio of two closed forms.  Everything is in the h^2-scaled convention
used by :mod:`operator`; ``s_r`` below stands for ``sin(r pi h / 2)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import PPW_LIMIT, ConfigurationError

WHICH = ("A", "A_p")


class ResonanceWarning(UserWarning):
    """The wavenumber sits too close to the discrete Laplacian spectrum."""


def _check_which(which: str) -> None:
    if which not in WHICH:
        raise ConfigurationError(f"which must be one of {WHICH}, got {which!r}")


def _check_index(r, N: int) -> None:
    r = np.asarray(r)
    if np.any(r < 1) or np.any(r > N):
        raise ConfigurationError(f"mode index outside 1..{N}")


def _sin2(r, h):
    return np.sin(np.asarray(r) * np.pi * h / 2) ** 2


def eig_1d(j, N: int, k, h: float, which: str = "A"):
    """Eigenvalue ``j`` (1-based, array-friendly) of the 1D operator or its preconditioner."""
    _check_which(which)
    _check_index(j, N)
    kh2 = (k * h) ** 2
    lam_p = -4 * _sin2(j, h) + kh2
    if which == "A_p":
        return lam_p + 0j
    return lam_p - kh2 * kh2 * (14 + np.cos(np.asarray(j) * np.pi * h)) / 180 + 0j


def _correction_3d(a, b, c, kh2):
    """``lambda - lambda_p`` in terms of the three squared sines."""
    return ((8 / 3) * (1 + kh2 / 30) * (a * b + a * c + b * c)
            - (32 / 15) * a * b * c - kh2 * kh2 / 12 + kh2 ** 3 / 360)


def eig_3d(m, n, s, N: int, k, h: float, which: str = "A"):
    """Eigenvalue for the sine mode ``(m, n, s)`` on an ``N^3`` Dirichlet grid."""
    _check_which(which)
    for r in (m, n, s):
        _check_index(r, N)
    kh2 = (k * h) ** 2
    a, b, c = _sin2(m, h), _sin2(n, h), _sin2(s, h)
    lam_p = -4 * (a + b + c) + kh2
    if which == "A_p":
        return lam_p + 0j
    return lam_p + _correction_3d(a, b, c, kh2) + 0j


@dataclass(frozen=True)
class SpectrumSummary:
    """Extremes of ``d = lambda / lambda_p - 1`` over all modes.

    ``delta0`` is the smallest ``|lambda_p| / h^2`` (distance of ``k^2`` from
    the discrete Laplacian spectrum) and ``mode_at_min`` the 1-based mode
    triple attaining it.
    """

    d_min: float
    d_max: float
    delta0: float
    mode_at_min: tuple

    def __post_init__(self):
        if not self.d_min <= self.d_max:
            raise ValueError("d_min exceeds d_max")
        if self.delta0 < 0:
            raise ValueError("delta0 must be nonnegative")

    @property
    def table_pair(self) -> tuple:
        """Bounds of ``1 - lambda / lambda_p``, the sign used in published tables."""
        return (-self.d_max, -self.d_min)

    @property
    def chebyshev_interval(self) -> tuple:
        return (self.d_min, self.d_max)


def _real_wavenumber(k) -> float:
    if abs(np.imag(k)) > 0:
        raise ConfigurationError("closed-form bounds need a real wavenumber")
    return float(np.real(k))


def spectrum_summary(N: int, k, h: float | None = None, exhaustive: bool = False) -> SpectrumSummary:
    """Scan every mode triple of the ``N^3`` all-Dirichlet problem.

    ``d`` is symmetric in the three indices, so by default only sorted
    triples ``i <= j <= l`` are visited; ``exhaustive=True`` visits all
    ``N^3`` triples (used to check the reduction).
    """
    if N < 1:
        raise ConfigurationError("N must be positive")
    h = 1.0 / (N + 1) if h is None else h
    k = _real_wavenumber(k)
    kh2 = (k * h) ** 2
    s2 = _sin2(np.arange(1, N + 1), h)
    d_min, d_max = math.inf, -math.inf
    best, best_mode = math.inf, (1, 1, 1)
    for i in range(N):
        lo = i if not exhaustive else 0
        b = s2[lo:, None]
        c = s2[None, lo:]
        lam_p = -4 * (s2[i] + b + c) + kh2
        with np.errstate(divide="ignore", invalid="ignore"):
            d = _correction_3d(s2[i], b, c, kh2) / lam_p
        if not exhaustive:
            keep = np.triu(np.ones(d.shape, dtype=bool))
            d = np.where(keep, d, np.nan)
            lam_p = np.where(keep, lam_p, np.nan)
        d_min = min(d_min, float(np.nanmin(d)))
        d_max = max(d_max, float(np.nanmax(d)))
        dist = np.abs(lam_p)
        flat = int(np.nanargmin(dist))
        if dist.flat[flat] < best:
            best = float(dist.flat[flat])
            j, l = np.unravel_index(flat, dist.shape)
            best_mode = (i + 1, lo + int(j) + 1, lo + int(l) + 1)
    return SpectrumSummary(d_min, d_max, best / h ** 2, best_mode)


def spectrum_summary_1d(N: int, k, h: float | None = None) -> SpectrumSummary:
    h = 1.0 / (N + 1) if h is None else h
    k = _real_wavenumber(k)
    j = np.arange(1, N + 1)
    lam = eig_1d(j, N, k, h, "A").real
    lam_p = eig_1d(j, N, k, h, "A_p").real
    d = lam / lam_p - 1
    at = int(np.argmin(np.abs(lam_p)))
    return SpectrumSummary(float(d.min()), float(d.max()), float(abs(lam_p[at]) / h ** 2), (at + 1,))


def one_d_bounds(k, h: float, delta0: float) -> tuple:
    """``(m, M)`` bracketing ``|lambda_j / lambda_j^p - 1|`` in 1D."""
    k = abs(k)
    return 13 * h ** 4 * k ** 4 / 720, h ** 2 * k ** 4 / (12 * delta0)


def estimate_delta0(k, h: float) -> float:
    """Analytic lower bound on ``min_j |4 sin^2(j pi h / 2) / h^2 - k^2|``.

    The two candidate modes bracket the continuous root
    ``alpha_0 = arcsin(k h / 2)``; the upper one is bounded with a two-term
    Taylor expansion of ``sin^2``.  Small wavenumbers (``k^2 < 9``) sit below
    the first mode and get the fixed bound ``1/3``.  A nonpositive bracket
    means ``k`` is too close to the discrete spectrum and is reported with a
    :class:`ResonanceWarning`.
    """
    k = _real_wavenumber(k)
    if not k * h < PPW_LIMIT:
        raise ConfigurationError(f"k h = {k * h:.4g} exceeds the resolution limit {PPW_LIMIT:.4g}")
    if k * k < 9:
        return 1 / 3
    alpha0 = math.asin(k * h / 2)
    j0 = math.floor(2 * alpha0 / (math.pi * h))
    j1 = j0 + 1
    below = k * k - (j0 * math.pi) ** 2
    above = (j1 * math.pi) ** 2 - k * k - (j1 * math.pi) ** 4 * h * h / 12
    delta0 = min(below, above)
    if delta0 <= 0:
        warnings.warn(f"k = {k} is within the discrete spectrum bracket at h = {h}",
                      ResonanceWarning, stacklevel=2)
    return delta0


def delta0_exhaustive_1d(k, h: float) -> float:
    N = round(1 / h) - 1
    j = np.arange(1, N + 1)
    return float(np.min(np.abs(4 * _sin2(j, h) / h ** 2 - _real_wavenumber(k) ** 2)))


# Published eigenvalue-bound grid: (k, 1/h) -> printed (lower, upper) strings,
# plus the suggested (1/h_1, delta0) per k.  Strings keep the printed precision.
TABLE_KS = (10, 20, 30, 40, 50)
TABLE_INV_H = (64, 128, 256, 512)
PUBLISHED_BOUNDS = {
    10: ("-.015", "0.49", "-.0038", "0.49", "-.00094", "0.49", "-.00023", "0.49"),
    20: ("-1.22", ".49", "-.158", ".49", "-.035", ".49", "-.009", ".49"),
    30: ("-1.02", ".88", "-.140", ".64", "-.031", ".49", "-.008", ".49"),
    40: ("-34.7", "180", "-2.81", "0.90", "-0.22", "0.69", "-.048", "0.49"),
    50: ("-10.2", "55.0", "-2.21", "1.74", "-11.7", ".56", "-.298", ".49"),
}
PUBLISHED_DELTA0 = {10: (64, "8.00"), 20: (128, "4.00"), 30: (256, "1.80"), 40: (256, "1.12"), 50: (512, "2.9")}


def printed_unit(text: str) -> float:
    """One unit in the last printed digit of a decimal string."""
    text = text.strip().lstrip("+-")
    if "." not in text:
        return 1.0
    return 10.0 ** -len(text.split(".")[1])


def matches_printed(value: float, text: str, units: float = 1.0) -> bool:
    """``value`` lies within ``units`` of the last printed digit of ``text``.

    One unit accepts both rounded and truncated printing.
    """
    return abs(value - float(text)) < units * printed_unit(text) * (1 + 1e-9)


@dataclass(frozen=True)
class BoundCell:
    k: int
    inv_h: int
    summary: SpectrumSummary
    printed: tuple

    @property
    def matches(self) -> bool:
        lo, hi = self.summary.table_pair
        return matches_printed(lo, self.printed[0]) and matches_printed(hi, self.printed[1])


@dataclass(frozen=True)
class Delta0Cell:
    k: int
    inv_h: int
    exhaustive: float
    printed: str

    @property
    def matches(self) -> bool:
        return matches_printed(self.exhaustive, self.printed)


def bound_table(ks=TABLE_KS, inv_hs=TABLE_INV_H):
    """Bound pairs and delta0 checks for the requested ``(k, 1/h)`` cells."""
    cells = []
    for k in ks:
        for inv_h in inv_hs:
            col = TABLE_INV_H.index(inv_h) if inv_h in TABLE_INV_H else None
            printed = PUBLISHED_BOUNDS.get(k, ())[2 * col:2 * col + 2] if col is not None else ()
            cells.append(BoundCell(k, inv_h, spectrum_summary(inv_h - 1, k, 1.0 / inv_h), tuple(printed)))
    deltas = []
    for k in ks:
        if k in PUBLISHED_DELTA0:
            inv_h, text = PUBLISHED_DELTA0[k]
            deltas.append(Delta0Cell(k, inv_h, spectrum_summary(inv_h - 1, k, 1.0 / inv_h).delta0, text))
    return cells, deltas
