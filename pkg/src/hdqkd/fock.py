"""Fock-state wavefunctions and quadrature bin integrals.

Scalar special-function layer used by the measurement model: harmonic
oscillator wavefunctions psi_m(q), their cross-Gram integrals over
quadrature intervals for ideal and lossy detectors, and the discretised
bin probabilities C_{nu|m}.

Conventions: the vacuum quadrature distribution |psi_0(q)|^2 is the
standard normal N(0, 1), i.e. psi_m(q) is the m-th Hermite function of
q/sqrt(2) with an extra 2^{-1/4} normalisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .errors import NumericalToleranceError, UnsupportedOrderError

#: Hard cap on the Fock order; the three-term recurrence is stable well
#: beyond this, but integrands become too oscillatory for the default
#: quadrature budget.
FOCK_ORDER_CAP = 64

DEFAULT_QUAD_TOL = 1e-10


@dataclass(frozen=True)
class Interval:
    """Half-open quadrature interval [lo, hi); +-inf endpoints allowed."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval: [{self.lo}, {self.hi})")

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)


FULL_LINE = Interval(-math.inf, math.inf)


@dataclass(frozen=True)
class BinGrid:
    """Uniform binning of the quadrature axis with two aggregate tails.

    Retained bins are I_nu = [nu*delta, (nu+1)*delta) for nu in
    [nu_min, nu_max]; everything below nu_min*delta and at or above
    (nu_max+1)*delta is collected into a lower/upper tail bin so the
    probability vector is complete by construction.
    """

    delta: float
    nu_min: int
    nu_max: int

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("bin width delta must be positive")
        if self.nu_min >= self.nu_max:
            raise ValueError("need nu_min < nu_max")

    @property
    def n_retained(self) -> int:
        return self.nu_max - self.nu_min + 1

    @property
    def n_bins(self) -> int:
        """Retained bins plus the two tails."""
        return self.n_retained + 2

    def interval(self, nu: int) -> Interval:
        if not self.nu_min <= nu <= self.nu_max:
            raise ValueError(f"bin index {nu} outside [{self.nu_min}, {self.nu_max}]")
        return Interval(nu * self.delta, (nu + 1) * self.delta)

    def lower_tail(self) -> Interval:
        return Interval(-math.inf, self.nu_min * self.delta)

    def upper_tail(self) -> Interval:
        return Interval((self.nu_max + 1) * self.delta, math.inf)

    def intervals(self) -> list[Interval]:
        """All bins in storage order: lower tail, retained bins, upper tail."""
        out = [self.lower_tail()]
        out.extend(self.interval(nu) for nu in range(self.nu_min, self.nu_max + 1))
        out.append(self.upper_tail())
        return out

    def edges(self) -> np.ndarray:
        """Finite bin edges, length n_retained + 1."""
        return self.delta * np.arange(self.nu_min, self.nu_max + 2)

    def position(self, nu) -> int:
        """Storage index of a bin: 0 = lower tail, n_bins-1 = upper tail."""
        if nu == "lo":
            return 0
        if nu == "hi":
            return self.n_bins - 1
        return int(nu) - self.nu_min + 1


def _check_order(m: int):
    if m < 0:
        raise UnsupportedOrderError(f"negative Fock order {m}")
    if m > FOCK_ORDER_CAP:
        raise UnsupportedOrderError(f"Fock order {m} above hard cap {FOCK_ORDER_CAP}")


def fock_wavefunctions(m_max: int, q) -> np.ndarray:
    """Evaluate psi_0 .. psi_{m_max} at q via the normalised recurrence.

    Returns an array of shape (m_max+1,) + shape(q).  The recurrence
    psi_{m+1} = (q psi_m - sqrt(m) psi_{m-1}) / sqrt(m+1) operates on the
    normalised functions directly, so no factorials ever appear.
    """
    _check_order(m_max)
    q = np.asarray(q, dtype=float)
    out = np.empty((m_max + 1,) + q.shape, dtype=float)
    out[0] = (2.0 * math.pi) ** (-0.25) * np.exp(-0.25 * q * q)
    if m_max >= 1:
        out[1] = q * out[0]
    for m in range(1, m_max):
        out[m + 1] = (q * out[m] - math.sqrt(m) * out[m - 1]) / math.sqrt(m + 1)
    return out


def fock_wavefunction(m: int, q):
    """Wavefunction psi_m(q) of the m-photon Fock state."""
    _check_order(m)
    values = fock_wavefunctions(m, q)[m]
    if np.ndim(q) == 0:
        return float(values)
    return values


def _integration_window(k: int, l: int) -> float:
    # |psi_k psi_l| is negligible (< 1e-60) beyond the classical turning
    # point plus a wide Gaussian margin.
    return 2.0 * math.sqrt(2.0 * max(k, l) + 1.0) + 26.0


@lru_cache(maxsize=200_000)
def _cross_gram_cached(k: int, l: int, lo: float, hi: float, eta_det: float,
                       tol: float) -> float:
    window = _integration_window(k, l)

    if eta_det == 1.0:
        a, b = max(lo, -window), min(hi, window)
        if a >= b:
            return 0.0

        def integrand(q):
            psi = fock_wavefunctions(max(k, l), q)
            return psi[k] * psi[l]
    else:
        a, b = -window, window
        sigma = math.sqrt(1.0 - eta_det)
        root_eta = math.sqrt(eta_det)

        def integrand(q):
            psi = fock_wavefunctions(max(k, l), q)
            upper = ndtr((hi - root_eta * q) / sigma) if math.isfinite(hi) else 1.0
            lower = ndtr((lo - root_eta * q) / sigma) if math.isfinite(lo) else 0.0
            return psi[k] * psi[l] * (upper - lower)

    value, abserr = integrate.quad(integrand, a, b, epsabs=tol, epsrel=1e-12,
                                   limit=300)
    if abserr > 100.0 * tol:
        raise NumericalToleranceError(
            f"cross-Gram quadrature for (k={k}, l={l}, [{lo}, {hi}), "
            f"eta={eta_det}) reached only {abserr:.2e} (requested {tol:.1e})",
            achieved=abserr,
        )
    return value


def cross_gram(k: int, l: int, iv: Interval, eta_det: float = 1.0,
               tol: float = DEFAULT_QUAD_TOL) -> float:
    """Cross-Gram integral of the one-mode homodyne POVM over an interval.

    For a detector of efficiency eta_det this is

        int_iv dq  int dq' N(q; sqrt(eta) q', 1-eta) psi_k(q') psi_l(q'),

    i.e. the (k, l) Fock matrix element of the measured-quadrature POVM
    integrated over iv; at eta_det = 1 the Gaussian kernel degenerates to
    a delta and the integral reduces to int_iv psi_k psi_l.
    """
    _check_order(k)
    _check_order(l)
    if not 0.0 < eta_det <= 1.0:
        raise ValueError("detector efficiency must be in (0, 1]")
    if k > l:
        k, l = l, k  # symmetric in (k, l)
    return _cross_gram_cached(k, l, float(iv.lo), float(iv.hi), float(eta_det),
                              float(tol))


@lru_cache(maxsize=4096)
def _ideal_bin_row(m: int, delta: float, nu_min: int, nu_max: int,
                   tol: float) -> tuple[float, ...]:
    grid = BinGrid(delta, nu_min, nu_max)
    return tuple(cross_gram(m, m, iv, 1.0, tol) for iv in grid.intervals())


def bin_prob(m: int, nu, grid: BinGrid, eta_det: float = 1.0,
             tol: float = DEFAULT_QUAD_TOL) -> float:
    """Probability C_{nu|m} that an m-photon pulse lands in bin nu.

    Detector loss acts as a binomial mixture over surviving photon
    numbers k <= m of the ideal bin probabilities:

        C_{nu|m} = sum_k binom(m, k) (1-eta)^(m-k) eta^k int_{I_nu} |psi_k|^2.

    ``nu`` is a retained bin index, or "lo"/"hi" for the tail bins.
    """
    return float(bin_prob_table(m, grid, eta_det, tol)[m, grid.position(nu)])


def bin_prob_table(m_max: int, grid: BinGrid, eta_det: float = 1.0,
                   tol: float = DEFAULT_QUAD_TOL) -> np.ndarray:
    """C_{nu|m} matrix of shape (m_max+1, grid.n_bins), tails included."""
    _check_order(m_max)
    if not 0.0 <= eta_det <= 1.0:
        raise ValueError("detector efficiency must be in [0, 1]")
    ideal = np.array([_ideal_bin_row(k, grid.delta, grid.nu_min, grid.nu_max, tol)
                      for k in range(m_max + 1)])
    if eta_det == 1.0:
        return ideal
    table = np.zeros_like(ideal)
    for m in range(m_max + 1):
        if eta_det == 0.0:
            table[m] = ideal[0]
            continue
        for k in range(m + 1):
            weight = (math.comb(m, k) * (1.0 - eta_det) ** (m - k)
                      * eta_det ** k)
            table[m] += weight * ideal[k]
    return table
