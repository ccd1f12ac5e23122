"""Symmetric-state coefficients and Poisson source statistics.

The four n-photon BB84 states form a symmetric set
``|n_k> = sum_j c_j(n) exp(2 pi i k j / 4) |phi_j(n)>``.  Only the
magnitudes ``|c_j(n)|`` enter any probability computed in this package,
so phases are fixed to zero throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Default photon-number truncation; the Poisson tail beyond it is < 1e-14 for mu <= 1.
N_MAX = 60


@dataclass(frozen=True)
class PhotonCoefficients:
    n: int
    c: tuple[float, float, float, float]

    @property
    def squared(self) -> np.ndarray:
        return np.square(self.c)

    @property
    def c_min(self) -> float:
        return min(self.c)


def _check_photon_number(n: int) -> None:
    if n < 1:
        raise ValueError(f"photon number must be >= 1, got {n}")


def coefficients(n: int) -> PhotonCoefficients:
    """Magnitudes |c_0(n)|..|c_3(n)| of the n-photon symmetric decomposition."""
    _check_photon_number(n)
    amp = 2.0 ** (-(1.0 + n / 2.0))
    # exact values at multiples of pi/4 avoid 1e-17 noise (c_3(2) must be exactly 0)
    cos_t, sin_t = _EIGHTH_TURN[n % 8]
    sq = (0.25 + amp * cos_t, 0.25 + amp * sin_t, 0.25 - amp * cos_t, 0.25 - amp * sin_t)
    return PhotonCoefficients(n, tuple(math.sqrt(max(v, 0.0)) for v in sq))


_R = math.sqrt(0.5)
_EIGHTH_TURN = [
    (1.0, 0.0), (_R, _R), (0.0, 1.0), (-_R, _R),
    (-1.0, 0.0), (-_R, -_R), (0.0, -1.0), (_R, -_R),
]


def coefficient_table(n_max: int = N_MAX) -> np.ndarray:
    """Array of shape (n_max + 1, 4); row n holds |c_j(n)|, row 0 is zero."""
    table = np.zeros((n_max + 1, 4))
    for n in range(1, n_max + 1):
        table[n] = coefficients(n).c
    return table


def gram_overlap(n: int, k: int) -> complex:
    """Overlap <n_0|n_k> rebuilt from the coefficients (consistency check only)."""
    _check_photon_number(n)
    sq = coefficients(n).squared
    phases = np.exp(2j * np.pi * k * np.arange(4) / 4)
    return complex(np.dot(sq, phases))


def poisson_weight(mu: float, n: int) -> float:
    """e^-mu mu^n / n!, evaluated in the log domain."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    if n < 0:
        raise ValueError("n must be non-negative")
    return math.exp(n * math.log(mu) - mu - math.lgamma(n + 1))


def poisson_weights(mu: float, n_max: int = N_MAX) -> np.ndarray:
    """Vector of poisson_weight(mu, n) for n = 0..n_max."""
    return np.array([poisson_weight(mu, n) for n in range(n_max + 1)])


def poisson_tail(mu: float, s: int) -> float:
    """Probability that a pulse carries more than s photons.

    Summed term by term from n = s + 1 upward rather than as a complement, so
    tails far below machine epsilon keep their relative accuracy.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if s < 0:
        raise ValueError("s must be non-negative")
    terms = []
    n = s + 1
    while True:
        t = poisson_weight(mu, n)
        terms.append(t)
        if n > mu and t < 1e-300 + 1e-18 * terms[0]:
            break
        n += 1
    return math.fsum(terms)


def series_weights(mu: float, n_max: int = N_MAX) -> np.ndarray:
    """mu^n / n! without the e^-mu prefactor, for n = 0..n_max."""
    n = np.arange(n_max + 1)
    return np.exp(n * math.log(mu) - np.array([math.lgamma(k + 1) for k in n]))
