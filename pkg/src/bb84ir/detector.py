"""Bob's threshold detectors acting on Eve's resent pulses.

Eve resends a zero-truncated Poissonian of mean ``mu * eta_t`` in the
identified polarization.  Pushed through an ``eta_det`` loss and a pair of
on/off detectors, every conditional outcome probability collapses onto
four numbers ``a, b, c, d``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Outcome column order used for every 4x8 / 5x8 table in this package.
OUTCOMES = ("vac+", "0+", "1+", "D+", "vacx", "0x", "1x", "Dx")
VACUUM_RESEND = 4


@dataclass(frozen=True)
class DetectorModel:
    eta_det: float

    def __post_init__(self):
        if not 0.0 < self.eta_det <= 1.0:
            raise ValueError(f"eta_det must lie in (0, 1], got {self.eta_det}")


@dataclass(frozen=True)
class ClickParameters:
    """a: no click; b: matched-basis single click; c: one detector in the
    mismatched basis; d: double click in the mismatched basis.  Each already
    carries Bob's 1/2 basis-choice factor."""

    a: float
    b: float
    c: float
    d: float


def click_parameters(mu: float, eta_t: float, eta_det: float) -> ClickParameters:
    if mu <= 0:
        raise ValueError("mu must be positive")
    if not 0.0 < eta_t <= 1.0:
        raise ValueError(f"eta_t must lie in (0, 1], got {eta_t}")
    DetectorModel(eta_det)
    x = mu * eta_t
    y = x * eta_det
    # expm1 keeps the differences accurate when mu*eta_t is tiny (high loss)
    norm = 2.0 * -math.expm1(-x)
    if norm == 0.0:
        raise ValueError("mu * eta_t underflows; no resend pulse can be defined")
    a = math.exp(-y) * -math.expm1(-(x - y)) / norm
    b = -math.expm1(-y) / norm
    c = math.exp(-y) * math.expm1(y / 2) / norm
    d = math.expm1(-y / 2) ** 2 / norm
    return ClickParameters(a, b, c, d)


def conditional_table(params: ClickParameters) -> np.ndarray:
    """Pr(F_i^beta | rho_ktilde) as a 5x8 array; row 4 is the vacuum resend."""
    a, b, c, d = params.a, params.b, params.c, params.d
    return np.array([
        [a, b, 0, 0, a, c, c, d],
        [a, c, c, d, a, b, 0, 0],
        [a, 0, b, 0, a, c, c, d],
        [a, c, c, d, a, 0, b, 0],
        [0.5, 0, 0, 0, 0.5, 0, 0, 0],
    ], dtype=float)


def basis_of(k: int) -> int:
    """0 for the + basis (k = 0, 2), 1 for the x basis (k = 1, 3)."""
    return k % 2


def bit_of(k: int) -> int:
    return k // 2
