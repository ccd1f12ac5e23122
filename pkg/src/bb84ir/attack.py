"""Eve's filter + square-root measurement, the loss-matching constraint,
and the closed-form error rates of the low-loss regimes."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .symstates import N_MAX, coefficient_table, coefficients, poisson_tail, series_weights

BOX_SLACK = 1e-12


class Regime(str, enum.Enum):
    NO_LOSS = "NoLoss"
    DISCARD_SINGLES = "DiscardSingles"
    DISCARD_DOUBLES = "DiscardDoubles"
    HIGH_LOSS = "HighLoss"


class RegimeError(ValueError):
    pass


@dataclass(frozen=True)
class FilterGains:
    """Post-filter amplitudes gamma_j(n) = alpha_j(n) |c_j(n)|."""

    n: int
    gamma: tuple[float, float, float, float]

    def __post_init__(self):
        c = coefficients(self.n).c
        for g, cj in zip(self.gamma, c):
            if g < 0 or g > cj + BOX_SLACK:
                raise ValueError(f"gain {g} outside [0, {cj}] for n={self.n}")

    @classmethod
    def identity(cls, n: int) -> "FilterGains":
        return cls(n, coefficients(n).c)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.gamma, dtype=float)


@dataclass(frozen=True)
class ChannelScenario:
    mu: float
    eta_t: float
    eta_det: float = 1.0
    loss_db: float = field(init=False)

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if not 0.0 < self.eta_t <= 1.0:
            raise ValueError(f"eta_t must lie in (0, 1], got {self.eta_t}")
        if not 0.0 < self.eta_det <= 1.0:
            raise ValueError(f"eta_det must lie in (0, 1], got {self.eta_det}")
        object.__setattr__(self, "loss_db", eta_to_db(self.eta_t))

    @classmethod
    def from_db(cls, mu: float, loss_db: float, eta_det: float = 1.0) -> "ChannelScenario":
        return cls(mu, db_to_eta(loss_db), eta_det)

    @property
    def regime(self) -> Regime:
        return regime_classify(self.mu, self.eta_t)


def eta_to_db(eta_t: float) -> float:
    return -10.0 * math.log10(eta_t)


def db_to_eta(loss_db: float) -> float:
    return 10.0 ** (-loss_db / 10.0)


# -- single photon-number quantities ---------------------------------------

def pair_products(gamma: np.ndarray) -> np.ndarray:
    """(g0 + g2)(g1 + g3) along the last axis."""
    gamma = np.asarray(gamma, dtype=float)
    return (gamma[..., 0] + gamma[..., 2]) * (gamma[..., 1] + gamma[..., 3])


def energies(gamma: np.ndarray) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    return np.sum(gamma * gamma, axis=-1)


def _as_gamma(g) -> np.ndarray:
    return g.array if isinstance(g, FilterGains) else np.asarray(g, dtype=float)


def filter_success_prob(g) -> float:
    return float(energies(_as_gamma(g)))


def srm_probabilities(g) -> np.ndarray:
    """4x4 matrix Pr[k, ktilde] of Eve guessing ktilde for a filtered |n_k>."""
    gamma = _as_gamma(g)
    succ = float(energies(gamma))
    if succ <= 0:
        raise ValueError("all-zero gains: the filter never succeeds")
    # |sum_j gamma_j exp(2 pi i d j / 4)|^2 equals the double cosine sum
    d = np.arange(4)
    amp = np.exp(2j * np.pi * np.outer(d, np.arange(4)) / 4) @ gamma
    by_shift = np.abs(amp) ** 2 / (4 * succ)
    k = np.arange(4)
    return by_shift[(k[None, :] - k[:, None]) % 4]


def partial_error(g) -> float:
    """Sifted error e(n) caused by Eve's SRM on a filtered n-photon pulse."""
    gamma = _as_gamma(g)
    succ = float(energies(gamma))
    if succ <= 0:
        raise ValueError("all-zero gains: the filter never succeeds")
    return 0.5 - float(pair_products(gamma)) / (2 * succ)


# -- gain schedules over all photon numbers --------------------------------

def identity_schedule(n_max: int = N_MAX) -> np.ndarray:
    """Gain table of shape (n_max + 1, 4) with the unfiltered gains c_j(n)."""
    return coefficient_table(n_max)


def click_budget(mu: float, eta_t: float) -> float:
    """1 - e^{-mu eta_t}: the probability that Bob should receive a non-vacuum pulse."""
    return -math.expm1(-mu * eta_t)


def loss_constraint_residual(mu: float, eta_t: float, gains: np.ndarray) -> float:
    """Forwarded-pulse probability under the filter minus the channel's click budget.

    ``gains`` has shape (n_max + 1, 4); photon numbers past n_max are taken
    as unfiltered.
    """
    gains = np.asarray(gains, dtype=float)
    n_max = gains.shape[0] - 1
    w = series_weights(mu, n_max)
    passed = math.fsum(w[1:] * energies(gains[1:]))
    return math.exp(-mu) * passed + poisson_tail(mu, n_max) - click_budget(mu, eta_t)


def error_rate_from_gains(mu: float, eta_t: float, gains: np.ndarray) -> float:
    """Sifted error rate of an arbitrary gain schedule that mimics the loss."""
    gains = np.asarray(gains, dtype=float)
    w = series_weights(mu, gains.shape[0] - 1)
    # Pr_succ(n) e(n) = (sum gamma^2 - (g0+g2)(g1+g3)) / 2, defined even for zero gains
    weighted = w[1:] * (energies(gains[1:]) - pair_products(gains[1:])) / 2
    return math.exp(-mu) * math.fsum(weighted) / click_budget(mu, eta_t)


# -- regimes and closed forms -----------------------------------------------

def regime_boundaries(mu: float) -> tuple[float, float]:
    """eta_t values where all singles, then all doubles, have been discarded."""
    return 1 - math.log1p(mu) / mu, 1 - math.log1p(mu + mu * mu / 2) / mu


def regime_classify(mu: float, eta_t: float) -> Regime:
    if mu <= 0:
        raise ValueError("mu must be positive")
    if not 0.0 < eta_t <= 1.0:
        raise ValueError(f"eta_t must lie in (0, 1], got {eta_t}")
    singles_gone, doubles_gone = regime_boundaries(mu)
    if eta_t == 1.0:
        return Regime.NO_LOSS
    # ties fall to the higher-loss side; both closed forms agree there
    if eta_t > singles_gone:
        return Regime.DISCARD_SINGLES
    if eta_t > doubles_gone:
        return Regime.DISCARD_DOUBLES
    return Regime.HIGH_LOSS


def pr_fail_single(mu: float, eta_t: float) -> float:
    """Fraction of single-photon pulses Eve must discard."""
    singles_gone, _ = regime_boundaries(mu)
    if eta_t > 1.0 or eta_t < singles_gone - 1e-15:
        raise RegimeError(f"eta_t={eta_t} is outside the single-discard interval")
    return min(max(math.expm1(mu * (1 - eta_t)) / mu, 0.0), 1.0)


def _unfiltered_sum(mu: float, start: int, n_max: int = N_MAX) -> float:
    w = series_weights(mu, n_max)
    s = pair_products(coefficient_table(n_max))
    return math.fsum(w[start:] * s[start:])


def error_rate_case1(mu: float, eta_t: float, n_max: int = N_MAX) -> float:
    regime = regime_classify(mu, eta_t)
    if regime is Regime.HIGH_LOSS:
        raise RegimeError("high-loss points need the optimizer (solve_high_loss)")
    scale = math.exp(-mu) / click_budget(mu, eta_t)
    if regime is Regime.NO_LOSS:
        kept = _unfiltered_sum(mu, 1, n_max)
    elif regime is Regime.DISCARD_SINGLES:
        # 1 + mu - e^{mu(1 - eta_t)}, written to avoid cancellation
        kept = 0.5 * (mu - math.expm1(mu * (1 - eta_t))) + _unfiltered_sum(mu, 2, n_max)
    else:
        head = mu + mu * mu / 2 - math.expm1(mu * (1 - eta_t))
        kept = head / math.sqrt(2) + _unfiltered_sum(mu, 3, n_max)
    return 0.5 * (1 - scale * kept)


def case1_schedule(mu: float, eta_t: float, n_max: int = N_MAX) -> np.ndarray:
    """Explicit gain table realising error_rate_case1."""
    regime = regime_classify(mu, eta_t)
    gains = identity_schedule(n_max)
    if regime is Regime.DISCARD_SINGLES:
        gains[1] *= math.sqrt(1 - pr_fail_single(mu, eta_t))
    elif regime is Regime.DISCARD_DOUBLES:
        gains[1] = 0.0
        succ2 = (mu + mu * mu / 2 - math.expm1(mu * (1 - eta_t))) / (mu * mu / 2)
        gains[2] *= math.sqrt(min(max(succ2, 0.0), 1.0))
    elif regime is Regime.HIGH_LOSS:
        raise RegimeError("high-loss points need the optimizer (solve_high_loss)")
    return gains
