"""High-loss attack: truncated filter optimisation, USD limits, gap bound.

For photon numbers 3..s Eve picks gains gamma(n) inside the boxes
[0, c_j(n)] to maximise sum_n w_n (g0+g2)(g1+g3) while the forwarded-pulse
probability matches the channel.  With a multiplier ``lam`` on the budget
the problem splits per photon number into

    max (g0+g2)(g1+g3) - lam * |g|^2   over the box.

For fixed pair sums A = g0+g2 and B = g1+g3 the cheapest split is a
water-filling of each pair, so the inner problem is a piecewise quadratic
in (A, B) that is maximised exactly by enumerating pieces and their edges.
The outer multiplier is found by bisection; budget usage is nonincreasing
in ``lam`` and equals the USD budget at ``lam = 1``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .attack import (
    ChannelScenario,
    Regime,
    RegimeError,
    case1_schedule,
    click_budget,
    energies,
    error_rate_case1,
    error_rate_from_gains,
    loss_constraint_residual,
    pair_products,
    regime_boundaries,
    regime_classify,
    FilterGains,
)
from .symstates import N_MAX, coefficient_table, coefficients, poisson_tail, series_weights

DEFAULT_S = 5
MAX_S = 12
LAMBDA_TOL = 1e-12
BUDGET_TOL = 1e-9


class SolverStatus(str, enum.Enum):
    CONVERGED = "Converged"
    BUDGET_CLAMPED = "BudgetClamped"
    INFEASIBLE = "Infeasible"
    CLOSED_FORM = "ClosedForm"


class InfeasibleError(ValueError):
    pass


@dataclass
class AttackSolution:
    scenario: ChannelScenario
    regime: Regime
    s: int | None
    gains: np.ndarray  # (n_max + 1, 4); row n is gamma(n)
    objective: float | None
    error_rate: float
    constraint_residual: float
    solver_status: SolverStatus
    usd_clamped: bool = False

    @property
    def n_max(self) -> int:
        return self.gains.shape[0] - 1

    def filter_gains(self, n: int) -> FilterGains:
        return FilterGains(n, tuple(self.gains[n]))


# -- USD limits ---------------------------------------------------------------

def usd_gains(n: int) -> FilterGains:
    """Uniform gains |c_min(n)|: the filtered states become orthogonal."""
    if n < 3:
        raise ValueError("unambiguous discrimination of BB84 states needs n >= 3")
    c_min = coefficients(n).c_min
    assert c_min > 0
    return FilterGains(n, (c_min,) * 4)


def _usd_success(n_lo: int, n_hi: int) -> np.ndarray:
    """4 c_min(n)^2 for n in n_lo..n_hi."""
    return np.array([4 * coefficients(n).c_min ** 2 for n in range(n_lo, n_hi + 1)])


def p_usd(mu: float) -> float:
    """Probability that Eve's USD attack identifies a pulse (all n >= 3)."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    r = mu / math.sqrt(2)
    return 1 - math.exp(-mu) * (math.sqrt(2) * math.sinh(r) + 2 * math.cosh(r) - 1)


def p_usd_series(mu: float, n_max: int = N_MAX) -> float:
    w = series_weights(mu, n_max)
    return math.exp(-mu) * math.fsum(w[3:] * _usd_success(3, n_max))


def usd_threshold(mu: float, s: int | None = DEFAULT_S) -> tuple[float, float]:
    """(eta_t^s, P_s): transmittance at which the s-truncated filter is pure USD.

    ``s=None`` gives the untruncated limit with P_s = P_D.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if s is None:
        p = p_usd(mu)
    else:
        if s < 3:
            raise ValueError("s must be >= 3")
        w = series_weights(mu, s)
        p = math.exp(-mu) * math.fsum(w[3:] * _usd_success(3, s)) + poisson_tail(mu, s)
    return -math.log1p(-p) / mu, p


def gap_bound(mu: float, eta_t: float, s: int) -> float:
    """Upper bound on e^s - e from sending the n > s pulses unfiltered."""
    return poisson_tail(mu, s) / click_budget(mu, eta_t)


# -- inner problem --------------------------------------------------------------

def _pair_pieces(p: float, q: float):
    """Pieces (lo, hi, a2, a1, a0) of min g_p^2 + g_q^2 given g_p + g_q = A."""
    m, big = min(p, q), max(p, q)
    pieces = []
    if m > 0:
        pieces.append((0.0, 2 * m, 0.5, 0.0, 0.0))
    pieces.append((2 * m, m + big, 1.0, -2 * m, 2 * m * m))
    return pieces


def _split_pair(total: float, p: float, q: float) -> tuple[float, float]:
    m = min(p, q)
    if total <= 2 * m:
        return total / 2, total / 2
    rest = min(total - m, max(p, q))
    return (m, rest) if p <= q else (rest, m)


def _max_concave_1d(a2: float, a1: float, lo: float, hi: float) -> list[float]:
    """Candidate maximisers of -a2 x^2 + a1 x on [lo, hi]."""
    out = [lo, hi]
    if a2 > 0:
        out.append(min(max(a1 / (2 * a2), lo), hi))
    return out


def inner_solve(c: np.ndarray, lam: float) -> np.ndarray:
    """Box-constrained maximiser of (g0+g2)(g1+g3) - lam |g|^2 for one n."""
    c0, c1, c2, c3 = (float(v) for v in c)
    best_val, best = -math.inf, (0.0, 0.0)
    for alo, ahi, ea2, ea1, ea0 in _pair_pieces(c0, c2):
        for blo, bhi, ob2, ob1, ob0 in _pair_pieces(c1, c3):

            def value(a, b):
                return a * b - lam * (ea2 * a * a + ea1 * a + ea0 + ob2 * b * b + ob1 * b + ob0)

            cands = []
            for a in (alo, ahi):
                for b in _max_concave_1d(lam * ob2, a - lam * ob1, blo, bhi):
                    cands.append((a, b))
            for b in (blo, bhi):
                for a in _max_concave_1d(lam * ea2, b - lam * ea1, alo, ahi):
                    cands.append((a, b))
            # interior stationary point of the quadratic piece
            det = 4 * lam * lam * ea2 * ob2 - 1
            if det != 0:
                a = (-2 * lam * lam * ob2 * ea1 - lam * ob1) / det
                b = (-2 * lam * lam * ea2 * ob1 - lam * ea1) / det
                if alo <= a <= ahi and blo <= b <= bhi:
                    cands.append((a, b))
            for a, b in cands:
                v = value(a, b)
                if v > best_val + 1e-16:
                    best_val, best = v, (a, b)
    a, b = best
    g0, g2 = _split_pair(a, c0, c2)
    g1, g3 = _split_pair(b, c1, c3)
    return np.minimum(np.array([g0, g1, g2, g3]), c)


# -- truncated problem --------------------------------------------------------

@dataclass(frozen=True)
class TruncatedProblem:
    mu: float
    eta_t: float
    s: int
    budget: float
    weights: np.ndarray  # mu^n / n! for n = 3..s
    boxes: np.ndarray  # c_j(n) for n = 3..s, shape (s - 2, 4)

    @classmethod
    def build(cls, mu: float, eta_t: float, s: int = DEFAULT_S) -> "TruncatedProblem":
        if s < 3 or s > MAX_S:
            raise ValueError(f"s must lie in 3..{MAX_S}")
        budget = math.exp(mu) * (click_budget(mu, eta_t) - poisson_tail(mu, s))
        w = series_weights(mu, s)[3:]
        boxes = coefficient_table(s)[3:]
        return cls(mu, eta_t, s, budget, w, boxes)

    @property
    def full_budget(self) -> float:
        return float(np.sum(self.weights * energies(self.boxes)))

    @property
    def usd_budget(self) -> float:
        return float(np.sum(self.weights * 4 * np.min(self.boxes, axis=1) ** 2))

    def usage(self, gammas: np.ndarray) -> float:
        return math.fsum(self.weights * energies(gammas))

    def objective(self, gammas: np.ndarray) -> float:
        """Value of the minimisation target: -sum w_n (g0+g2)(g1+g3)."""
        return -math.fsum(self.weights * pair_products(gammas))

    def inner(self, lam: float) -> np.ndarray:
        if lam >= 1.0:
            return np.repeat(np.min(self.boxes, axis=1, keepdims=True), 4, axis=1)
        return np.array([inner_solve(c, lam) for c in self.boxes])


def _blend(problem: TruncatedProblem, g_hi: np.ndarray, g_lo: np.ndarray) -> np.ndarray:
    """Point on the segment g_hi -> g_lo whose usage hits the budget exactly."""
    d = g_lo - g_hi
    qa = problem.usage(d)
    qb = 2 * math.fsum(problem.weights * np.sum(g_hi * d, axis=1))
    qc = problem.usage(g_hi) - problem.budget
    if qa <= 0:
        return g_hi
    disc = max(qb * qb - 4 * qa * qc, 0.0)
    theta = (-qb + math.sqrt(disc)) / (2 * qa)
    return g_hi + min(max(theta, 0.0), 1.0) * d


def solve_truncated(problem: TruncatedProblem, lambda_tol: float = LAMBDA_TOL) -> np.ndarray:
    """Optimal gains for photon numbers 3..s, assuming usd_budget <= budget <= full_budget."""
    lo, hi = 0.0, 1.0  # usage(lo) >= budget >= usage(hi)
    g_lo, g_hi = problem.inner(lo), problem.inner(hi)
    while hi - lo > lambda_tol:
        mid = 0.5 * (lo + hi)
        g_mid = problem.inner(mid)
        if problem.usage(g_mid) >= problem.budget:
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    return _blend(problem, g_hi, g_lo)


def _full_table(gammas: np.ndarray, s: int, n_max: int, head: np.ndarray | None = None) -> np.ndarray:
    table = coefficient_table(n_max)
    table[1:3] = 0.0 if head is None else head
    table[3 : s + 1] = gammas
    return table


def _error_from_truncated(problem: TruncatedProblem, x: float, n_max: int) -> float:
    w = series_weights(problem.mu, n_max)
    tail = math.fsum(w[problem.s + 1 :] * pair_products(coefficient_table(n_max)[problem.s + 1 :]))
    scale = math.exp(-problem.mu) / click_budget(problem.mu, problem.eta_t)
    return 0.5 * (1 - scale * (-x + tail))


def solve_high_loss(
    mu: float,
    eta_t: float,
    s: int = DEFAULT_S,
    tolerance: float = BUDGET_TOL,
    eta_det: float = 1.0,
    n_max: int = N_MAX,
) -> AttackSolution:
    """Upper bound e^s on the high-loss error rate with filtering for n in 3..s."""
    scenario = ChannelScenario(mu, eta_t, eta_det)
    regime = regime_classify(mu, eta_t)
    if regime is not Regime.HIGH_LOSS:
        raise RegimeError(f"eta_t={eta_t} is not in the high-loss regime for mu={mu}")
    problem = TruncatedProblem.build(mu, eta_t, s)
    if problem.budget > problem.full_budget * (1 + 1e-12):
        raise InfeasibleError("budget exceeds unfiltered usage; not a high-loss point")

    if problem.budget >= problem.usd_budget:
        gammas = solve_truncated(problem)
        status = SolverStatus.CONVERGED
        table = _full_table(gammas, s, n_max)
    else:
        # Beyond the s-truncated USD limit: shrink the orthogonalising gains, and
        # once those are exhausted shrink the unfiltered tail as well.
        usd = problem.inner(1.0)
        status = SolverStatus.BUDGET_CLAMPED
        if problem.budget >= 0:
            gammas = usd * math.sqrt(problem.budget / problem.usd_budget)
            table = _full_table(gammas, s, n_max)
        else:
            gammas = np.zeros_like(usd)
            table = _full_table(gammas, s, n_max)
            tail_mass = poisson_tail(mu, s)
            table[s + 1 :] *= math.sqrt(click_budget(mu, eta_t) / tail_mass)

    x = problem.objective(gammas)
    residual = loss_constraint_residual(mu, eta_t, table)
    if status is SolverStatus.BUDGET_CLAMPED and problem.budget < 0:
        error = error_rate_from_gains(mu, eta_t, table)
    else:
        error = _error_from_truncated(problem, x, n_max)
    if status is SolverStatus.CONVERGED and abs(residual) > tolerance:
        status = SolverStatus.INFEASIBLE
    return AttackSolution(scenario, regime, s, table, x, error, residual, status)


def usd_solution(mu: float, eta_t: float, eta_det: float = 1.0, n_max: int = N_MAX) -> AttackSolution:
    """Untruncated USD attack for eta_t at or below the USD limit: zero errors."""
    limit, p_d = usd_threshold(mu, None)
    if eta_t > limit * (1 + 1e-12):
        raise RegimeError("eta_t is above the USD limit")
    table = np.zeros((n_max + 1, 4))
    for n in range(3, n_max + 1):
        table[n] = usd_gains(n).gamma
    table *= math.sqrt(min(click_budget(mu, eta_t) / p_d, 1.0))
    scenario = ChannelScenario(mu, eta_t, eta_det)
    residual = loss_constraint_residual(mu, eta_t, table)
    return AttackSolution(
        scenario, regime_classify(mu, eta_t), None, table, None, 0.0, residual,
        SolverStatus.BUDGET_CLAMPED, usd_clamped=True,
    )


def solve(
    mu: float,
    eta_t: float,
    s: int = DEFAULT_S,
    eta_det: float = 1.0,
    n_max: int = N_MAX,
    escalate: bool = True,
) -> AttackSolution:
    """Best attack of this family for any channel.

    Low-loss points use the closed forms.  High-loss points use the
    s-truncated optimum; when eta_t falls below the s-truncated USD limit
    the cutoff is raised (up to MAX_S) so the bound keeps improving, and at
    or below the untruncated USD limit the error rate is exactly zero.
    """
    regime = regime_classify(mu, eta_t)
    scenario = ChannelScenario(mu, eta_t, eta_det)
    if regime is not Regime.HIGH_LOSS:
        table = case1_schedule(mu, eta_t, n_max)
        return AttackSolution(
            scenario, regime, None, table, None, error_rate_case1(mu, eta_t, n_max),
            loss_constraint_residual(mu, eta_t, table), SolverStatus.CLOSED_FORM,
        )
    if eta_t <= usd_threshold(mu, None)[0]:
        return usd_solution(mu, eta_t, eta_det, n_max)
    sol = solve_high_loss(mu, eta_t, s, eta_det=eta_det, n_max=n_max)
    while escalate and sol.solver_status is SolverStatus.BUDGET_CLAMPED and sol.s < MAX_S:
        sol = solve_high_loss(mu, eta_t, sol.s + 1, eta_det=eta_det, n_max=n_max)
    return sol
