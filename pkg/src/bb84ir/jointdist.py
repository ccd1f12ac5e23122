"""Joint distribution P(A_k, F_i^beta) of Alice's preparations and Bob's outcomes."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .attack import ChannelScenario, energies
from .detector import OUTCOMES, VACUUM_RESEND, DetectorModel, basis_of, bit_of, click_parameters, conditional_table
from .optimizer import AttackSolution
from .symstates import series_weights

SCHEMA_VERSION = "1.0"


@dataclass(frozen=True)
class ResendConditional:
    """4x5 matrix Pr(rho_ktilde | rho_k); column 4 is the vacuum resend."""

    matrix: np.ndarray


@dataclass
class JointDistribution:
    table: np.ndarray  # 4x8, columns in OUTCOMES order
    scenario: ChannelScenario | None = None
    s: int | None = None

    def to_rows(self) -> list[dict]:
        return [
            {"k": k, **{name: float(v) for name, v in zip(OUTCOMES, row)}}
            for k, row in enumerate(self.table)
        ]


def shift_probabilities(gains: np.ndarray) -> np.ndarray:
    """Unnormalised Pr_succ(n) * Pr_{k,k+d}(n) for d = 0..3, shape (n_max + 1, 4)."""
    j = np.arange(4)
    dft = np.exp(2j * np.pi * np.outer(j, j) / 4)
    return np.abs(gains @ dft.T) ** 2 / 4


def resend_conditional(solution: AttackSolution) -> ResendConditional:
    mu = solution.scenario.mu
    gains = solution.gains
    w = series_weights(mu, gains.shape[0] - 1)[1:]
    per_shift = shift_probabilities(gains[1:])
    by_shift = np.array([math.exp(-mu) * math.fsum(w * per_shift[:, d]) for d in range(4)])
    vacuum = math.exp(-mu) * (1 + math.fsum(w * (1 - energies(gains[1:]))))
    k = np.arange(4)
    matrix = np.empty((4, 5))
    matrix[:, :4] = by_shift[(k[None, :] - k[:, None]) % 4]
    matrix[:, VACUUM_RESEND] = vacuum
    return ResendConditional(matrix)


def joint_distribution(solution: AttackSolution, detector: DetectorModel | None = None) -> JointDistribution:
    scenario = solution.scenario
    eta_det = scenario.eta_det if detector is None else detector.eta_det
    params = click_parameters(scenario.mu, scenario.eta_t, eta_det)
    cond = resend_conditional(solution).matrix
    table = 0.25 * cond @ conditional_table(params)
    scenario = ChannelScenario(scenario.mu, scenario.eta_t, eta_det)
    return JointDistribution(table, scenario, solution.s)


def _sifted_counts(table: np.ndarray) -> tuple[float, float]:
    """(error weight, click probability) over basis-matched events."""
    errors, clicks = [], []
    for k in range(4):
        off = 4 * basis_of(k)
        right, wrong = off + 1 + bit_of(k), off + 2 - bit_of(k)
        double = off + 3
        errors += [table[k, wrong], 0.5 * table[k, double]]
        clicks += [table[k, right], table[k, wrong], table[k, double]]
    return math.fsum(errors), math.fsum(clicks)


def sifted_error_from_joint(joint: JointDistribution | np.ndarray) -> float:
    table = joint.table if isinstance(joint, JointDistribution) else np.asarray(joint)
    errors, clicks = _sifted_counts(table)
    if clicks <= 0:
        raise ValueError("no basis-matched clicks")
    return errors / clicks


@dataclass
class SymmetryReport:
    correct_spread: float
    orthogonal_spread: float
    mismatched_spread: float

    @property
    def max_deviation(self) -> float:
        return max(self.correct_spread, self.orthogonal_spread, self.mismatched_spread)


def symmetry_check(joint: JointDistribution | np.ndarray) -> SymmetryReport:
    """Spreads of the quantities that must not depend on Alice's state."""
    table = joint.table if isinstance(joint, JointDistribution) else np.asarray(joint)
    correct, orthogonal, mismatched = [], [], []
    for k in range(4):
        off = 4 * basis_of(k)
        correct.append(table[k, off + 1 + bit_of(k)])
        orthogonal.append(table[k, off + 2 - bit_of(k)])
        other = 4 * (1 - basis_of(k))
        mismatched += [table[k, other + 1], table[k, other + 2]]
    spread = lambda v: float(np.max(v) - np.min(v))  # noqa: E731
    return SymmetryReport(spread(correct), spread(orthogonal), spread(mismatched))


def to_csv(joint: JointDistribution) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["k", *OUTCOMES])
    for k, row in enumerate(joint.table):
        writer.writerow([k, *(repr(float(v)) for v in row)])
    return buf.getvalue()


def from_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    body = [r for r in rows if r and not r[0].startswith("#")][1:]
    return np.array([[float(v) for v in r[1:]] for r in body])


def to_json(joint: JointDistribution) -> str:
    return json.dumps(
        {"schema_version": SCHEMA_VERSION, "columns": list(OUTCOMES), "rows": joint.to_rows()},
        indent=2,
    )


def from_json(text: str) -> np.ndarray:
    doc = json.loads(text)
    cols = doc["columns"]
    return np.array([[row[c] for c in cols] for row in doc["rows"]])
