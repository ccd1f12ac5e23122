"""Monte Carlo replay of the attack, trial by trial.

Each trial draws Alice's polarisation and photon number, runs Eve's
filter and SRM guess, resends a zero-truncated Poissonian pulse and
pushes its photons one by one through Bob's lossy threshold detectors.
Only primitive conditionals are used, never the analytic P(A, B), so
the counts are an independent check on the closed forms.

Trials are split into fixed-size blocks with their own Philox stream, so
the result for a seed does not depend on the worker count or on which
tally backend runs.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _mckernel_py
from .attack import energies
from .detector import OUTCOMES, basis_of, bit_of
from .jointdist import JointDistribution, _sifted_counts, shift_probabilities
from .optimizer import AttackSolution
from .symstates import poisson_weights

try:
    from . import _mckernel
except ImportError:  # extension not built
    _mckernel = None

log = logging.getLogger(__name__)

BLOCK = 1 << 16
RESEND_MAX = 40
Z_LIMIT = 5.0
MIN_TRIALS = 1000
MIN_SIFTED_CLICKS = 30

BACKENDS = ("cython", "python")


def default_backend() -> str:
    return "cython" if _mckernel is not None else "python"


def _kernel(backend: str | None):
    backend = backend or default_backend()
    if backend == "cython":
        if _mckernel is None:
            raise RuntimeError("compiled kernel is not built; use backend='python'")
        return _mckernel.tally
    if backend == "python":
        return _mckernel_py.tally
    raise ValueError(f"unknown backend {backend!r}")


@dataclass
class SimConfig:
    solution: AttackSolution
    trials: int
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    @property
    def scenario(self):
        return self.solution.scenario


@dataclass
class SimReport:
    counts: np.ndarray  # 4x8 int64
    trials: int
    seed: int
    sifted_error: float | None
    z_scores: np.ndarray | None = None
    sifted_error_z: float | None = None
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "schema_version": "1.0",
            "trials": self.trials,
            "seed": self.seed,
            "columns": list(OUTCOMES),
            "counts": self.counts.tolist(),
            "sifted_error": self.sifted_error,
            "meta": self.meta,
        }
        if self.z_scores is not None:
            doc["z_scores"] = [[_finite(z) for z in row] for row in self.z_scores]
            doc["sifted_error_z"] = _finite(self.sifted_error_z)
        return json.dumps(doc, indent=2)

    def counts_csv(self) -> str:
        lines = [",".join(["k", *OUTCOMES])]
        lines += [",".join([str(k), *map(str, row)]) for k, row in enumerate(self.counts)]
        return "\n".join(lines) + "\n"


def _finite(z):
    return None if z is None else (float(z) if math.isfinite(z) else str(z))


def _cdf(p: np.ndarray) -> np.ndarray:
    c = np.minimum(np.cumsum(p, axis=-1), 1.0)
    c[..., -1] = 1.0
    return c


def sampling_tables(solution: AttackSolution) -> dict[str, np.ndarray]:
    """Inversion tables built from the primitive conditionals alone."""
    sc = solution.scenario
    gains = solution.gains
    photon_cdf = _cdf(poisson_weights(sc.mu, gains.shape[0] - 1))
    success = np.minimum(energies(gains), 1.0)
    shift = shift_probabilities(gains)
    with np.errstate(invalid="ignore", divide="ignore"):
        shift = np.where(success[:, None] > 0, shift / success[:, None], 0.25)
    x = sc.mu * sc.eta_t
    m = np.arange(RESEND_MAX + 1)
    resend = stats.poisson.pmf(m, x)
    resend[0] = 0.0
    resend /= resend.sum()
    detect = np.array([stats.binom.pmf(m, j, sc.eta_det) for j in m])
    split = np.array([stats.binom.pmf(m, j, 0.5) for j in m])
    return {
        "photon_cdf": photon_cdf,
        "success": success,
        "shift_cdf": _cdf(shift),
        "resend_cdf": _cdf(resend),
        "detect_cdf": _cdf(detect),
        "split_cdf": _cdf(split),
    }


def _block_sizes(trials: int) -> list[int]:
    sizes = [BLOCK] * (trials // BLOCK)
    if trials % BLOCK:
        sizes.append(trials % BLOCK)
    return sizes


def simulate(config: SimConfig, backend: str | None = None) -> SimReport:
    kernel = _kernel(backend)
    tables = sampling_tables(config.solution)
    sizes = _block_sizes(config.trials)
    streams = np.random.SeedSequence(config.seed).spawn(len(sizes))

    def run(i: int) -> np.ndarray:
        rng = np.random.Generator(np.random.Philox(streams[i]))
        u = rng.random((8, sizes[i]))
        return kernel(
            u, tables["photon_cdf"], tables["success"], tables["shift_cdf"],
            tables["resend_cdf"], tables["detect_cdf"], tables["split_cdf"],
        )

    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    counts = np.sum(parts, axis=0).astype(np.int64)
    errors, clicks = _sifted_counts(counts.astype(float))
    sc = config.scenario
    meta = {"mu": sc.mu, "eta_t": sc.eta_t, "loss_db": sc.loss_db, "eta_det": sc.eta_det,
            "s": config.solution.s, "regime": config.solution.regime.value}
    log.debug("simulated %d trials (seed %d)", config.trials, config.seed)
    return SimReport(counts, config.trials, config.seed, errors / clicks if clicks else None, meta=meta)


@dataclass
class Comparison:
    z_scores: np.ndarray
    sifted_error_z: float
    worst_cell: tuple[int, int]
    insufficient_trials: bool
    passed: bool

    def summary(self) -> dict:
        return {
            "verdict": "pass" if self.passed else "fail",
            "insufficient_trials": self.insufficient_trials,
            "max_abs_cell_z": _finite(float(np.max(np.abs(self.z_scores)))),
            "worst_cell": {"k": self.worst_cell[0], "outcome": OUTCOMES[self.worst_cell[1]]},
            "sifted_error_z": _finite(self.sifted_error_z),
            "z_limit": Z_LIMIT,
        }


def cell_z_scores(counts: np.ndarray, table: np.ndarray, trials: int) -> np.ndarray:
    expected = trials * table
    var = expected * (1 - table)
    diff = counts - expected
    with np.errstate(divide="ignore", invalid="ignore"):
        z = diff / np.sqrt(var)
    return np.where(var > 0, z, np.where(counts == 0, 0.0, np.inf))


def sifted_error_z(counts: np.ndarray, table: np.ndarray) -> float:
    """z-score of the empirical sifted error, using the analytic per-click spread."""
    matched = np.zeros_like(table)
    wrong = np.zeros_like(table)
    double = np.zeros_like(table)
    for k in range(4):
        off = 4 * basis_of(k)
        matched[k, off + 1 : off + 4] = 1
        wrong[k, off + 2 - bit_of(k)] = 1
        double[k, off + 3] = 1
    p_click = float(np.sum(table * matched))
    n_click = float(np.sum(counts * matched))
    if n_click == 0 or p_click == 0:
        return 0.0
    p_wrong = float(np.sum(table * wrong)) / p_click
    p_double = float(np.sum(table * double)) / p_click
    e = p_wrong + p_double / 2
    var = p_wrong + p_double / 4 - e * e
    e_hat = (float(np.sum(counts * wrong)) + float(np.sum(counts * double)) / 2) / n_click
    if var <= 0:
        return 0.0 if e_hat == e else math.inf
    return (e_hat - e) / math.sqrt(var / n_click)


def compare(report: SimReport, analytic: JointDistribution | np.ndarray) -> Comparison:
    table = analytic.table if isinstance(analytic, JointDistribution) else np.asarray(analytic)
    z = cell_z_scores(report.counts, table, report.trials)
    ze = sifted_error_z(report.counts, table)
    _, p_click = _sifted_counts(table)
    insufficient = report.trials < MIN_TRIALS or report.trials * p_click < MIN_SIFTED_CLICKS
    worst = np.unravel_index(int(np.argmax(np.abs(z))), z.shape)
    passed = bool(np.all(np.abs(z) <= Z_LIMIT) and abs(ze) <= Z_LIMIT)
    report.z_scores, report.sifted_error_z = z, ze
    return Comparison(z, ze, (int(worst[0]), int(worst[1])), insufficient, passed)
