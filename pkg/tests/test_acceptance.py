"""Acceptance gate: each test checks one criterion and records a verdict line."""
import csv
import io
import math
import time
from pathlib import Path

import numpy as np
import pytest

from bb84ir.attack import (
    FilterGains,
    Regime,
    db_to_eta,
    error_rate_case1,
    partial_error,
    regime_boundaries,
)
from bb84ir.cli import curve_rows
from bb84ir.detector import DetectorModel
from bb84ir.jointdist import joint_distribution, sifted_error_from_joint, symmetry_check
from bb84ir.mcsim import SimConfig, compare, simulate
from bb84ir.optimizer import (
    TruncatedProblem,
    gap_bound,
    p_usd,
    solve,
    solve_high_loss,
    solve_truncated,
    usd_threshold,
)
from bb84ir.oracle import projected_gradient_oracle
from bb84ir.symstates import coefficients, poisson_weight

MUS = (0.1, 0.2, 0.3, 0.4)
ETA_DETS = (0.1, 0.2, 0.5, 1.0)
REFERENCE = Path(__file__).resolve().parent.parent / "reference"


def high_loss_grid(points=10):
    """Interior of the high-loss interval (eta^5, boundary) for every mu."""
    grid = []
    for mu in MUS:
        lo, _ = usd_threshold(mu, 5)
        _, hi = regime_boundaries(mu)
        grid += [(mu, float(eta)) for eta in np.linspace(lo, hi, points + 2)[1:-1]]
    return grid


def test_criterion_1_single_and_double_photon_minima(criterion):
    start = time.perf_counter()
    e1 = partial_error(FilterGains.identity(1))
    e2 = partial_error(FilterGains.identity(2))
    exact = abs(e1 - 0.25) <= 1e-12 and abs(e2 - (2 - math.sqrt(2)) / 4) <= 1e-12
    rng = np.random.default_rng(2024)
    beaten = 0
    for n, floor in ((1, 0.25), (2, (2 - math.sqrt(2)) / 4)):
        c = np.array(coefficients(n).c)
        for _ in range(1000):
            g = rng.uniform(0, 1, 4) * c
            if g @ g > 0 and partial_error(FilterGains(n, tuple(g))) < floor - 1e-12:
                beaten += 1
    elapsed = time.perf_counter() - start
    ok = exact and beaten == 0 and elapsed < 1
    criterion(1, "one- and two-photon error minima", ok,
              f"e(1)={e1!r} e(2)={e2!r} beaten={beaten} t={elapsed:.2f}s")
    assert ok


def test_criterion_2_usd_closed_form(criterion):
    start = time.perf_counter()
    worst = 0.0
    for mu in MUS:
        series = math.fsum(poisson_weight(mu, n) * 4 * coefficients(n).c_min ** 2 for n in range(3, 61))
        worst = max(worst, abs(p_usd(mu) - series))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 1
    criterion(2, "USD success probability closed form", ok, f"max|diff|={worst:.2e} t={elapsed:.2f}s")
    assert ok


def test_criterion_3_regime_continuity(criterion):
    start = time.perf_counter()
    worst = 0.0
    for mu in MUS:
        singles, doubles = regime_boundaries(mu)
        left = error_rate_case1(mu, singles * (1 + 1e-13))
        right = error_rate_case1(mu, singles * (1 - 1e-13))
        worst = max(worst, abs(left - right))
        worst = max(worst, abs(error_rate_case1(mu, doubles * (1 + 1e-13)) - solve_high_loss(mu, doubles).error_rate))
        worst = max(worst, abs(error_rate_case1(mu, 1.0) - error_rate_case1(mu, 1 - 1e-13)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 60
    criterion(3, "continuity across regime boundaries", ok, f"max jump={worst:.2e} t={elapsed:.2f}s")
    assert ok


def _read_curve(text):
    body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
    return list(csv.DictReader(io.StringIO(body)))


def test_criterion_4_curves(criterion):
    start = time.perf_counter()
    etas = [db_to_eta(0.5 * i) for i in range(71)]
    rows = curve_rows(list(MUS), etas, 5)  # asserts monotonicity itself
    problems = []
    by_mu = {}
    for r in rows:
        by_mu.setdefault(r[0], []).append(r)
    for mu, pts in by_mu.items():
        pts.sort(key=lambda r: r[2])
        if any(b[4] > a[4] for a, b in zip(pts, pts[1:])):
            problems.append(f"mu={mu} not monotone")
        eta_inf, _ = usd_threshold(mu, None)
        zero = [r for r in pts if r[4] == 0.0]
        if not zero or zero[0][1] != eta_inf or zero[0][3] != "USD-clamped":
            problems.append(f"mu={mu} first zero not at the USD point")
        if any(r[4] <= 0 for r in pts if r[1] > eta_inf):
            problems.append(f"mu={mu} zero before the USD point")
    grid = {}
    for r in rows:
        grid.setdefault(r[2], {})[r[0]] = (r[4], r[3])
    for loss, vals in grid.items():
        if len(vals) == len(MUS) and any(reg == Regime.HIGH_LOSS.value for _, reg in vals.values()):
            errs = [vals[mu][0] for mu in MUS]
            if any(b > a + 1e-12 for a, b in zip(errs, errs[1:])):
                problems.append(f"ordering broken at {loss} dB")
    ref = _read_curve((REFERENCE / "curves_s5.csv").read_text())
    fresh = [dict(zip(("mu", "eta_t", "loss_db", "regime", "error_rate"), map(str, r[:5]))) for r in rows]
    fresh.sort(key=lambda r: (float(r["mu"]), -float(r["eta_t"])))
    ref.sort(key=lambda r: (float(r["mu"]), -float(r["eta_t"])))
    drift = max(abs(float(a["error_rate"]) - float(b["error_rate"])) for a, b in zip(ref, fresh))
    if len(ref) != len(fresh) or drift > 1e-9 or any(a["regime"] != b["regime"] for a, b in zip(ref, fresh)):
        problems.append(f"reference mismatch (drift {drift:.1e})")
    elapsed = time.perf_counter() - start
    ok = not problems and elapsed < 300
    criterion(4, "error-rate curves versus loss", ok,
              "; ".join(problems) or f"{len(rows)} points, reference drift={drift:.1e} t={elapsed:.2f}s")
    assert ok


def test_criterion_5_optimizer_certification(criterion):
    start = time.perf_counter()
    worst_rel, worst_res = 0.0, 0.0
    for mu, eta in high_loss_grid():
        problem = TruncatedProblem.build(mu, eta, 5)
        x = problem.objective(solve_truncated(problem))
        x_oracle, _ = projected_gradient_oracle(problem, restarts=64, seed=1)
        worst_rel = max(worst_rel, abs(x - x_oracle) / abs(x_oracle))
        worst_res = max(worst_res, abs(solve_high_loss(mu, eta, 5).constraint_residual))
    elapsed = time.perf_counter() - start
    ok = worst_rel <= 1e-6 and worst_res <= 1e-9 and elapsed < 600
    criterion(5, "optimizer against projected-gradient oracle", ok,
              f"max rel={worst_rel:.1e} max residual={worst_res:.1e} t={elapsed:.2f}s")
    assert ok


def test_criterion_6_gap_bound(criterion):
    start = time.perf_counter()
    violations, tightest = 0, 0.0
    for mu, eta in high_loss_grid():
        gap = solve_high_loss(mu, eta, 5).error_rate - solve_high_loss(mu, eta, 8).error_rate
        bound = gap_bound(mu, eta, 5)
        violations += gap > bound
        tightest = max(tightest, gap / bound)
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 900
    criterion(6, "truncation gap within bound", ok,
              f"violations={violations} max gap/bound={tightest:.3f} t={elapsed:.2f}s")
    assert ok


def _scenario_points():
    pts = []
    for mu in MUS:
        singles, doubles = regime_boundaries(mu)
        eta_s, _ = usd_threshold(mu, 5)
        pts += [(mu, 1.0), (mu, 0.5 * (1 + singles)), (mu, 0.5 * (singles + doubles)),
                (mu, math.sqrt(doubles * eta_s))]
    return pts


def _identity_gaps(mu, eta_t, eta_det):
    sol = solve(mu, eta_t, 5, eta_det=eta_det)
    joint = joint_distribution(sol, DetectorModel(eta_det))
    t = joint.table
    return (abs(t.sum() - 1), float(np.max(np.abs(t.sum(axis=1) - 0.25))),
            symmetry_check(joint).max_deviation, abs(sifted_error_from_joint(joint) - sol.error_rate))


def test_criterion_7_joint_identities(criterion):
    start = time.perf_counter()
    worst = np.zeros(4)
    for mu, eta in _scenario_points():
        for eta_det in ETA_DETS:
            worst = np.maximum(worst, _identity_gaps(mu, eta, eta_det))
    elapsed = time.perf_counter() - start
    ok = worst[0] <= 1e-12 and worst[1] <= 1e-13 and worst[2] <= 1e-12 and worst[3] <= 1e-12 and elapsed < 60
    criterion(7, "joint-distribution identities", ok,
              "mass={:.1e} row={:.1e} symmetry={:.1e} sifted={:.1e}".format(*worst) + f" t={elapsed:.2f}s")
    assert ok


MC_POINTS = {
    Regime.NO_LOSS: (0.1, 1.0),
    Regime.DISCARD_SINGLES: (0.3, 0.5),
    Regime.DISCARD_DOUBLES: (0.3, 0.03),
    Regime.HIGH_LOSS: (0.4, 0.015),
}


def test_criterion_8_monte_carlo(criterion):
    start = time.perf_counter()
    notes, ok = [], True
    for regime, (mu, eta) in MC_POINTS.items():
        sol = solve(mu, eta, 5, eta_det=0.2)
        assert sol.regime is regime
        config = SimConfig(sol, 1_000_000, seed=20240601)
        report = simulate(config)
        result = compare(report, joint_distribution(sol))
        again = simulate(config)
        identical = np.array_equal(report.counts, again.counts)
        ok &= result.passed and not result.insufficient_trials and identical
        notes.append(f"{regime.value}: max|z|={np.max(np.abs(result.z_scores)):.2f} "
                     f"z_e={result.sifted_error_z:.2f}{'' if identical else ' NOT REPRODUCIBLE'}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    criterion(8, "Monte Carlo agreement at 1e6 trials", ok, "; ".join(notes) + f" t={elapsed:.2f}s")
    assert ok


def test_criterion_9_reference_table(criterion):
    start = time.perf_counter()
    gaps = _identity_gaps(0.1, db_to_eta(29.7), 0.2)
    sol = solve(0.1, db_to_eta(29.7), 5, eta_det=0.2)
    table = joint_distribution(sol).table
    complete = table.shape == (4, 8) and bool(np.all(np.isfinite(table))) and bool(np.all(table >= 0))
    ok = complete and gaps[0] <= 1e-12 and gaps[1] <= 1e-13 and gaps[2] <= 1e-12 and gaps[3] <= 1e-12
    elapsed = time.perf_counter() - start
    criterion(9, "regenerated 29.7 dB joint table", ok,
              f"e={sol.error_rate:.6g} regime={sol.regime.value} s={sol.s} t={elapsed:.2f}s")
    assert ok
