import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bb84ir.attack import ChannelScenario, db_to_eta, regime_boundaries
from bb84ir.detector import OUTCOMES, VACUUM_RESEND, DetectorModel, basis_of, bit_of
from bb84ir.jointdist import (
    SCHEMA_VERSION,
    from_csv,
    from_json,
    joint_distribution,
    resend_conditional,
    sifted_error_from_joint,
    symmetry_check,
    to_csv,
    to_json,
)
from bb84ir.optimizer import solve, usd_threshold

ETA_DETS = (0.1, 0.2, 0.5, 1.0)


def _scenarios():
    out = []
    for mu in (0.1, 0.4):
        singles, doubles = regime_boundaries(mu)
        eta_s, _ = usd_threshold(mu, 5)
        out += [(mu, 1.0), (mu, 0.5 * (1 + singles)), (mu, 0.5 * (singles + doubles)),
                (mu, 0.5 * (doubles + eta_s))]
    return out


SCENARIOS = _scenarios()


def _photon_level_row(state, x, eta_det, m_max=60):
    """Outcome distribution for a nonvacuum resend, by explicit photon counting."""
    pm = np.array([math.exp(-x) * x**m / math.factorial(m) for m in range(m_max + 1)])
    pm[0] = 0.0
    pm /= pm.sum()
    row = np.zeros(8)
    for beta in (0, 1):
        off = 4 * beta
        for m in range(1, m_max + 1):
            for j in range(m + 1):
                pj = math.comb(m, j) * eta_det**j * (1 - eta_det) ** (m - j)
                w = 0.5 * pm[m] * pj
                if j == 0:
                    row[off] += w
                elif beta == basis_of(state):
                    row[off + 1 + bit_of(state)] += w
                else:
                    split = 2.0 ** (1 - j)  # all j photons on one detector
                    row[off + 1] += w * split / 2
                    row[off + 2] += w * split / 2
                    row[off + 3] += w * (1 - split)
    return row


@pytest.mark.parametrize("mu,eta_t", SCENARIOS)
@pytest.mark.parametrize("eta_det", ETA_DETS)
def test_identities(mu, eta_t, eta_det):
    sol = solve(mu, eta_t, eta_det=eta_det)
    joint = joint_distribution(sol)
    t = joint.table
    assert t.shape == (4, 8)
    assert np.all(t >= 0)
    assert t.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(t.sum(axis=1), 0.25, atol=1e-12)
    assert symmetry_check(joint).max_deviation <= 1e-12
    assert sifted_error_from_joint(joint) == pytest.approx(sol.error_rate, abs=1e-12)


@pytest.mark.parametrize("mu,eta_t", SCENARIOS)
def test_photon_level_oracle(mu, eta_t):
    sol = solve(mu, eta_t, eta_det=0.3)
    cond = resend_conditional(sol).matrix
    x = mu * eta_t
    rows = [_photon_level_row(s, x, 0.3) for s in range(4)]
    rows.append(np.array([0.5, 0, 0, 0, 0.5, 0, 0, 0]))
    oracle = 0.25 * cond @ np.array(rows)
    np.testing.assert_allclose(joint_distribution(sol).table, oracle, atol=1e-14)


@pytest.mark.parametrize("mu,eta_t", SCENARIOS)
def test_vacuum_resend_matches_channel(mu, eta_t):
    cond = resend_conditional(solve(mu, eta_t)).matrix
    np.testing.assert_allclose(cond[:, VACUUM_RESEND], math.exp(-mu * eta_t), rtol=1e-10)
    np.testing.assert_allclose(cond.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("mu,eta_t", SCENARIOS)
def test_resend_is_circulant(mu, eta_t):
    m = resend_conditional(solve(mu, eta_t)).matrix[:, :4]
    for k in range(4):
        np.testing.assert_allclose(np.roll(m[0], k), m[k], atol=1e-16)


def test_reference_scenario():
    sol = solve(0.1, db_to_eta(29.7), 5, eta_det=0.2)
    t = joint_distribution(sol).table
    assert sol.error_rate == pytest.approx(0.009531102359919719, rel=1e-9)
    assert t[0, 0] == pytest.approx(0.124997321, rel=1e-8)
    assert t[0, 1] == pytest.approx(2.6532e-6, rel=1e-4)
    assert t[0, 2] == pytest.approx(2.5531e-8, rel=1e-4)


def test_perturbed_cell_breaks_symmetry():
    t = joint_distribution(solve(0.2, 0.02)).table.copy()
    t[1, 5] *= 1 + 1e-6
    assert symmetry_check(t).max_deviation > 1e-12


def test_error_extremes():
    correct = np.zeros((4, 8))
    orthogonal = np.zeros((4, 8))
    for k in range(4):
        off = 4 * basis_of(k)
        correct[k, off + 1 + bit_of(k)] = 0.25
        orthogonal[k, off + 2 - bit_of(k)] = 0.25
    assert sifted_error_from_joint(correct) == 0.0
    assert sifted_error_from_joint(orthogonal) == 1.0
    with pytest.raises(ValueError):
        sifted_error_from_joint(np.zeros((4, 8)))


@settings(max_examples=30, deadline=None)
@given(mu=st.floats(0.05, 0.5), frac=st.floats(0.05, 0.95), eta_det=st.floats(0.05, 1.0))
def test_sifted_error_independent_of_detector(mu, frac, eta_det):
    eta_s, _ = usd_threshold(mu, 5)
    eta_t = eta_s + frac * (1 - eta_s)
    sol = solve(mu, eta_t)
    e = sifted_error_from_joint(joint_distribution(sol, DetectorModel(eta_det)))
    assert e == pytest.approx(sol.error_rate, abs=1e-11)


def test_csv_round_trip():
    joint = joint_distribution(solve(0.1, 0.01))
    text = to_csv(joint)
    assert text.splitlines()[0] == ",".join(["k", *OUTCOMES])
    np.testing.assert_array_equal(from_csv(text), joint.table)


def test_json_round_trip_and_schema():
    joint = joint_distribution(solve(0.1, 0.01))
    text = to_json(joint)
    assert f'"schema_version": "{SCHEMA_VERSION}"' in text
    np.testing.assert_array_equal(from_json(text), joint.table)


def test_scenario_carries_detector():
    sol = solve(0.1, 0.01)
    joint = joint_distribution(sol, DetectorModel(0.7))
    assert joint.scenario == ChannelScenario(0.1, 0.01, 0.7)
