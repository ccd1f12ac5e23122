"""Command-line front end: curves, joint tables, USD limits, MC validation.

    bb84ir curve --mu 0.1,0.2,0.3,0.4 --loss-db 0:35:0.5 --out curves.csv
    bb84ir joint --mu 0.1 --loss-db 29.7 --eta-det 0.2 --format json
    bb84ir usd --mu 0.1,0.2
    bb84ir validate --trials 1000000 --seed 1

Exit codes: 0 success, 1 validation failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .attack import ChannelScenario, db_to_eta, eta_to_db
from .detector import OUTCOMES, DetectorModel
from .jointdist import SCHEMA_VERSION, joint_distribution, sifted_error_from_joint, symmetry_check
from .mcsim import SimConfig, compare, simulate
from .optimizer import DEFAULT_S, MAX_S, AttackSolution, gap_bound, p_usd, solve, usd_threshold

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
MONOTONE_SLACK = 1e-12

DEFAULTS = {
    "mu": "0.1",
    "loss_db": None,
    "eta_t": None,
    "eta_det": 0.2,
    "s": DEFAULT_S,
    "trials": 1_000_000,
    "seed": 0,
    "format": "csv",
    "out": None,
    "workers": 1,
}
DEFAULT_LOSS = {"curve": "0:35:0.5", "joint": "29.7", "validate": "29.7", "usd": None}


class UsageError(ValueError):
    pass


def _floats(text) -> list[float]:
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, list):
        return [float(v) for v in text]
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"not a number list: {text!r}") from exc
    if not vals:
        raise UsageError("empty value list")
    return vals


def loss_grid(text) -> list[float]:
    """'start:stop:step' (inclusive) or a comma list of dB values."""
    if isinstance(text, str) and ":" in text:
        try:
            start, stop, step = (float(v) for v in text.split(":"))
        except ValueError as exc:
            raise UsageError(f"bad range {text!r}; expected start:stop:step") from exc
        if step <= 0 or stop < start:
            raise UsageError("loss range needs step > 0 and stop >= start")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    return _floats(text)


def _settings(args: argparse.Namespace) -> dict:
    conf = {}
    if args.config:
        try:
            conf = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        conf = {k.replace("-", "_"): v for k, v in conf.items()}
    merged = dict(DEFAULTS)
    merged["loss_db"] = DEFAULT_LOSS.get(args.command)
    merged.update({k: v for k, v in conf.items() if k in DEFAULTS})
    merged.update({k: v for k, v in vars(args).items() if k in DEFAULTS and v is not None})
    if conf.get("eta_t") is not None or args.eta_t is not None:
        if args.loss_db is None:
            merged["loss_db"] = None
    merged["s"] = int(merged["s"])
    if not 3 <= merged["s"] <= MAX_S:
        raise UsageError(f"--s must lie in 3..{MAX_S}")
    if merged["format"] not in ("csv", "json"):
        raise UsageError("--format must be csv or json")
    return merged


def _transmittances(st: dict) -> list[float]:
    if st["loss_db"] is not None:
        etas = [db_to_eta(v) for v in loss_grid(st["loss_db"])]
    elif st["eta_t"] is not None:
        etas = _floats(st["eta_t"])
    else:
        raise UsageError("give --loss-db or --eta-t")
    for eta in etas:
        if not 0 < eta <= 1:
            raise UsageError(f"transmittance {eta} outside (0, 1]")
    return etas


def _header(command: str, st: dict) -> dict:
    keys = ["mu", "loss_db", "eta_t", "eta_det", "s"]
    if command == "validate":
        keys += ["trials", "seed"]
    if command == "usd":
        keys = ["mu", "s"]
    return {"tool": "bb84ir", "version": __version__, "command": command,
            **{k: st[k] for k in keys if st.get(k) is not None}}


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, newline="")
    else:
        sys.stdout.write(text)


def _csv(header: dict, columns: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    for key, value in header.items():
        buf.write(f"# {key}={value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _json(header: dict, payload: dict) -> str:
    return json.dumps({"schema_version": SCHEMA_VERSION, "meta": header, **payload}, indent=2) + "\n"


# -- curve --------------------------------------------------------------------

CURVE_COLUMNS = ["mu", "eta_t", "loss_db", "regime", "error_rate", "gap_bound", "solver_status", "s"]


def _regime_label(sol: AttackSolution) -> str:
    return "USD-clamped" if sol.usd_clamped else sol.regime.value


def curve_row(mu: float, eta_t: float, s: int) -> list:
    sol = solve(mu, eta_t, s)
    gap = gap_bound(mu, eta_t, sol.s) if sol.s is not None and not sol.usd_clamped else 0.0
    loss_db = round(eta_to_db(eta_t), 12) + 0.0  # grid values print cleanly, never -0.0
    return [mu, eta_t, loss_db, _regime_label(sol), sol.error_rate, gap,
            sol.solver_status.value, "" if sol.s is None else sol.s]


def curve_rows(mus: list[float], etas: list[float], s: int, workers: int = 1, usd_marker: bool = True) -> list[list]:
    points = []
    for mu in mus:
        grid = set(etas)
        if usd_marker:
            grid.add(usd_threshold(mu, None)[0])
        points += [(mu, eta) for eta in sorted(grid, reverse=True)]
    with ThreadPoolExecutor(max(workers, 1)) as pool:
        rows = list(pool.map(lambda p: curve_row(p[0], p[1], s), points))
    check_monotone(rows)
    return rows


def check_monotone(rows: list[list]) -> None:
    """Error rates must not increase with loss for any mu."""
    by_mu: dict[float, list] = {}
    for row in rows:
        by_mu.setdefault(row[0], []).append((row[2], row[4]))
    for mu, pts in by_mu.items():
        pts.sort()
        for (l0, e0), (l1, e1) in zip(pts, pts[1:]):
            if e1 > e0 + MONOTONE_SLACK:
                raise AssertionError(f"mu={mu}: error rises from {e0} at {l0} dB to {e1} at {l1} dB")


def cmd_curve(st: dict, args) -> int:
    mus = _floats(st["mu"])
    etas = _transmittances(st)
    rows = curve_rows(mus, etas, st["s"], st["workers"], usd_marker=not args.no_usd_marker)
    header = _header("curve", st)
    if st["format"] == "csv":
        text = _csv(header, CURVE_COLUMNS, rows)
    else:
        text = _json(header, {"columns": CURVE_COLUMNS, "rows": [dict(zip(CURVE_COLUMNS, r)) for r in rows]})
    _emit(text, st["out"])
    return EXIT_OK


# -- joint --------------------------------------------------------------------

def _single_scenario(st: dict) -> tuple[float, float]:
    mus = _floats(st["mu"])
    etas = _transmittances(st)
    if len(mus) != 1 or len(etas) != 1:
        raise UsageError("this command takes a single --mu and a single loss value")
    return mus[0], etas[0]


def joint_payload(mu: float, eta_t: float, eta_det: float, s: int) -> dict:
    sol = solve(mu, eta_t, s, eta_det=eta_det)
    joint = joint_distribution(sol, DetectorModel(eta_det))
    sym = symmetry_check(joint)
    return {
        "regime": _regime_label(sol),
        "s_effective": sol.s,
        "analytic_error_rate": sol.error_rate,
        "sifted_error_rate": sifted_error_from_joint(joint),
        "symmetry": {"correct": sym.correct_spread, "orthogonal": sym.orthogonal_spread,
                     "mismatched": sym.mismatched_spread, "max_deviation": sym.max_deviation},
        "columns": list(OUTCOMES),
        "rows": joint.to_rows(),
        "table": joint.table,
    }


def cmd_joint(st: dict, args) -> int:
    mu, eta_t = _single_scenario(st)
    payload = joint_payload(mu, eta_t, st["eta_det"], st["s"])
    table = payload.pop("table")
    header = _header("joint", {**st, "eta_t": eta_t})
    if st["format"] == "csv":
        extra = {k: payload[k] for k in ("regime", "s_effective", "analytic_error_rate", "sifted_error_rate")}
        extra["symmetry_max_deviation"] = payload["symmetry"]["max_deviation"]
        rows = [[k, *map(float, row)] for k, row in enumerate(table)]
        text = _csv({**header, **extra}, ["k", *OUTCOMES], rows)
    else:
        text = _json(header, payload)
    _emit(text, st["out"])
    return EXIT_OK


# -- usd ----------------------------------------------------------------------

USD_COLUMNS = ["mu", "p_usd", "eta_t_usd", "loss_db_usd", "s", "p_s", "eta_t_s", "loss_db_s"]


def usd_rows(mus: list[float], s: int) -> list[list]:
    rows = []
    for mu in mus:
        eta_inf, p_d = usd_threshold(mu, None)
        eta_s, p_s = usd_threshold(mu, s)
        rows.append([mu, p_usd(mu), eta_inf, eta_to_db(eta_inf), s, p_s, eta_s, eta_to_db(eta_s)])
    return rows


def cmd_usd(st: dict, args) -> int:
    rows = usd_rows(_floats(st["mu"]), st["s"])
    header = _header("usd", st)
    if st["format"] == "csv":
        text = _csv(header, USD_COLUMNS, rows)
    else:
        text = _json(header, {"columns": USD_COLUMNS, "rows": [dict(zip(USD_COLUMNS, r)) for r in rows]})
    _emit(text, st["out"])
    return EXIT_OK


# -- validate -----------------------------------------------------------------

def validate(mu: float, eta_t: float, eta_det: float, s: int, trials: int, seed: int,
             corrupt: bool = False, workers: int = 1) -> dict:
    sol = solve(mu, eta_t, s, eta_det=eta_det)
    joint = joint_distribution(sol, DetectorModel(eta_det))
    table = joint.table.copy()
    if corrupt:
        # shift the most populated cell by ten standard errors
        k, col = np.unravel_index(int(np.argmax(table)), table.shape)
        p = table[k, col]
        table[k, col] = p + 10 * math.sqrt(max(p * (1 - p), 1e-30) / trials)
    report = simulate(SimConfig(sol, trials, seed, workers))
    result = compare(report, table)
    return {
        **result.summary(),
        "regime": _regime_label(sol),
        "analytic_error_rate": sol.error_rate,
        "empirical_error_rate": report.sifted_error,
        "corrupted_analytic": corrupt,
        "counts": report.counts.tolist(),
        "z_scores": [[float(z) if math.isfinite(z) else str(z) for z in row] for row in result.z_scores],
    }


def cmd_validate(st: dict, args) -> int:
    mu, eta_t = _single_scenario(st)
    trials = int(st["trials"])
    if trials < 1:
        raise UsageError("--trials must be >= 1")
    verdict = validate(mu, eta_t, st["eta_det"], st["s"], trials, int(st["seed"]), args.corrupt, st["workers"])
    header = _header("validate", {**st, "eta_t": eta_t})
    if st["format"] == "csv":
        extra = {k: verdict[k] for k in ("verdict", "insufficient_trials", "max_abs_cell_z",
                                          "sifted_error_z", "analytic_error_rate", "empirical_error_rate")}
        rows = [[k, *row] for k, row in enumerate(verdict["counts"])]
        text = _csv({**header, **extra}, ["k", *OUTCOMES], rows)
    else:
        text = _json(header, verdict)
    _emit(text, st["out"])
    return EXIT_OK if verdict["verdict"] == "pass" else EXIT_FAIL


# -- entry point ----------------------------------------------------------------

COMMANDS = {"curve": cmd_curve, "joint": cmd_joint, "usd": cmd_usd, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bb84ir", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bb84ir {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--mu", help="mean photon number(s), comma separated")
        p.add_argument("--loss-db", help="channel loss in dB: value, list, or start:stop:step")
        p.add_argument("--eta-t", help="channel transmittance(s) instead of --loss-db")
        p.add_argument("--eta-det", type=float, help="detector efficiency (default 0.2)")
        p.add_argument("--s", type=int, help=f"filter cutoff for high loss (default {DEFAULT_S})")
        p.add_argument("--trials", type=int, help="Monte Carlo trials (validate)")
        p.add_argument("--seed", type=int, help="Monte Carlo seed (validate)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--config", help="JSON file of defaults; flags win")
        p.add_argument("--workers", type=int, help="worker threads")
        if name == "curve":
            p.add_argument("--no-usd-marker", action="store_true",
                           help="omit the e = 0 point at the untruncated USD limit")
        if name == "validate":
            p.add_argument("--corrupt", action="store_true",
                           help="perturb the analytic table (harness self-test; must fail)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        st = _settings(args)
        return COMMANDS[args.command](st, args)
    except ValueError as exc:  # includes UsageError and invalid model inputs
        print(f"bb84ir: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
