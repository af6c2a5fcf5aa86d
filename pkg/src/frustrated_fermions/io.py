"""Writers for ensemble results and theory tables (JSON and CSV)."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from . import theory
from .errors import DivergenceError, ParameterError
from .harness import EnsembleResult
from .observables import momenta, rescaled_momentum

OBSERVABLE_COLUMNS = (
    "L", "gamma", "theta_over_pi", "J", "dt", "n_traj",
    "S_half", "S_half_err", "C2_half", "C2_half_err", "C4_half", "C4_half_err", "G_AB", "G_AB_err",
)
CQ_COLUMNS = ("q", "q_tilde", "q_tilde_ell0", "Cq", "Cq_err")


def _writer(path: Path):
    fh = open(path, "w", encoding="utf-8", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def _fmt(x) -> str:
    return repr(float(x))


def observables_row(result: EnsembleResult) -> list:
    cfg = result.run_config
    p = cfg.params
    row = [p.L, p.gamma, cfg.theta_over_pi, p.J, p.dt, result.n_traj]
    for name in ("S_half", "C2_half", "C4_half", "G_AB"):
        row += [_fmt(result.means.get(name, math.nan)), _fmt(result.errors.get(name, math.nan))]
    return row


def write_observables_csv(results, path) -> None:
    fh, w = _writer(Path(path))
    with fh:
        w.writerow(OBSERVABLE_COLUMNS)
        for r in results:
            w.writerow(observables_row(r))


def _ell0(J, gamma, theta) -> float:
    try:
        return theory.mean_free_path(J, gamma, theta)
    except DivergenceError:
        return math.nan


def write_cq_csv(result: EnsembleResult, path) -> None:
    if "Cq" not in result.means:
        raise ParameterError("result does not contain Cq")
    cfg = result.run_config
    p = cfg.params
    q = momenta(p.L)
    qt = rescaled_momentum(q)
    ell0 = _ell0(p.J, p.gamma, p.theta)
    fh, w = _writer(Path(path))
    with fh:
        w.writerow(CQ_COLUMNS)
        for row in zip(q, qt, qt * ell0, result.means["Cq"], result.errors["Cq"]):
            w.writerow([_fmt(x) for x in row])


def write_theory_tables(J: float, gamma: float, theta: float, L: int, path) -> list[Path]:
    """``theory_scalars.csv`` (name, value, formula) and ``theory_cq.csv`` on the lattice momenta."""
    path = Path(path)
    scal = path / "theory_scalars.csv"
    fh, w = _writer(scal)
    with fh:
        w.writerow(("name", "value", "formula"))
        for pred in theory.prediction_table(J, gamma, theta, L):
            w.writerow((pred.name, _fmt(pred.value), pred.formula))
    cq = path / "theory_cq.csv"
    q = momenta(L)[1 : L // 2 + 1]
    qt = rescaled_momentum(q)
    ell0 = _ell0(J, gamma, theta)
    raw = theory.Cq_theory(J, gamma, theta, qt)
    smooth = theory.Cq_theory(J, gamma, theta, qt, smooth=True)
    fh, w = _writer(cq)
    with fh:
        w.writerow(("q", "q_tilde", "q_tilde_ell0", "Cq_theory", "Cq_theory_smooth"))
        for row in zip(q, qt, qt * ell0, raw, smooth):
            w.writerow([_fmt(x) for x in row])
    return [scal, cq]


def emit_outputs(result: EnsembleResult, path, theory_tables: bool = False) -> list[Path]:
    """Write ``ensemble.json``, ``observables.csv``, ``cq.csv`` (and theory tables) into directory ``path``."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ParameterError(f"cannot create output directory {path}: {exc}") from exc
    written = [path / "ensemble.json", path / "observables.csv"]
    result.to_json(written[0])
    write_observables_csv([result], written[1])
    if "Cq" in result.means:
        written.append(path / "cq.csv")
        write_cq_csv(result, written[-1])
    if theory_tables:
        p = result.run_config.params
        written += write_theory_tables(p.J, p.gamma, p.theta, p.L, path)
    return written


def read_csv_columns(path, columns) -> dict:
    """Numeric columns of a CSV file with a header row."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = [c for c in columns if rows and c not in rows[0]]
    if missing or not rows:
        raise ParameterError(f"{path}: missing columns {missing}" if rows else f"{path}: no data rows")
    return {c: np.array([float(r[c]) for r in rows]) for c in columns}
