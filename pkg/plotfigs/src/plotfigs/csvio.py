"""CSV loading for the simulator's result tables, with header validation."""
from __future__ import annotations

import csv
from pathlib import Path

RESULTS_COLUMNS = [
    "experiment",
    "method",
    "m",
    "rho",
    "trials",
    "failures",
    "rmse",
    "crlb",
    "mean_solve_time_s",
]
ERRORS_COLUMNS = ["experiment", "method", "m", "rho", "trial", "error"]
DYNAMICS_COLUMNS = ["t", "phase_real", "phase_approx", "abs_discrepancy", "filtered"]


class CsvFormatError(ValueError):
    """Input CSV is missing required columns or cannot be parsed."""


def _load(path, required: list[str]) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise CsvFormatError(f"input CSV not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise CsvFormatError(f"{path}: missing columns {missing} (header {header})")
        return list(reader)


def _maybe_float(raw: str) -> float | None:
    return float(raw) if raw not in ("", None) else None


def load_results(path) -> list[dict]:
    rows = []
    for raw in _load(path, RESULTS_COLUMNS):
        rows.append(
            {
                "experiment": raw["experiment"],
                "method": raw["method"],
                "m": int(raw["m"]),
                "rho": float(raw["rho"]),
                "trials": int(raw["trials"]),
                "failures": int(raw["failures"]),
                "rmse": _maybe_float(raw["rmse"]),
                "crlb": _maybe_float(raw["crlb"]),
            }
        )
    return rows


def load_errors(path) -> list[dict]:
    rows = []
    for raw in _load(path, ERRORS_COLUMNS):
        rows.append(
            {
                "experiment": raw["experiment"],
                "method": raw["method"],
                "m": int(raw["m"]),
                "rho": float(raw["rho"]),
                "trial": int(raw["trial"]),
                "error": float(raw["error"]),
            }
        )
    return rows


def load_dynamics(path) -> list[dict]:
    rows = []
    for raw in _load(path, DYNAMICS_COLUMNS):
        rows.append(
            {
                "t": float(raw["t"]),
                "phase_real": float(raw["phase_real"]),
                "phase_approx": float(raw["phase_approx"]),
                "abs_discrepancy": float(raw["abs_discrepancy"]),
                "filtered": raw["filtered"] == "1",
            }
        )
    return rows
