"""Accuracy metrics and the Cramér-Rao style RMSE lower bound."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .localize import LinearSystem, SingularGeometryError


class UndefinedInformationError(ValueError):
    """The information matrix is undefined at zero noise."""


@dataclass(frozen=True)
class TrialRecord:
    """One localization trial. error is always ||estimate - truth|| and is
    re-checked at construction; failed trials carry NaN estimate and error."""

    trial: int
    truth: np.ndarray
    estimate: np.ndarray
    error: float
    solve_time: float
    method: str
    rho: float
    m_rangings: int
    failed: bool = False

    def __post_init__(self):
        truth = np.asarray(self.truth, dtype=float)
        est = np.asarray(self.estimate, dtype=float)
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "estimate", est)
        if not self.failed:
            err = float(np.linalg.norm(est - truth))
            if not np.isclose(err, self.error, rtol=1e-9, atol=1e-12):
                raise ValueError(f"stored error {self.error} != recomputed {err}")

    @classmethod
    def make(
        cls,
        trial: int,
        truth,
        estimate,
        solve_time: float,
        method: str,
        rho: float,
        m_rangings: int,
    ) -> "TrialRecord":
        truth = np.asarray(truth, dtype=float)
        estimate = np.asarray(estimate, dtype=float)
        return cls(
            trial=trial,
            truth=truth,
            estimate=estimate,
            error=float(np.linalg.norm(estimate - truth)),
            solve_time=solve_time,
            method=method,
            rho=rho,
            m_rangings=m_rangings,
        )

    @classmethod
    def failure(
        cls, trial: int, truth, solve_time: float, method: str, rho: float, m_rangings: int
    ) -> "TrialRecord":
        truth = np.asarray(truth, dtype=float)
        return cls(
            trial=trial,
            truth=truth,
            estimate=np.full_like(truth, np.nan),
            error=float("nan"),
            solve_time=solve_time,
            method=method,
            rho=rho,
            m_rangings=m_rangings,
            failed=True,
        )


def rmse_of_errors(errors) -> float:
    """Root mean squared error of a list of per-trial error norms."""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise ValueError("no errors to aggregate")
    return float(np.sqrt(np.mean(e * e)))


def rmse(records: list[TrialRecord]) -> float:
    """RMSE over trial records (caller filters failures)."""
    if not records:
        raise ValueError("no records to aggregate")
    return rmse_of_errors([r.error for r in records])


def error_cdf(records: list[TrialRecord], grid) -> list[tuple[float, float]]:
    """Empirical CDF of the trial errors evaluated on a sorted grid."""
    if not records:
        raise ValueError("no records to aggregate")
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted ascending")
    errors = np.sort([r.error for r in records])
    counts = np.searchsorted(errors, grid, side="right")
    return [(float(g), float(c) / errors.size) for g, c in zip(grid, counts)]


def fisher_matrix(system: LinearSystem, rho: float) -> np.ndarray:
    """Information matrix ((1 + 3 rho^2) / rho^2) L^T W L with the same
    clamped weights the solver uses."""
    if rho <= 0:
        raise UndefinedInformationError("information is undefined at rho = 0")
    lw = system.L * system.weights[:, None]
    return (1.0 + 3.0 * rho * rho) / (rho * rho) * (system.L.T @ lw)


def fisher_trace_inverse(system: LinearSystem, rho: float) -> float:
    """Tr(F^{-1}) for one trial's system; the per-trial bound contribution."""
    f = fisher_matrix(system, rho)
    try:
        inv = np.linalg.solve(f, np.eye(f.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise SingularGeometryError("singular information matrix") from exc
    return float(np.trace(inv))


def crlb_rmse_bound(systems: list[LinearSystem], rho: float) -> float:
    """RMSE lower bound sqrt(mean_t Tr(F_t^{-1})) over per-trial systems."""
    if not systems:
        raise ValueError("no systems to aggregate")
    traces = [fisher_trace_inverse(s, rho) for s in systems]
    return float(np.sqrt(np.mean(traces)))
