"""Scenario generation and Monte Carlo campaigns.

A campaign sweeps (method, ranging count m, noise level rho) cells.  Every
method at a fixed trial index sees the same ground-truth position and draws
its noise from a private PCG64 stream derived from (seed, method code,
trial index), so results are independent of execution order and of the
worker count.  Trials in a cell are embarrassingly parallel.
"""
from __future__ import annotations

import multiprocessing
import time
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .localize import (
    GdOptions,
    SingularGeometryError,
    build_linear_system,
    gd_refine,
    multilateration_init,
    tdoa_chan_solve,
    wls_solve,
)
from .metrics import TrialRecord, fisher_trace_inverse, rmse_of_errors
from .model import AnchorSet, PhysicalConstants, default_scheme_list
from .ranging import NoiseModel, mimic_classical_lambda, perturb_distance, perturb_lambda, quer_lambda
from .util import format_float

METHOD_QUERLOC = "QuERLoc"
METHOD_MLAT_GD = "Multilateration+GD"
METHOD_TDOA = "TDoA-Chan"
METHOD_QUERLOC_SIM = "QuERLoc-sim"

ALL_METHODS = (METHOD_QUERLOC, METHOD_MLAT_GD, METHOD_TDOA, METHOD_QUERLOC_SIM)

# stream codes for deriving per-purpose RNG streams from the campaign seed
_POSITION_STREAM = 0
_METHOD_CODES = {
    METHOD_QUERLOC: 1,
    METHOD_MLAT_GD: 2,
    METHOD_TDOA: 3,
    METHOD_QUERLOC_SIM: 4,
}

EXPERIMENT_KINDS = ("main", "same-anchor", "mimic", "dynamics", "bench")

_DEFAULT_METHODS = {
    "main": (METHOD_QUERLOC, METHOD_MLAT_GD, METHOD_TDOA),
    "same-anchor": (METHOD_QUERLOC, METHOD_MLAT_GD, METHOD_TDOA),
    "mimic": (METHOD_QUERLOC, METHOD_QUERLOC_SIM),
    "bench": (METHOD_QUERLOC, METHOD_MLAT_GD, METHOD_TDOA),
    "dynamics": (),
}


def default_rho_grid() -> tuple[float, ...]:
    """Noise grid 0%..5% in 0.5% steps."""
    return tuple(k / 200.0 for k in range(11))


@dataclass(frozen=True)
class ExperimentConfig:
    """Campaign parameters; the zero-argument constructor is the benchmark
    default (d=3, kappa_s=100 m, kappa_a = 0.5 kappa_s, 10 anchors in the
    table1 topology, m in {3,4,5}, 2-anchor schemes, rho 0..5% step 0.5%,
    1e4 trials)."""

    d: int = 3
    kappa_s: float = 100.0
    kappa_a_ratio: float = 0.5
    n: int = 10
    anchor_topology: str = "table1"
    anchor_coords: tuple | None = None
    m_list: tuple[int, ...] = (3, 4, 5)
    rho_grid: tuple[float, ...] = field(default_factory=default_rho_grid)
    trials: int = 10_000
    seed: int | None = None
    methods: tuple[str, ...] | None = None
    experiment_kind: str = "main"
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    workers: int = 1

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError("d must be 2 or 3")
        if self.kappa_s <= 0 or not 0 < self.kappa_a_ratio:
            raise ValueError("kappa_s and kappa_a_ratio must be positive")
        if self.experiment_kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.experiment_kind!r}")
        if not self.m_list or any(m < 1 for m in self.m_list):
            raise ValueError("m_list must contain positive ranging counts")
        if 2 * max(self.m_list) > self.n:
            raise ValueError("largest m needs more anchor pairs than n provides")
        if any(not 0 <= r < 1 for r in self.rho_grid):
            raise ValueError("rho values must lie in [0, 1)")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.methods is not None:
            unknown = set(self.methods) - set(ALL_METHODS)
            if unknown:
                raise ValueError(f"unknown methods: {sorted(unknown)}")
        if self.anchor_topology != "table1" and self.anchor_coords is None:
            raise ValueError("non-table1 topology requires explicit anchor coordinates")
        self.anchor_set()  # construct once so bad coordinates fail here

    @property
    def kappa_a(self) -> float:
        return self.kappa_s * self.kappa_a_ratio

    def anchor_set(self) -> AnchorSet:
        cached = getattr(self, "_anchor_cache", None)
        if cached is not None:
            return cached
        if self.anchor_coords is not None:
            coords = np.array(self.anchor_coords, dtype=float)
            if coords.shape != (self.n, self.d):
                raise ValueError(f"anchors must have shape ({self.n}, {self.d})")
            anchors = AnchorSet(coords, kappa_a=self.kappa_a)
        else:
            if self.n != 10 or self.d != 3:
                raise ValueError("table1 topology is fixed at n=10, d=3")
            anchors = AnchorSet.table1(self.kappa_a)
        object.__setattr__(self, "_anchor_cache", anchors)
        return anchors

    def resolved_methods(self) -> tuple[str, ...]:
        if self.methods is not None:
            return tuple(self.methods)
        return _DEFAULT_METHODS[self.experiment_kind]

    def gd_options(self) -> GdOptions:
        return GdOptions(grad_tol=1e-9 * self.kappa_s, collision_nudge=1e-9 * self.kappa_s)


@lru_cache(maxsize=None)
def _pair_schemes(m: int, n: int) -> tuple:
    return tuple(default_scheme_list(m, n))


def position_stream(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, _POSITION_STREAM))))


def trial_stream(seed: int, method: str, trial: int) -> np.random.Generator:
    """Per-(method, trial) noise stream; identical for all (m, rho) cells so
    noise draws are shared across the grid (common random numbers)."""
    code = _METHOD_CODES[method]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, code, trial))))


def sample_positions(config: ExperimentConfig, rng: np.random.Generator) -> np.ndarray:
    """trials sensor positions, uniform over [0, kappa_s]^d."""
    return rng.uniform(0.0, config.kappa_s, size=(config.trials, config.d))


def anchors_in_use(config: ExperimentConfig, method: str, m: int) -> int:
    """How many anchors a baseline consumes in one cell: m in main mode, 2m in
    same-anchor mode (the anchors the paired schemes use)."""
    if method in (METHOD_QUERLOC, METHOD_QUERLOC_SIM):
        return 2 * m
    return 2 * m if config.experiment_kind == "same-anchor" else m


def method_is_determined(config: ExperimentConfig, method: str, m: int) -> bool:
    """Whether the method's solver is determined for this cell (enough anchors
    and equations).  Underdetermined cells fail structurally: every trial is a
    failure without noise even being relevant."""
    if method in (METHOD_QUERLOC, METHOD_QUERLOC_SIM):
        return m >= config.d and 2 * m <= config.n
    k = anchors_in_use(config, method, m)
    if method == METHOD_MLAT_GD:
        return k >= config.d + 1
    if method == METHOD_TDOA:
        return k >= config.d + 2
    raise ValueError(f"unknown method {method!r}")


def run_trial(
    config: ExperimentConfig,
    method: str,
    m: int,
    rho: float,
    truth,
    rng: np.random.Generator,
    trial: int = 0,
    with_system: bool = False,
):
    """Generate one trial's measurements, solve, and record error and the
    wall time of the solve step (system build + estimator, excluding scenario
    generation).  Solver failures become failed records, not exceptions.

    Returns the TrialRecord, or (TrialRecord, LinearSystem | None) when
    with_system is set (the system is populated for the WLS methods only).
    """
    anchors = config.anchor_set()
    truth = np.asarray(truth, dtype=float)
    noise = NoiseModel(rho)
    system = None
    try:
        if method in (METHOD_QUERLOC, METHOD_QUERLOC_SIM):
            schemes = _pair_schemes(m, config.n)
            if method == METHOD_QUERLOC:
                lams = [
                    perturb_lambda(quer_lambda(truth, anchors, s), noise, rng) for s in schemes
                ]
            else:
                lams = [mimic_classical_lambda(truth, anchors, s, noise, rng) for s in schemes]
            t0 = time.perf_counter()
            system = build_linear_system(anchors, schemes, lams, kappa_s=config.kappa_s)
            est = wls_solve(system)
            solve_time = time.perf_counter() - t0
        elif method == METHOD_MLAT_GD:
            coords = anchors.coords[: anchors_in_use(config, method, m)]
            d_true = np.linalg.norm(coords - truth, axis=1)
            d_tilde = perturb_distance(d_true, noise, rng)
            t0 = time.perf_counter()
            init = multilateration_init(coords, d_tilde)
            est = gd_refine(init.x_hat, coords, d_tilde, config.gd_options())
            solve_time = time.perf_counter() - t0
        elif method == METHOD_TDOA:
            coords = anchors.coords[: anchors_in_use(config, method, m)]
            d_true = np.linalg.norm(coords - truth, axis=1)
            d_tilde = perturb_distance(d_true, noise, rng)
            range_diffs = d_tilde[1:] - d_tilde[0]
            t0 = time.perf_counter()
            est = tdoa_chan_solve(coords, range_diffs)
            solve_time = time.perf_counter() - t0
        else:
            raise ValueError(f"unknown method {method!r}")
        record = TrialRecord.make(trial, truth, est.x_hat, solve_time, method, rho, m)
    except SingularGeometryError:
        record = TrialRecord.failure(trial, truth, 0.0, method, rho, m)
        system = None
    if with_system:
        return record, system
    return record


def _run_cell_chunk(
    config: ExperimentConfig,
    method: str,
    m: int,
    rho: float,
    truths: np.ndarray,
    trial_lo: int,
    want_bound: bool,
    timed: bool = False,
) -> dict:
    """Run trials [trial_lo, trial_lo + len(truths)) of one cell.

    Returns plain arrays so chunks can cross process boundaries cheaply:
    errors (NaN = failure), solve times (NaN where not measured) and, when
    requested, per-trial information-bound traces (NaN where unavailable).

    Unless timed solves are requested, the WLS methods and the gradient
    baseline go through trial-vectorized paths that replay exactly the same
    noise streams and solve steps; bench uses timed=True to get honest
    per-trial wall times through run_trial.
    """
    if timed or method == METHOD_TDOA:
        return _run_chunk_per_trial(config, method, m, rho, truths, trial_lo, want_bound)
    if method in (METHOD_QUERLOC, METHOD_QUERLOC_SIM):
        return _run_chunk_wls(config, method, m, rho, truths, trial_lo, want_bound)
    if method == METHOD_MLAT_GD:
        return _run_chunk_mlat_gd(config, m, rho, truths, trial_lo)
    raise ValueError(f"unknown method {method!r}")


def _run_chunk_per_trial(config, method, m, rho, truths, trial_lo, want_bound) -> dict:
    r = truths.shape[0]
    errors = np.full(r, np.nan)
    times = np.full(r, np.nan)
    traces = np.full(r, np.nan)
    for i in range(r):
        trial = trial_lo + i
        rng = trial_stream(config.seed, method, trial)
        record, system = run_trial(
            config, method, m, rho, truths[i], rng, trial=trial, with_system=True
        )
        if record.failed:
            continue
        errors[i] = record.error
        times[i] = record.solve_time
        if want_bound and system is not None:
            try:
                traces[i] = fisher_trace_inverse(system, rho)
            except SingularGeometryError:
                pass
    return {"errors": errors, "times": times, "traces": traces}


def _scheme_member_arrays(config, m):
    """0-based member anchor indices (m, 2) and signs (m, 2) of the default
    pair schemes, plus the static system pieces (L rows and anchor quadratic
    terms)."""
    anchors = config.anchor_set()
    schemes = _pair_schemes(m, config.n)
    idx = np.array([[i - 1 for i in s.anchor_indices] for s in schemes])
    signs = np.array([s.signs for s in schemes], dtype=float)
    coords = anchors.coords
    L = 2.0 * np.einsum("ks,ksd->kd", signs, coords[idx])
    h0 = np.einsum("ks,ks->k", signs, np.sum(coords[idx] ** 2, axis=2))
    return idx, signs, L, h0


def _run_chunk_wls(config, method, m, rho, truths, trial_lo, want_bound) -> dict:
    from .localize import LinearSystem, clamped_weights, wls_solve

    r = truths.shape[0]
    idx, signs, L, h0 = _scheme_member_arrays(config, m)
    coords = config.anchor_set().coords
    # distances of every trial to each scheme member: (r, m, 2)
    diff = truths[:, None, None, :] - coords[idx][None, :, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=3))
    if method == METHOD_QUERLOC:
        lam = np.einsum("ks,tks->tk", signs, dist * dist)
        deltas = np.empty((r, m))
        for i in range(r):
            deltas[i] = trial_stream(config.seed, method, trial_lo + i).standard_normal(m)
        lam_tilde = lam * (1.0 + rho * deltas)
    else:
        deltas = np.empty((r, m, 2))
        for i in range(r):
            deltas[i] = trial_stream(config.seed, method, trial_lo + i).standard_normal(
                2 * m
            ).reshape(m, 2)
        noisy = dist * (1.0 + rho * deltas)
        lam_tilde = np.einsum("ks,tks->tk", signs, noisy * noisy)

    errors = np.full(r, np.nan)
    traces = np.full(r, np.nan)
    for i in range(r):
        lt = lam_tilde[i]
        system = LinearSystem(L, h0 - lt, clamped_weights(lt, config.kappa_s))
        try:
            est = wls_solve(system)
        except SingularGeometryError:
            continue
        errors[i] = np.linalg.norm(est.x_hat - truths[i])
        if want_bound:
            try:
                traces[i] = fisher_trace_inverse(system, rho)
            except SingularGeometryError:
                pass
    return {"errors": errors, "times": np.full(r, np.nan), "traces": traces}


def _run_chunk_mlat_gd(config, m, rho, truths, trial_lo) -> dict:
    from .localize import gd_refine_batch, multilateration_init_batch

    r = truths.shape[0]
    k = anchors_in_use(config, METHOD_MLAT_GD, m)
    coords = config.anchor_set().coords[:k]
    dist = np.linalg.norm(truths[:, None, :] - coords[None, :, :], axis=2)
    deltas = np.empty((r, k))
    for i in range(r):
        deltas[i] = trial_stream(config.seed, METHOD_MLAT_GD, trial_lo + i).standard_normal(k)
    d_tilde = dist * (1.0 + rho * deltas)
    nan = np.full(r, np.nan)
    try:
        x0 = multilateration_init_batch(coords, d_tilde)
    except SingularGeometryError:
        return {"errors": nan, "times": nan, "traces": nan}
    x_hat, _ = gd_refine_batch(x0, coords, d_tilde, config.gd_options())
    errors = np.linalg.norm(x_hat - truths, axis=1)
    return {"errors": errors, "times": nan, "traces": nan}


@dataclass
class CellResult:
    """Aggregate of one (method, m, rho) cell plus the per-trial error vector
    (NaN entries mark failed trials)."""

    experiment: str
    method: str
    m: int
    rho: float
    trials: int
    failures: int
    rmse: float | None
    crlb: float | None
    mean_solve_time: float | None
    errors: np.ndarray


@dataclass
class CampaignResult:
    config: ExperimentConfig
    cells: list[CellResult]


def run_campaign(config: ExperimentConfig) -> CampaignResult:
    """Sweep every (method, m, rho) cell of the configured experiment.

    All methods estimate the same truth sequence.  The information bound is
    attached to QuERLoc cells at nonzero noise.  Worker processes split each
    cell's trial range; aggregation is index-ordered, so output is identical
    for any worker count.
    """
    if config.seed is None:
        raise ValueError("campaign needs an explicit seed")
    if config.experiment_kind not in ("main", "same-anchor", "mimic"):
        raise ValueError(f"run_campaign does not drive {config.experiment_kind!r}")
    truths = sample_positions(config, position_stream(config.seed))
    pool = None
    try:
        if config.workers > 1:
            pool = multiprocessing.get_context("fork").Pool(config.workers)
        cells = []
        for method in config.resolved_methods():
            for m in config.m_list:
                for rho in config.rho_grid:
                    cells.append(_run_cell(config, method, m, rho, truths, pool))
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return CampaignResult(config, cells)


def _run_cell(config, method, m, rho, truths, pool, timed: bool = False) -> CellResult:
    r = config.trials
    want_bound = method == METHOD_QUERLOC and rho > 0
    if not method_is_determined(config, method, m):
        # structurally underdetermined: every trial fails, skip the work
        return CellResult(
            config.experiment_kind, method, m, rho, r, r, None, None, None, np.full(r, np.nan)
        )
    if pool is None:
        parts = [_run_cell_chunk(config, method, m, rho, truths, 0, want_bound, timed)]
    else:
        bounds = np.linspace(0, r, config.workers + 1).astype(int)
        jobs = [
            (config, method, m, rho, truths[lo:hi], int(lo), want_bound, timed)
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if hi > lo
        ]
        parts = pool.starmap(_run_cell_chunk, jobs)
    errors = np.concatenate([p["errors"] for p in parts])
    times = np.concatenate([p["times"] for p in parts])
    traces = np.concatenate([p["traces"] for p in parts])

    ok = ~np.isnan(errors)
    failures = int(r - np.count_nonzero(ok))
    cell_rmse = rmse_of_errors(errors[ok]) if np.any(ok) else None
    crlb = None
    if want_bound:
        good = ~np.isnan(traces)
        if np.any(good):
            crlb = float(np.sqrt(np.mean(traces[good])))
    timed_ok = ok & ~np.isnan(times)
    mean_time = float(np.mean(times[timed_ok])) if np.any(timed_ok) else None
    return CellResult(
        config.experiment_kind, method, m, rho, r, failures, cell_rmse, crlb, mean_time, errors
    )


@dataclass
class TimingRow:
    method: str
    m: int
    rho: float
    trials: int
    failures: int
    mean_solve_time: float | None


def bench_timing(config: ExperimentConfig) -> list[TimingRow]:
    """Mean solve time per enabled method at a single (m, rho) cell, the
    largest configured m and noise level so every baseline is determined."""
    if config.seed is None:
        raise ValueError("bench needs an explicit seed")
    m = max(config.m_list)
    rho = max(config.rho_grid)
    cell_config = replace(config, experiment_kind="main", m_list=(m,), rho_grid=(rho,))
    truths = sample_positions(cell_config, position_stream(cell_config.seed))
    pool = None
    try:
        if cell_config.workers > 1:
            pool = multiprocessing.get_context("fork").Pool(cell_config.workers)
        rows = []
        for method in cell_config.resolved_methods():
            cell = _run_cell(cell_config, method, m, rho, truths, pool, timed=True)
            rows.append(TimingRow(method, m, rho, cell.trials, cell.failures, cell.mean_solve_time))
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return rows


RESULTS_HEADER = "experiment,method,m,rho,trials,failures,rmse,crlb,mean_solve_time_s"
ERRORS_HEADER = "experiment,method,m,rho,trial,error"


def write_results_csv(result: CampaignResult, path, include_timing: bool = False) -> None:
    """One row per cell.  The timing column is left empty unless explicitly
    requested: simulate outputs must be byte-identical across runs, which
    wall-clock content cannot be (bench reports timing instead)."""
    with open(path, "w", newline="") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for c in result.cells:
            fh.write(
                ",".join(
                    (
                        c.experiment,
                        c.method,
                        str(c.m),
                        format_float(c.rho),
                        str(c.trials),
                        str(c.failures),
                        format_float(c.rmse) if c.rmse is not None else "",
                        format_float(c.crlb) if c.crlb is not None else "",
                        format_float(c.mean_solve_time)
                        if include_timing and c.mean_solve_time is not None
                        else "",
                    )
                )
                + "\n"
            )


def write_errors_csv(result: CampaignResult, path) -> None:
    """One row per successful trial (failures are counted in results.csv)."""
    with open(path, "w", newline="") as fh:
        fh.write(ERRORS_HEADER + "\n")
        for c in result.cells:
            prefix = f"{c.experiment},{c.method},{c.m},{format_float(c.rho)},"
            for t in range(c.errors.size):
                e = c.errors[t]
                if not np.isnan(e):
                    fh.write(prefix + f"{t},{format_float(e)}\n")


def campaign_failure_rate(result: CampaignResult) -> float:
    """Failure fraction among attempted (determined) cells; the structural
    all-fail cells are excluded because they fail by construction."""
    attempted = 0
    failed = 0
    for c in result.cells:
        if method_is_determined(result.config, c.method, c.m):
            attempted += c.trials
            failed += c.failures
    return failed / attempted if attempted else 0.0


def parse_config_value(key: str, raw: str):
    raw = raw.strip()
    if key == "d" or key == "n" or key == "trials" or key == "seed":
        return int(raw)
    if key == "kappa_s" or key == "kappa_a_ratio":
        return float(raw)
    if key == "m":
        return tuple(int(v) for v in raw.split(",") if v.strip())
    if key == "rho_grid":
        if ":" in raw:
            start, stop, step = (float(v) for v in raw.split(":"))
            count = int(round((stop - start) / step)) + 1
            return tuple(start + i * step for i in range(count))
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if key == "methods":
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    if key == "experiment":
        return raw
    if key == "anchors":
        if raw == "table1":
            return "table1"
        return tuple(
            tuple(float(c) for c in point.split(",")) for point in raw.split(";") if point.strip()
        )
    raise ValueError(f"unknown config key {key!r}")


_CONFIG_FIELDS = {
    "d": "d",
    "kappa_s": "kappa_s",
    "kappa_a_ratio": "kappa_a_ratio",
    "n": "n",
    "m": "m_list",
    "trials": "trials",
    "seed": "seed",
    "rho_grid": "rho_grid",
    "methods": "methods",
    "experiment": "experiment_kind",
}


def parse_config_file(path) -> dict:
    """Read a line-oriented key=value config file into ExperimentConfig kwargs."""
    kwargs: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, raw = line.split("=", 1)
            key = key.strip()
            value = parse_config_value(key, raw)
            if key == "anchors":
                if value == "table1":
                    kwargs["anchor_topology"] = "table1"
                    kwargs["anchor_coords"] = None
                else:
                    kwargs["anchor_topology"] = "explicit"
                    kwargs["anchor_coords"] = value
            else:
                kwargs[_CONFIG_FIELDS[key]] = value
    return kwargs
