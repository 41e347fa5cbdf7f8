"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with the measured quantities (run with -s to see them all).
"""
import math
import subprocess
import sys
import time

import numpy as np

from querloc.experiment import (
    METHOD_MLAT_GD,
    METHOD_QUERLOC,
    METHOD_QUERLOC_SIM,
    METHOD_TDOA,
    ExperimentConfig,
    bench_timing,
    run_campaign,
)
from querloc.qdynamics import (
    TwoLevelParams,
    closed_form_state,
    integrate_two_level,
    phase_discrepancy_scan,
)
from querloc.verify import run_verification

KAPPA_S = 100.0


def _report(num: int, passed: bool, detail: str):
    print(f"[ACCEPTANCE {num}] {'PASS' if passed else 'FAIL'}: {detail}")
    assert passed, f"criterion {num}: {detail}"


def _cells(config):
    return {(c.method, c.m, c.rho): c for c in run_campaign(config).cells}


def test_criterion_01_zero_noise_exactness():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        trials=1000, seed=42, rho_grid=(0.0,), m_list=(3,), methods=(METHOD_QUERLOC,)
    )
    cell = run_campaign(cfg).cells[0]
    elapsed = time.perf_counter() - t0
    worst = float(np.nanmax(cell.errors))
    ok = cell.failures == 0 and worst <= 1e-9 * KAPPA_S and elapsed < 5.0
    _report(1, ok, f"max error {worst:.3e} m over 1000 trials (limit 1e-7), {elapsed:.2f}s")


def test_criterion_02_crlb_saturation():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        trials=10_000, seed=42, rho_grid=(0.01,), m_list=(5,), methods=(METHOD_QUERLOC,)
    )
    cell = run_campaign(cfg).cells[0]
    elapsed = time.perf_counter() - t0
    errors = cell.errors[~np.isnan(cell.errors)]
    mc_se = float(np.std(errors**2, ddof=1) / (2 * cell.rmse * math.sqrt(errors.size)))
    upper = 1.05 * cell.crlb + 3 * mc_se
    ok = cell.crlb <= cell.rmse <= upper and elapsed < 60.0
    _report(
        2,
        ok,
        f"rmse {cell.rmse:.6f} in [bound {cell.crlb:.6f}, {upper:.6f}], {elapsed:.1f}s",
    )


def test_criterion_03_baseline_dominance():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(trials=10_000, seed=42, rho_grid=(0.05,), m_list=(3, 4, 5))
    cells = _cells(cfg)
    elapsed = time.perf_counter() - t0
    details = []
    ok = elapsed < 300.0
    for m in (3, 4, 5):
        quer = cells[(METHOD_QUERLOC, m, 0.05)].rmse
        baselines = [
            cells[(meth, m, 0.05)].rmse if cells[(meth, m, 0.05)].rmse is not None else math.inf
            for meth in (METHOD_MLAT_GD, METHOD_TDOA)
        ]
        best = min(baselines)
        ratio = quer / best
        ok = ok and ratio <= 0.35
        details.append(f"m={m}: {quer:.3f}/{best:.3f}={ratio:.3f}" if best < math.inf else f"m={m}: baselines all-fail")
    _report(3, ok, "; ".join(details) + f" (limit 0.35), {elapsed:.0f}s")


def test_criterion_04_same_anchor_dominance():
    cfg = ExperimentConfig(
        trials=10_000,
        seed=42,
        rho_grid=(0.05,),
        m_list=(5,),
        experiment_kind="same-anchor",
        methods=(METHOD_QUERLOC, METHOD_MLAT_GD),
    )
    cells = _cells(cfg)
    quer = cells[(METHOD_QUERLOC, 5, 0.05)].rmse
    mlat = cells[(METHOD_MLAT_GD, 5, 0.05)].rmse
    ratio = quer / mlat
    _report(4, ratio <= 0.5, f"rmse ratio {quer:.3f}/{mlat:.3f} = {ratio:.3f} (limit 0.5)")


def test_criterion_05_mimic_degradation():
    rho_grid = tuple(k / 200.0 for k in range(1, 11))
    cfg = ExperimentConfig(
        trials=3000, seed=42, rho_grid=rho_grid, m_list=(3, 4, 5), experiment_kind="mimic"
    )
    cells = _cells(cfg)
    ok = True
    worst = math.inf
    at_max = math.inf
    for m in (3, 4, 5):
        for rho in rho_grid:
            quer = cells[(METHOD_QUERLOC, m, rho)].rmse
            sim = cells[(METHOD_QUERLOC_SIM, m, rho)].rmse
            ratio = sim / quer
            worst = min(worst, ratio)
            ok = ok and ratio > 1.0
            if rho == rho_grid[-1]:
                at_max = min(at_max, ratio)
                ok = ok and ratio >= 1.2
    _report(
        5, ok, f"min sim/quer ratio {worst:.2f} (> 1), min at 5% noise {at_max:.2f} (>= 1.2)"
    )


def test_criterion_06_phase_approximation():
    t0 = time.perf_counter()
    params = TwoLevelParams(nu_over_hbar=1e10, gamma=1e3, omega0=1e-2)
    t_max = math.sqrt(1e-4 / params.gamma)  # quadratic phase spans ~1e-4 rad
    grid = np.linspace(0.0, t_max, 100_000)
    report = phase_discrepancy_scan(params, grid, math.sqrt(params.approx_ratio))
    elapsed = time.perf_counter() - t0
    ok = (
        report.max_unfiltered_discrepancy <= 5e-10
        and report.filtered_fraction <= 1e-4
        and elapsed < 10.0
    )
    _report(
        6,
        ok,
        f"max unfiltered discrepancy {report.max_unfiltered_discrepancy:.2e} (<= 5e-10), "
        f"filtered fraction {report.filtered_fraction:.2e} (<= 1e-4), {elapsed:.2f}s",
    )


def test_criterion_07_dynamics_oracle():
    params = TwoLevelParams(nu_over_hbar=50.0, gamma=1.0, omega0=1.0)
    steps = 200_000
    traj = integrate_two_level(params, 1.0, steps)
    drift = traj.norm_drift()
    dev = 0.0
    for idx in range(0, steps + 1, 100):
        pair = closed_form_state(params, traj.t[idx])
        dev = max(dev, abs(pair.c0 - traj.c0[idx]), abs(pair.c1 - traj.c1[idx]))
    ok = dev <= 1e-6 and drift <= 1e-9
    _report(7, ok, f"closed-form deviation {dev:.2e} (<= 1e-6), unitarity drift {drift:.2e} (<= 1e-9)")


def test_criterion_08_quantum_oracle():
    report = run_verification(instances=1000, mle_runs=100, shots=1_000_000, seed=2024)
    ok = (
        report.max_phase_deviation <= 1e-12
        and report.max_povm_deviation <= 1e-12
        and report.mle_within_band >= 95
    )
    _report(
        8,
        ok,
        f"phase dev {report.max_phase_deviation:.2e}, povm dev {report.max_povm_deviation:.2e} "
        f"(both <= 1e-12), estimator in 3-sigma band {report.mle_within_band}/100 (>= 95)",
    )


def test_criterion_09_timing_ordering():
    cfg = ExperimentConfig(trials=10_000, seed=42, rho_grid=(0.05,), m_list=(5,))
    rows = {r.method: r.mean_solve_time for r in bench_timing(cfg)}
    quer, mlat, tdoa = rows[METHOD_QUERLOC], rows[METHOD_MLAT_GD], rows[METHOD_TDOA]
    ok = quer < mlat and quer < tdoa and quer <= 0.2 * mlat
    _report(
        9,
        ok,
        f"mean solve time quer {quer*1e6:.0f}us vs tdoa {tdoa*1e6:.0f}us vs mlat+gd "
        f"{mlat*1e6:.0f}us; quer/mlat {quer/mlat:.4f} (<= 0.2), quer strictly fastest: "
        f"{quer < min(mlat, tdoa)}",
    )


def test_criterion_10_byte_identical_outputs(tmp_path):
    # identical invocation (any worker count) must give byte-identical CSVs;
    # a reduced grid keeps the four runs quick without weakening the contract
    base = [
        sys.executable, "-m", "querloc", "simulate",
        "--experiment", "main", "--seed", "42",
        "--trials", "150", "--rho-step", "0.01", "--rho-max", "0.05",
    ]
    outputs = []
    for i, workers in enumerate((1, 1, 2, 2)):
        out_dir = tmp_path / f"run{i}"
        proc = subprocess.run(
            base + ["--workers", str(workers), "--out-dir", str(out_dir)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outputs.append(
            ((out_dir / "results.csv").read_bytes(), (out_dir / "errors.csv").read_bytes())
        )
    ok = all(o == outputs[0] for o in outputs[1:])
    _report(10, ok, "results.csv and errors.csv byte-identical over 2 runs x workers {1,2}")
