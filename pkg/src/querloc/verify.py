"""Randomized consistency suite: the statevector pipeline against the
algebraic phase-accumulation law, the POVM probability against the literal
state overlap, and the shot-based phase estimator against its binomial
error band."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ProbeScheme
from .qsim import (
    BranchPattern,
    apply_phase_evolution,
    branch_relative_phase,
    povm_probability,
    prepare_probe,
    sample_and_estimate_phase,
)
from .util import wrap_angle

PHASE_TOL = 1e-12
POVM_TOL = 1e-12


@dataclass
class VerificationReport:
    instances: int
    max_phase_deviation: float
    max_povm_deviation: float
    mle_runs: int
    mle_within_band: int
    mle_required: int
    passed: bool

    def summary_lines(self) -> list[str]:
        return [
            f"instances checked: {self.instances}",
            f"max branch-phase deviation from the accumulation law: {self.max_phase_deviation:.3e} (tol {PHASE_TOL:g})",
            f"max POVM probability deviation from the state overlap: {self.max_povm_deviation:.3e} (tol {POVM_TOL:g})",
            f"phase-estimator runs inside the 3-sigma binomial band: {self.mle_within_band}/{self.mle_runs} (need >= {self.mle_required})",
            "verdict: " + ("PASS" if self.passed else "FAIL"),
        ]


def _random_scheme(rng: np.random.Generator, max_pairs: int = 3) -> ProbeScheme:
    pairs = int(rng.integers(1, max_pairs + 1))
    size = 2 * pairs
    indices = rng.permutation(np.arange(1, 21))[:size]
    signs = np.array([+1] * pairs + [-1] * pairs)
    rng.shuffle(signs)
    return ProbeScheme(tuple((int(i), int(w)) for i, w in zip(indices, signs)))


def run_verification(
    instances: int = 1000,
    mle_runs: int = 100,
    shots: int = 1_000_000,
    seed: int = 2024,
    inject_phase_error: float = 0.0,
) -> VerificationReport:
    """Run the full suite.  inject_phase_error is a falsifiability hook: a
    nonzero value corrupts the evolution phases so the suite must fail."""
    rng = np.random.default_rng(seed)
    max_phase_dev = 0.0
    max_povm_dev = 0.0
    for _ in range(instances):
        scheme = _random_scheme(rng)
        gamma = float(rng.uniform(0.05, 2.0))
        times = rng.uniform(0.0, 3.0, size=scheme.size)
        probe = prepare_probe(scheme)
        evolved = apply_phase_evolution(probe, times + inject_phase_error, gamma)
        measured = branch_relative_phase(evolved, BranchPattern.from_scheme(scheme))
        predicted = gamma * float(np.dot(scheme.signs, times**2))
        dev = abs(wrap_angle(measured - predicted))
        max_phase_dev = max(max_phase_dev, dev)

        overlap = abs(np.vdot(probe.amplitudes, evolved.amplitudes)) ** 2
        chi = gamma * float(np.dot(scheme.signs, (times + inject_phase_error) ** 2))
        max_povm_dev = max(max_povm_dev, abs(povm_probability(chi) - overlap))

    chi_true = 0.3
    p0 = povm_probability(chi_true)
    sigma = abs(2.0 / math.sin(chi_true)) * math.sqrt(p0 * (1.0 - p0) / shots)
    within = 0
    for run in range(mle_runs):
        est_rng = np.random.default_rng(seed + 1 + run)
        chi_hat = sample_and_estimate_phase(chi_true, shots, est_rng)
        if abs(chi_hat - chi_true) <= 3.0 * sigma:
            within += 1

    required = int(math.ceil(0.95 * mle_runs))
    passed = max_phase_dev <= PHASE_TOL and max_povm_dev <= POVM_TOL and within >= required
    return VerificationReport(
        instances=instances,
        max_phase_deviation=max_phase_dev,
        max_povm_deviation=max_povm_dev,
        mle_runs=mle_runs,
        mle_within_band=within,
        mle_required=required,
        passed=passed,
    )
