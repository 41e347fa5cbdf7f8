"""Signal generation: exact ranging readouts, Gaussian-perturbed readouts,
the classical-mimic model, per-distance perturbation for baselines, and the
textbook signal-distance mappings.

All noise is multiplicative with relative standard deviation rho, drawn as
rho * standard_normal() so that rho = 0 reproduces inputs exactly and the
underlying normal draws are shared across noise levels for a fixed stream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import AnchorSet, PhysicalConstants, ProbeScheme, validate_scheme


@dataclass(frozen=True)
class NoiseModel:
    """Relative readout noise scale, std of the multiplicative perturbation."""

    rho: float

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must be in [0, 1)")


@dataclass(frozen=True)
class RangingOutcome:
    """One ranging readout: the raw relative phase chi and its scalarized
    distance-unit value lambda = c^2 chi / (4 gamma)."""

    lam: float
    chi: float
    scheme_id: int

    @classmethod
    def from_lambda(cls, lam: float, scheme_id: int, constants: PhysicalConstants) -> "RangingOutcome":
        return cls(lam=lam, chi=constants.chi_from_lambda(lam), scheme_id=scheme_id)

    def check_consistency(self, constants: PhysicalConstants, tol: float = 1e-9) -> bool:
        return abs(self.lam - constants.lambda_from_chi(self.chi)) <= tol * max(1.0, abs(self.lam))


def scheme_distances(x, anchors: AnchorSet, scheme: ProbeScheme) -> np.ndarray:
    """Sensor-anchor Euclidean distances for the scheme's members, in order."""
    x = np.asarray(x, dtype=float)
    rows = np.array([anchors.position(i) for i in scheme.anchor_indices])
    return np.linalg.norm(rows - x, axis=1)


def quer_lambda(x, anchors: AnchorSet, scheme: ProbeScheme) -> float:
    """Exact scalarized readout sum_i w_i ||x - a_i||^2 (m^2)."""
    violations = validate_scheme(scheme)
    if violations:
        raise ValueError("invalid probe scheme: " + "; ".join(violations))
    d = scheme_distances(x, anchors, scheme)
    w = np.asarray(scheme.signs, dtype=float)
    return float(np.dot(w, d * d))


def perturb_lambda(lam: float, noise: NoiseModel, rng: np.random.Generator) -> float:
    """Noisy readout lam * (1 + delta), delta ~ N(0, rho^2)."""
    return float(lam * (1.0 + noise.rho * rng.standard_normal()))


def mimic_classical_lambda(
    x, anchors: AnchorSet, scheme: ProbeScheme, noise: NoiseModel, rng: np.random.Generator
) -> float:
    """Classical simulation of one ranging: every member distance is perturbed
    independently before squaring and combining, sum_i w_i (d_i (1 + delta_i))^2."""
    violations = validate_scheme(scheme)
    if violations:
        raise ValueError("invalid probe scheme: " + "; ".join(violations))
    d = scheme_distances(x, anchors, scheme)
    deltas = noise.rho * rng.standard_normal(d.size)
    w = np.asarray(scheme.signs, dtype=float)
    dd = d * (1.0 + deltas)
    return float(np.dot(w, dd * dd))


def perturb_distance(d, noise: NoiseModel, rng: np.random.Generator):
    """Noisy distance(s) d * (1 + delta), one independent delta per entry."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    out = d * (1.0 + noise.rho * rng.standard_normal(d.shape))
    if out.ndim == 0:
        return float(out)
    return out


def classical_signal_maps(
    d_i: float,
    d_j: float | None = None,
    *,
    theta: float = 0.0,
    wavelength: float = 0.125,
    v: float = 3e8,
    p_t: float = 1.0,
    g_t: float = 1.0,
    g_r: float = 1.0,
) -> dict[str, float]:
    """The four textbook signal-distance mappings.

    Returns a dict with keys aoa_phase, toa_time, rssi_power and, when d_j is
    given, tdoa_time.  Parameters: incidence angle theta and carrier
    wavelength (AoA/RSSI), propagation speed v (ToA/TDoA), transmit power and
    antenna gains (RSSI).
    """
    if d_i < 0:
        raise ValueError("d_i must be nonnegative")
    if wavelength <= 0 or v <= 0 or p_t <= 0 or g_t <= 0 or g_r <= 0:
        raise ValueError("wavelength, v, p_t, g_t and g_r must be positive")
    if d_i == 0:
        raise ValueError("d_i must be positive for the RSSI mapping")
    out = {
        "aoa_phase": 2.0 * math.pi * math.cos(theta) / wavelength * d_i,
        "toa_time": 2.0 * d_i / v,
        "rssi_power": p_t * g_t * g_r * wavelength**2 / (16.0 * math.pi**2 * d_i**2),
    }
    if d_j is not None:
        if d_j < 0:
            raise ValueError("d_j must be nonnegative")
        out["tdoa_time"] = abs(d_i - d_j) / v
    return out
