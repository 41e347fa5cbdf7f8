"""Statevector simulation of the entangled ranging probe.

Serves as the independent oracle for the phase-accumulation law: an
H + CNOT-chain + X circuit prepares the two-branch probe, per-qubit
quadratic-phase evolution is applied, and the branch relative phase is read
back and compared against gamma * sum(w_i t_i^2).

Basis convention: qubit 1 is the most significant bit of the amplitude
index, so the basis string |b1 b2 ... bN> reads left to right.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ProbeScheme, validate_scheme
from .util import wrap_angle

MAX_QUBITS = 12
NORM_EPS = 1e-12
AMPLITUDE_EPS = 1e-12


class CapacityError(ValueError):
    """Probe would need more qubits than the simulator supports."""


class DegenerateStateError(ValueError):
    """A branch amplitude is zero, so the branch phase is undefined."""


@dataclass
class StateVector:
    """2^n complex amplitudes, unit norm."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        n = int(round(math.log2(amps.size)))
        if 2**n != amps.size:
            raise ValueError("amplitude count must be a power of two")
        norm = float(np.sum(np.abs(amps) ** 2))
        if abs(norm - 1.0) > NORM_EPS:
            raise ValueError(f"state not normalized: sum |a|^2 = {norm!r}")
        self.amplitudes = amps

    @property
    def n_qubits(self) -> int:
        return int(round(math.log2(self.amplitudes.size)))


@dataclass(frozen=True)
class BranchPattern:
    """The two complementary basis strings of the probe; bit i of bits0 is 1
    exactly when qubit i carries a -1 sign."""

    bits0: tuple[int, ...]
    bits1: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits0) != len(self.bits1):
            raise ValueError("branch strings must have equal length")
        if any(b0 == b1 for b0, b1 in zip(self.bits0, self.bits1)):
            raise ValueError("branch strings must be bitwise complements")

    @classmethod
    def from_scheme(cls, scheme: ProbeScheme) -> "BranchPattern":
        bits0 = tuple(1 if w == -1 else 0 for w in scheme.signs)
        return cls(bits0, tuple(1 - b for b in bits0))

    @staticmethod
    def _index(bits: tuple[int, ...]) -> int:
        idx = 0
        for b in bits:
            idx = (idx << 1) | b
        return idx

    @property
    def index0(self) -> int:
        return self._index(self.bits0)

    @property
    def index1(self) -> int:
        return self._index(self.bits1)


def _axis_view(amps: np.ndarray, n: int, *qubits: int) -> np.ndarray:
    """View of the amplitudes with the given qubit axes moved to the front."""
    return np.moveaxis(amps.reshape([2] * n), qubits, range(len(qubits)))


def _apply_hadamard(amps: np.ndarray, n: int, qubit: int) -> None:
    view = _axis_view(amps, n, qubit)
    a0 = view[0].copy()
    a1 = view[1].copy()
    inv = 1.0 / math.sqrt(2.0)
    view[0] = (a0 + a1) * inv
    view[1] = (a0 - a1) * inv


def _apply_x(amps: np.ndarray, n: int, qubit: int) -> None:
    view = _axis_view(amps, n, qubit)
    a0 = view[0].copy()
    view[0] = view[1]
    view[1] = a0


def _apply_cnot(amps: np.ndarray, n: int, control: int, target: int) -> None:
    view = _axis_view(amps, n, control, target)
    a10 = view[1, 0].copy()
    view[1, 0] = view[1, 1]
    view[1, 1] = a10


def prepare_probe(scheme: ProbeScheme) -> StateVector:
    """Entangle the probe for one scheme: Hadamard on qubit 1, a CNOT chain
    1->2->...->N, then X on every qubit whose sign is -1."""
    violations = validate_scheme(scheme)
    if violations:
        raise ValueError("invalid probe scheme: " + "; ".join(violations))
    n = scheme.size
    if n > MAX_QUBITS:
        raise CapacityError(f"{n} qubits exceed the {MAX_QUBITS}-qubit capacity")
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = 1.0
    _apply_hadamard(amps, n, 0)
    for q in range(n - 1):
        _apply_cnot(amps, n, q, q + 1)
    for q, w in enumerate(scheme.signs):
        if w == -1:
            _apply_x(amps, n, q)
    return StateVector(amps)


def apply_phase_evolution(state: StateVector, times, gamma: float) -> StateVector:
    """Multiply each basis amplitude by prod_i exp(-i gamma t_i^2 bit_i)."""
    times = np.asarray(times, dtype=float)
    n = state.n_qubits
    if times.shape != (n,):
        raise ValueError(f"need {n} per-qubit times, got shape {times.shape}")
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    idx = np.arange(2**n)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))) & 1
    phases = bits @ (gamma * times**2)
    return StateVector(state.amplitudes * np.exp(-1j * phases))


def branch_relative_phase(state: StateVector, pattern: BranchPattern) -> float:
    """arg(amp(bits0)) - arg(amp(bits1)), wrapped to (-pi, pi]."""
    if len(pattern.bits0) != state.n_qubits:
        raise ValueError("pattern length does not match the state")
    a0 = state.amplitudes[pattern.index0]
    a1 = state.amplitudes[pattern.index1]
    if abs(a0) <= AMPLITUDE_EPS or abs(a1) <= AMPLITUDE_EPS:
        raise DegenerateStateError("branch amplitude is zero")
    return wrap_angle(float(np.angle(a0) - np.angle(a1)))


def povm_probability(chi: float) -> float:
    """Probability of the yes outcome when projecting back onto the initial
    probe: cos^2(chi / 2)."""
    if not math.isfinite(chi):
        raise ValueError("chi must be finite")
    return math.cos(chi / 2.0) ** 2


def sample_and_estimate_phase(chi_true: float, shots: int, rng: np.random.Generator) -> float:
    """Draw yes-counts ~ Binomial(shots, cos^2(chi/2)) and return the
    principal-value estimate 2 arccos(sqrt(k / shots)) in [0, pi].

    The readout only determines chi up to sign and 2 pi winding; callers that
    need the signed value must supply branch information themselves.
    """
    shots = int(shots)
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p0 = povm_probability(chi_true)
    k = int(rng.binomial(shots, p0))
    return 2.0 * math.acos(math.sqrt(k / shots))
