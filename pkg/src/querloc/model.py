"""Geometry and configuration types shared by the whole simulator.

Anchor indices are 1-based in every public interface; a probe scheme pairs
anchor indices with +/-1 signs and must be sign-balanced so that the
quadratic sensor term cancels out of the ranging combination.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InsufficientAnchorsError(ValueError):
    """A scheme list would need more anchors than the scenario provides."""


@dataclass(frozen=True)
class ProbeScheme:
    """Signed anchor selection for one ranging: ((anchor_index, sign), ...).

    Construction is permissive; use validate_scheme to check the invariants
    (even cardinality, balanced signs, distinct indices).
    """

    members: tuple[tuple[int, int], ...]

    def __post_init__(self):
        members = tuple((int(i), int(w)) for i, w in self.members)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "anchor_indices", tuple(i for i, _ in members))
        object.__setattr__(self, "signs", tuple(w for _, w in members))

    anchor_indices: tuple[int, ...] = field(init=False, compare=False)
    signs: tuple[int, ...] = field(init=False, compare=False)

    @property
    def size(self) -> int:
        return len(self.members)


def validate_scheme(scheme: ProbeScheme) -> list[str]:
    """Check the probe-scheme invariants. Returns [] if the scheme is valid,
    otherwise a list of human-readable violation names."""
    violations = []
    idx = scheme.anchor_indices
    signs = scheme.signs
    balance = 0
    bad_sign = bad_index = False
    for i, w in zip(idx, signs):
        if w == 1:
            balance += 1
        elif w == -1:
            balance -= 1
        else:
            bad_sign = True
        if i < 1:
            bad_index = True
    if bad_sign:
        violations.append("sign values must be +1 or -1")
    if bad_index:
        violations.append("anchor indices must be >= 1")
    if len(idx) % 2 != 0:
        violations.append("odd cardinality")
    if balance != 0 and not bad_sign:
        violations.append("sign balance")
    if len(set(idx)) != len(idx):
        violations.append("duplicate anchor index")
    return violations


def default_scheme_list(m: int, n: int) -> list[ProbeScheme]:
    """Default pairing: scheme k uses anchors (2k-1, +1) and (2k, -1)."""
    if 2 * m > n:
        raise InsufficientAnchorsError(
            f"{m} pair schemes need {2 * m} anchors, only {n} available"
        )
    return [ProbeScheme(((2 * k - 1, +1), (2 * k, -1))) for k in range(1, m + 1)]


@dataclass(frozen=True)
class AnchorSet:
    """Fixed anchor positions, one row per anchor, 1-based external indexing."""

    coords: np.ndarray
    kappa_a: float | None = None

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float)
        if coords.ndim != 2:
            raise ValueError("anchor coordinates must be a 2-D array (n, d)")
        n, d = coords.shape
        if n < 2:
            raise ValueError("at least two anchors are required")
        if d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {d}")
        if not np.all(np.isfinite(coords)):
            raise ValueError("anchor coordinates must be finite")
        if self.kappa_a is not None and np.abs(coords).max() > self.kappa_a + 1e-12:
            raise ValueError("anchor outside the kappa_a infinity-norm bound")
        coords.flags.writeable = False
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    def position(self, index: int) -> np.ndarray:
        """Anchor position by 1-based index."""
        if not 1 <= index <= self.n:
            raise ValueError(f"anchor index {index} out of range 1..{self.n}")
        return self.coords[index - 1]

    @staticmethod
    def table1(kappa_a: float) -> "AnchorSet":
        """The built-in 10-anchor benchmark topology, scaled by kappa_a."""
        k = float(kappa_a)
        pts = [
            (0, 0, 0), (k, 0, 0), (0, k, 0), (0, 0, k),
            (k, k, k), (k, 0, k), (k, k, 0), (0, k, k),
            (k / 2, k / 2, 0), (k / 2, k / 2, k),
        ]
        return AnchorSet(np.array(pts, dtype=float), kappa_a=k)


@dataclass(frozen=True)
class PhysicalConstants:
    """Field chirp rate (rad/s^2) and probe propagation speed (m/s).

    Ties a ranging phase chi to its distance-unit readout
    lambda = c^2 chi / (4 gamma); time of flight is t = 2 d / c.
    """

    gamma: float = 1e3
    c: float = 3e8

    def __post_init__(self):
        if not (self.gamma > 0 and self.c > 0):
            raise ValueError("gamma and c must be positive")

    def lambda_from_chi(self, chi: float) -> float:
        return self.c**2 * chi / (4.0 * self.gamma)

    def chi_from_lambda(self, lam: float) -> float:
        return 4.0 * self.gamma * lam / self.c**2

    def tof(self, distance: float) -> float:
        return 2.0 * distance / self.c


def check_position(x, d: int | None = None, kappa: float | None = None) -> np.ndarray:
    """Validate a position vector; returns it as a float ndarray."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("position must be a 1-D vector")
    if d is not None and x.shape[0] != d:
        raise ValueError(f"position has dimension {x.shape[0]}, expected {d}")
    if x.shape[0] not in (2, 3):
        raise ValueError("position dimension must be 2 or 3")
    if not np.all(np.isfinite(x)):
        raise ValueError("position must be finite")
    if kappa is not None and np.abs(x).max() > kappa + 1e-12:
        raise ValueError("position outside the kappa infinity-norm bound")
    return x
