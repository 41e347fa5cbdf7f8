"""Position estimators: the weighted-least-squares localizer for quantum
rangings and the two classical baselines (multilateration with gradient
refinement, and the two-stage pseudo-linear TDoA solver).

All linear solves go through orthogonal-factorization least squares; no
matrix is ever inverted explicitly.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .model import AnchorSet, ProbeScheme

COND_LIMIT = 1e12
WEIGHT_CLAMP_EPS = 1e-6


class SingularGeometryError(ValueError):
    """The anchor geometry leaves the system rank-deficient or ill-conditioned."""


@dataclass(frozen=True)
class LinearSystem:
    """The (L, h_tilde, weights) triple consumed by the WLS solver.

    Row k of L is u_k = 2 sum_i w_{i,k} a_i; h_tilde_k is the anchor
    quadratic term minus the noisy readout; weights are the clamped
    inverse-square readouts (diagonal of the weighting matrix).
    """

    L: np.ndarray
    h_tilde: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        L, h, w = self.L, self.h_tilde, self.weights
        if not (isinstance(L, np.ndarray) and L.dtype == np.float64):
            L = np.asarray(L, dtype=float)
            object.__setattr__(self, "L", L)
        if not (isinstance(h, np.ndarray) and h.dtype == np.float64):
            h = np.asarray(h, dtype=float)
            object.__setattr__(self, "h_tilde", h)
        if not (isinstance(w, np.ndarray) and w.dtype == np.float64):
            w = np.asarray(w, dtype=float)
            object.__setattr__(self, "weights", w)
        if L.ndim != 2 or h.shape != (L.shape[0],) or w.shape != (L.shape[0],):
            raise ValueError("inconsistent system shapes")
        if w.min() <= 0:
            raise ValueError("weights must be positive")

    @property
    def m(self) -> int:
        return self.L.shape[0]

    @property
    def d(self) -> int:
        return self.L.shape[1]


@dataclass
class Estimate:
    """A solver output: position, which solver produced it, iteration count
    (0 for closed-form solves), wall time of the solve, and for the TDoA
    solver the auxiliary reference-distance estimate."""

    x_hat: np.ndarray
    solver_id: str
    iterations: int = 0
    solve_time: float = 0.0
    d1_hat: float | None = None

    def __post_init__(self):
        x = np.asarray(self.x_hat, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("estimate coordinates must be finite")
        self.x_hat = x


def clamped_weights(lambdas_tilde, scale: float) -> np.ndarray:
    """Inverse-square readout weights, clamped so near-zero readouts cannot
    dominate: each weight is at most (eps * median|lambda|)^-2.  If every
    readout is negligible relative to scale^2, unit weights are returned.

    Plain-float arithmetic: the readout count is tiny and this sits inside
    the per-trial timed solve.
    """
    lam = [abs(float(v)) for v in lambdas_tilde]
    srt = sorted(lam)
    n = len(lam)
    if srt[-1] < 1e-12 * scale * scale:
        return np.ones(n)
    median = 0.5 * (srt[(n - 1) // 2] + srt[n // 2])
    floor = WEIGHT_CLAMP_EPS * median
    if floor <= 0.0:
        floor = WEIGHT_CLAMP_EPS * srt[-1]
    return np.array([1.0 / (v * v) if v > floor else 1.0 / (floor * floor) for v in lam])


# geometry-static solver pieces, keyed by anchor bytes (+ scheme list); the
# ranging matrix and anchor quadratic terms do not depend on the readouts,
# which is exactly the structural property the WLS localizer exploits
_STATIC_CACHE: dict = {}
_STATIC_CACHE_MAX = 128


def _cache_get(key):
    if len(_STATIC_CACHE) > _STATIC_CACHE_MAX:
        _STATIC_CACHE.clear()
    return _STATIC_CACHE.get(key)


def _quer_static_parts(anchors: AnchorSet, schemes) -> tuple[np.ndarray, np.ndarray]:
    """Static (L, h0) of the ranging system: row k is 2 sum_i w_i a_i and
    h0_k = sum_i w_i a_i.a_i over scheme k's members."""
    schemes = tuple(schemes)
    coords = anchors.coords
    key = ("quer", coords.tobytes(), coords.shape, schemes)
    hit = _cache_get(key)
    if hit is not None:
        return hit
    m = len(schemes)
    L = np.empty((m, anchors.d))
    h0 = np.empty(m)
    for k, scheme in enumerate(schemes):
        rows = coords[[i - 1 for i in scheme.anchor_indices]]
        w = np.asarray(scheme.signs, dtype=float)
        L[k] = 2.0 * (w @ rows)
        h0[k] = float(w @ np.einsum("sd,sd->s", rows, rows))
    L.flags.writeable = False
    h0.flags.writeable = False
    _STATIC_CACHE[key] = (L, h0)
    return L, h0


def build_linear_system(
    anchors: AnchorSet,
    schemes: list[ProbeScheme],
    lambdas_tilde,
    kappa_s: float | None = None,
) -> LinearSystem:
    """Assemble the pseudo-linear localization system from noisy readouts.

    Schemes are assumed valid (see validate_scheme); this runs once per
    trial inside the timed solve step, so only the measurement-dependent
    pieces (right-hand side and weights) are computed per call.
    """
    lam = np.asarray(lambdas_tilde, dtype=float)
    m = len(schemes)
    if m != lam.size or m < 1:
        raise ValueError("schemes and readouts must have equal nonzero length")
    L, h0 = _quer_static_parts(anchors, schemes)
    scale = float(kappa_s) if kappa_s is not None else max(1.0, float(np.abs(anchors.coords).max()))
    return LinearSystem(L=L, h_tilde=h0 - lam, weights=clamped_weights(lam, scale))


def _checked_lstsq(A: np.ndarray, b: np.ndarray, unknowns: int) -> np.ndarray:
    sol, _, rank, sv = np.linalg.lstsq(A, b, rcond=None)
    if rank < unknowns or sv[0] > COND_LIMIT * sv[-1]:
        raise SingularGeometryError(
            f"rank {rank}/{unknowns}, condition {sv[0] / max(sv[-1], 1e-300):.3g}"
        )
    return sol


def wls_solve(system: LinearSystem) -> Estimate:
    """Minimize ||sqrt(W)(L x - h_tilde)||^2 by scaled least squares."""
    if system.m < system.d:
        raise SingularGeometryError(f"{system.m} rangings cannot determine {system.d} coordinates")
    t0 = time.perf_counter()
    sw = np.sqrt(system.weights)
    x = _checked_lstsq(system.L * sw[:, None], system.h_tilde * sw, system.d)
    return Estimate(x, "wls", 0, time.perf_counter() - t0)


def _difference_static_parts(A0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Static pieces of the anchor-difference linearizations: 2 (a_i - a_1)
    and ||a_i||^2 - ||a_1||^2 for i = 2..m."""
    key = ("diff", A0.tobytes(), A0.shape)
    hit = _cache_get(key)
    if hit is not None:
        return hit
    sq = np.einsum("kd,kd->k", A0, A0)
    A = 2.0 * (A0[1:] - A0[0])
    dsq = sq[1:] - sq[0]
    A.flags.writeable = False
    dsq.flags.writeable = False
    _STATIC_CACHE[key] = (A, dsq)
    return A, dsq


def multilateration_init(anchor_coords, d_tildes) -> Estimate:
    """Linearized multilateration: subtract the first anchor's squared-distance
    equation from every other and solve the resulting linear system."""
    A0 = np.asarray(anchor_coords, dtype=float)
    d = np.asarray(d_tildes, dtype=float)
    m, dim = A0.shape
    if d.shape != (m,):
        raise ValueError("need one distance per anchor")
    if m < dim + 1:
        raise SingularGeometryError(
            f"{m} anchors give {m - 1} equations for {dim} unknowns (underdetermined)"
        )
    t0 = time.perf_counter()
    A, dsq = _difference_static_parts(A0)
    b = d[0] ** 2 - d[1:] ** 2 + dsq
    x = _checked_lstsq(A, b, dim)
    return Estimate(x, "multilateration", 0, time.perf_counter() - t0)


@dataclass(frozen=True)
class GdOptions:
    """Gradient-refinement knobs. grad_tol and collision_nudge are absolute
    lengths; campaign code scales them to 1e-9 * kappa_s."""

    max_iters: int = 500
    grad_tol: float = 1e-7
    initial_step: float = 1.0
    armijo: float = 1e-4
    collision_eps: float = 1e-12
    collision_nudge: float = 1e-7


def _range_residual_f(x, A0, d) -> float:
    diff = x - A0
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    resid = dist - d
    return float(resid @ resid)


def gd_objective(x, anchor_coords, d_tildes) -> tuple[float, np.ndarray]:
    """Range-residual objective f(x) = sum_i (||x - a_i|| - d_i)^2 and its gradient."""
    x = np.asarray(x, dtype=float)
    A0 = np.asarray(anchor_coords, dtype=float)
    d = np.asarray(d_tildes, dtype=float)
    diff = x - A0
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    resid = dist - d
    grad = 2.0 * (resid / dist) @ diff
    return float(resid @ resid), grad


def gd_refine(x0, anchor_coords, d_tildes, opts: GdOptions | None = None) -> Estimate:
    """Backtracking gradient descent on the range residuals from x0.

    The returned objective never exceeds f(x0).  If an iterate lands within
    collision_eps of an anchor (where the gradient is singular) it is nudged
    by collision_nudge along the first axis and descent continues.
    """
    opts = opts or GdOptions()
    A0 = np.asarray(anchor_coords, dtype=float)
    t0 = time.perf_counter()
    # plain-float inner loop: the instances are tiny (<= 10 anchors, d <= 3)
    # and the descent runs hundreds of iterations, where array overhead wins
    anchors = [tuple(row) for row in A0.tolist()]
    dlist = [float(v) for v in np.asarray(d_tildes, dtype=float)]
    x = [float(v) for v in np.asarray(x0, dtype=float)]
    dim = len(x)
    sqrt = math.sqrt
    eps = opts.collision_eps
    nudge = opts.collision_nudge

    def f_at(pt):
        s = 0.0
        for a, dv in zip(anchors, dlist):
            q = 0.0
            for j in range(dim):
                t = pt[j] - a[j]
                q += t * t
            r = sqrt(q) - dv
            s += r * r
        return s

    def fg_at(pt):
        # the gradient is singular on an anchor; nudge the point off it
        while True:
            f = 0.0
            g = [0.0] * dim
            collided = False
            for a, dv in zip(anchors, dlist):
                diff = [pt[j] - a[j] for j in range(dim)]
                q = 0.0
                for t in diff:
                    q += t * t
                dist = sqrt(q)
                if dist < eps:
                    pt = list(pt)
                    pt[0] += nudge
                    collided = True
                    break
                r = dist - dv
                f += r * r
                c = 2.0 * r / dist
                for j in range(dim):
                    g[j] += c * diff[j]
            if not collided:
                return pt, f, g

    x, f, g = fg_at(x)
    iters = 0
    for _ in range(opts.max_iters):
        gg = 0.0
        for v in g:
            gg += v * v
        if gg <= opts.grad_tol * opts.grad_tol:
            break
        step = opts.initial_step
        slope = opts.armijo * gg
        accepted = False
        while step >= 1e-18:
            cand = [x[j] - step * g[j] for j in range(dim)]
            if f_at(cand) <= f - step * slope:
                x, f, g = fg_at(cand)
                iters += 1
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    return Estimate(np.array(x), "multilateration+gd", iters, time.perf_counter() - t0)


def multilateration_init_batch(anchor_coords, d_tilde_matrix) -> np.ndarray:
    """Vectorized multilateration over many trials sharing one anchor set.

    The linear system's matrix depends only on the anchors, so all trials are
    solved through a single multi-right-hand-side least squares call.
    d_tilde_matrix has one row of anchor distances per trial; returns one
    position row per trial.
    """
    A0 = np.asarray(anchor_coords, dtype=float)
    D = np.asarray(d_tilde_matrix, dtype=float)
    m, dim = A0.shape
    if D.ndim != 2 or D.shape[1] != m:
        raise ValueError("need one distance per anchor per trial")
    if m < dim + 1:
        raise SingularGeometryError(
            f"{m} anchors give {m - 1} equations for {dim} unknowns (underdetermined)"
        )
    sq = np.sum(A0 * A0, axis=1)
    A = 2.0 * (A0[1:] - A0[0])
    B = (D[:, :1] ** 2 - D[:, 1:] ** 2 + (sq[1:] - sq[0])[None, :]).T
    sol, _, rank, sv = np.linalg.lstsq(A, B, rcond=None)
    if rank < dim or sv[0] > COND_LIMIT * sv[-1]:
        raise SingularGeometryError(
            f"rank {rank}/{dim}, condition {sv[0] / max(sv[-1], 1e-300):.3g}"
        )
    return sol.T


class _BatchWorkspace:
    """Preallocated buffers for the batched range-residual evaluations; the
    inner descent loop runs thousands of full-batch passes, so temporaries
    dominate without reuse."""

    def __init__(self, r: int, k: int, d: int):
        self.diff = np.empty((r, k, d))
        self.dist2 = np.empty((r, k))
        self.dist = np.empty((r, k))
        self.resid = np.empty((r, k))
        self.f = np.empty(r)
        self.cand = np.empty((r, d))

    def f_only(self, X, A0, D) -> np.ndarray:
        np.subtract(X[:, None, :], A0[None, :, :], out=self.diff)
        np.einsum("tkd,tkd->tk", self.diff, self.diff, out=self.dist2)
        np.sqrt(self.dist2, out=self.dist)
        np.subtract(self.dist, D, out=self.resid)
        return np.einsum("tk,tk->t", self.resid, self.resid, out=self.f)

    def f_and_grad(self, X, A0, D, collision_eps: float):
        f = self.f_only(X, A0, D).copy()
        np.maximum(self.dist, collision_eps, out=self.dist)
        scale = self.resid / self.dist
        grad = 2.0 * np.einsum("tk,tkd->td", scale, self.diff)
        return f, grad


def gd_refine_batch(X0, anchor_coords, d_tilde_matrix, opts: GdOptions | None = None):
    """Vectorized gd_refine over many trials (same descent rule per trial:
    backtracking with halving from initial_step, Armijo acceptance, stop at
    grad_tol or max_iters).  Anchor collisions are regularized by clamping
    distances to collision_eps instead of nudging; identical behavior except
    on the measure-zero collision set.  Returns (positions, iteration counts).
    """
    opts = opts or GdOptions()
    A0 = np.asarray(anchor_coords, dtype=float)
    D = np.asarray(d_tilde_matrix, dtype=float)
    X = np.array(X0, dtype=float)
    r, dim = X.shape
    ws = _BatchWorkspace(r, A0.shape[0], dim)

    F, G = ws.f_and_grad(X, A0, D, opts.collision_eps)
    iters = np.zeros(r, dtype=int)
    active = np.ones(r, dtype=bool)
    cand = ws.cand
    for _ in range(opts.max_iters):
        gnorm2 = np.einsum("td,td->t", G, G)
        active &= gnorm2 > opts.grad_tol**2
        if not np.any(active):
            break
        step = np.where(active, opts.initial_step, 0.0)
        pending = active.copy()
        moved = False
        while np.any(pending):
            np.multiply(step[:, None], G, out=cand)
            np.subtract(X, cand, out=cand)
            fc = ws.f_only(cand, A0, D)
            accept = pending & (fc <= F - opts.armijo * step * gnorm2)
            if np.any(accept):
                X[accept] = cand[accept]
                F[accept] = fc[accept]
                iters[accept] += 1
                moved = True
            pending &= ~accept
            step[pending] *= 0.5
            stalled = pending & (step < 1e-18)
            if np.any(stalled):
                active[stalled] = False
                pending &= ~stalled
        if not moved:
            break
        F, G = ws.f_and_grad(X, A0, D, opts.collision_eps)
    return X, iters


def tdoa_chan_solve(anchor_coords, range_diffs, two_stage: bool = True) -> Estimate:
    """Pseudo-linear TDoA solve in the unknowns (x, d1).

    Stage 1 solves 2 (a_i - a_1)^T x + 2 r_i d1 = ||a_i||^2 - ||a_1||^2 - r_i^2
    for i = 2..m by least squares.  Stage 2 (default) re-solves with rows
    weighted by the inverse squared source-anchor distances estimated from the
    stage-1 d1.  The d1 estimate is recorded for diagnostics and is not
    constrained to be nonnegative.
    """
    A0 = np.asarray(anchor_coords, dtype=float)
    r = np.asarray(range_diffs, dtype=float)
    m, dim = A0.shape
    if r.shape != (m - 1,):
        raise ValueError("need one range difference per non-reference anchor")
    if m < dim + 2:
        raise SingularGeometryError(
            f"{m} anchors give {m - 1} equations for {dim + 1} unknowns (underdetermined)"
        )
    t0 = time.perf_counter()
    Adiff, dsq = _difference_static_parts(A0)
    scale = max(1.0, float(np.abs(A0).max()))
    if float(np.abs(r).max()) <= 1e-12 * scale:
        # vanishing differences carry no reference-distance information; the
        # position is still determined by the anchor-difference equations
        x = _checked_lstsq(Adiff, dsq, dim)
        d1 = float(np.linalg.norm(x - A0[0]))
        return Estimate(x, "tdoa-chan", 0, time.perf_counter() - t0, d1_hat=d1)
    A = np.hstack([Adiff, 2.0 * r[:, None]])
    b = dsq - r * r
    sol = _checked_lstsq(A, b, dim + 1)
    d1 = float(sol[dim])
    if two_stage:
        floor = 1e-9 * max(scale, float(np.abs(r).max()))
        row_scale = 1.0 / np.maximum(np.abs(d1 + r), floor)
        sol = _checked_lstsq(A * row_scale[:, None], b * row_scale, dim + 1)
        d1 = float(sol[dim])
    return Estimate(sol[:dim], "tdoa-chan", 0, time.perf_counter() - t0, d1_hat=d1)
