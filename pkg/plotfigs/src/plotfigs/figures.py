"""Figure data preparation and rendering for the four figure kinds.

Data preparation is pure (testable without a display); rendering uses the
Agg backend with fixed styles and pinned image metadata so re-rendering the
same CSVs is byte-stable.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .csvio import load_dynamics, load_errors, load_results

FIGURE_KINDS = ("rmse", "cdf", "boxes", "dynamics")

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "svg.hashsalt": "plotfigs",
}
_METADATA = {"Software": "plotfigs"}
_COLORS = ("#0173b2", "#de8f05", "#029e73", "#d55e00", "#cc78bc", "#949494")


class EmptySelectionError(ValueError):
    """The requested filters matched no rows."""


@dataclass
class FigureSpec:
    """What to render: figure kind, input CSV, output image, filters."""

    kind: str
    input_path: Path
    output_path: Path
    methods: tuple[str, ...] | None = None
    m: int | None = None
    rho: float | None = None
    logy: bool = False

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; choose from {FIGURE_KINDS}")
        self.input_path = Path(self.input_path)
        self.output_path = Path(self.output_path)


def _match(row, spec: FigureSpec, check_rho: bool = False) -> bool:
    if spec.methods and row["method"] not in spec.methods:
        return False
    if spec.m is not None and row["m"] != spec.m:
        return False
    if check_rho and spec.rho is not None and not np.isclose(row["rho"], spec.rho):
        return False
    return True


def _unique_in_order(values):
    seen = []
    for v in values:
        if v not in seen:
            seen.append(v)
    return seen


def _pick_single_m(rows, spec) -> list[dict]:
    ms = _unique_in_order(r["m"] for r in rows)
    if spec.m is None and len(ms) > 1:
        raise EmptySelectionError(
            f"input holds several ranging counts {ms}; select one with --m"
        )
    return rows if spec.m is None else [r for r in rows if r["m"] == spec.m]


def rmse_curves(rows, spec: FigureSpec):
    """Per-method (rho, rmse) curves plus the (rho, bound) overlay curve."""
    rows = [r for r in rows if _match(r, spec)]
    rows = _pick_single_m(rows, spec)
    if not rows:
        raise EmptySelectionError("no result rows match the filters")
    methods = _unique_in_order(r["method"] for r in rows)
    curves = {}
    for method in methods:
        pts = sorted(
            (r["rho"], r["rmse"]) for r in rows if r["method"] == method and r["rmse"] is not None
        )
        if pts:
            curves[method] = (np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
    bound_pts = sorted((r["rho"], r["crlb"]) for r in rows if r["crlb"] is not None)
    bound = (
        (np.array([p[0] for p in bound_pts]), np.array([p[1] for p in bound_pts]))
        if bound_pts
        else None
    )
    if not curves:
        raise EmptySelectionError("no populated RMSE values in the selection")
    return curves, bound


def cdf_curves(rows, spec: FigureSpec, points: int = 256):
    """Per-method empirical CDF curves of the trial errors."""
    rows = [r for r in rows if _match(r, spec, check_rho=True)]
    rows = _pick_single_m(rows, spec)
    rhos = _unique_in_order(r["rho"] for r in rows)
    if spec.rho is None and len(rhos) > 1:
        raise EmptySelectionError(f"input holds several noise levels {rhos}; select one with --rho")
    if not rows:
        raise EmptySelectionError("no error rows match the filters")
    top = max(r["error"] for r in rows)
    grid = np.linspace(0.0, top, points)
    curves = {}
    for method in _unique_in_order(r["method"] for r in rows):
        errors = np.sort([r["error"] for r in rows if r["method"] == method])
        frac = np.searchsorted(errors, grid, side="right") / errors.size
        curves[method] = (grid, frac)
    return curves


def box_groups(rows, spec: FigureSpec):
    """Per-noise-level clusters of per-method error samples.

    Returns (rho levels ascending, {method: [sample arrays, one per level]}).
    """
    rows = [r for r in rows if _match(r, spec)]
    rows = _pick_single_m(rows, spec)
    if not rows:
        raise EmptySelectionError("no error rows match the filters")
    rhos = sorted(set(r["rho"] for r in rows))
    methods = _unique_in_order(r["method"] for r in rows)
    groups = {
        method: [
            np.array([r["error"] for r in rows if r["method"] == method and r["rho"] == rho])
            for rho in rhos
        ]
        for method in methods
    }
    return rhos, groups


def dynamics_points(rows):
    if not rows:
        raise EmptySelectionError("dynamics CSV is empty")
    t = np.array([r["t"] for r in rows])
    disc = np.array([r["abs_discrepancy"] for r in rows])
    filt = np.array([r["filtered"] for r in rows])
    return t, disc, filt


def _rho_label(rho: float) -> str:
    return f"{rho * 100:g}%"


def render(spec: FigureSpec) -> Path:
    """Render one figure to spec.output_path; returns the written path."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        if spec.kind == "rmse":
            curves, bound = rmse_curves(load_results(spec.input_path), spec)
            for color, (method, (rho, rmse)) in zip(_COLORS, curves.items()):
                ax.plot(rho, rmse, marker="o", markersize=3, color=color, label=method)
            if bound is not None:
                ax.plot(bound[0], bound[1], "k--", linewidth=1.2, label="RMSE lower bound")
            if spec.logy:
                ax.set_yscale("log")
            ax.set_xlabel("noise factor")
            ax.set_ylabel("RMSE (m)")
            ax.legend()
        elif spec.kind == "cdf":
            curves = cdf_curves(load_errors(spec.input_path), spec)
            for color, (method, (grid, frac)) in zip(_COLORS, curves.items()):
                ax.plot(grid, frac, color=color, label=method)
            ax.set_xlabel("localization error (m)")
            ax.set_ylabel("fraction of trials")
            ax.set_ylim(0.0, 1.02)
            ax.legend(loc="lower right")
        elif spec.kind == "boxes":
            rhos, groups = box_groups(load_errors(spec.input_path), spec)
            n_methods = len(groups)
            width = 0.8 / n_methods
            for j, (color, (method, samples)) in enumerate(zip(_COLORS, groups.items())):
                positions = [i + (j - (n_methods - 1) / 2) * width for i in range(len(rhos))]
                ax.boxplot(
                    samples,
                    positions=positions,
                    widths=width * 0.85,
                    whis=1.5,
                    showfliers=False,
                    boxprops={"color": color},
                    whiskerprops={"color": color},
                    capprops={"color": color},
                    medianprops={"color": color},
                )
                ax.plot([], [], color=color, label=method)
            ax.set_xticks(range(len(rhos)))
            ax.set_xticklabels([_rho_label(r) for r in rhos])
            ax.set_xlabel("noise factor (one cluster per level)")
            ax.set_ylabel("localization error (m)")
            ax.legend()
            ax.annotate(
                "whiskers: 1.5 IQR",
                xy=(0.99, 0.99),
                xycoords="axes fraction",
                ha="right",
                va="top",
                fontsize=7,
            )
            if spec.logy:
                ax.set_yscale("log")
        else:  # dynamics
            t, disc, filt = dynamics_points(load_dynamics(spec.input_path))
            keep = ~filt
            positive = disc[keep] > 0
            ax.scatter(t[keep][positive], disc[keep][positive], s=2, color=_COLORS[0], label="scan points")
            if np.any(filt):
                ax.scatter(t[filt], disc[filt], s=6, color=_COLORS[3], marker="x", label="filtered")
            ax.set_yscale("log")
            ax.set_xlabel("time of flight (s)")
            ax.set_ylabel("|phase - quadratic law| (rad)")
            ax.legend(loc="upper left")
        fig.tight_layout()
        spec.output_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.output_path, metadata=_METADATA)
        plt.close(fig)
    return spec.output_path
