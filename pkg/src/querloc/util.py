"""Small shared numeric helpers."""
from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angle(x):
    """Reduce an angle (scalar or array) to the interval (-pi, pi]."""
    w = np.remainder(x, TWO_PI)
    w = np.where(w > np.pi, w - TWO_PI, w)
    if np.ndim(x) == 0:
        return float(w)
    return w


def format_float(x) -> str:
    """Render a float with 17 significant digits (round-trip safe, locale-free)."""
    return "%.17g" % float(x)
