"""Offline figure rendering for the localization simulator's CSV tables."""

from .figures import FIGURE_KINDS, FigureSpec, render

__version__ = "0.1.0"
