"""Static reproduction plots for aopsolver CSV result tables."""

from .jobs import FIGURE_IDS, FigureJob, SchemaError, render

__version__ = "0.1.0"

__all__ = ["FIGURE_IDS", "FigureJob", "SchemaError", "render", "__version__"]
