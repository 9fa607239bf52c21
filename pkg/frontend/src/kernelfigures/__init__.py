"""Diagnostic figures from persisted kernellab run directories.

This package never imports the solver: it consumes only the CSV/JSON
artifacts listed in a run manifest, renders deterministically, and leaves
the run directory untouched.
"""

__version__ = "0.1.0"

from .render import FigureRequest, MissingArtifactError, render

__all__ = ["FigureRequest", "MissingArtifactError", "render"]
