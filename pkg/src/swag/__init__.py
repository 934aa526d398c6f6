"""Style transfer with activation smoothing, plus the diagnostics used to study it."""

__version__ = "0.1.0"
