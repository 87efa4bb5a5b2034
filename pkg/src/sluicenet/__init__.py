"""Multi-task sequence tagging with learned cross-task sharing."""

__version__ = "0.1.0"
