"""Drag and lift coefficient estimation from flight telemetry with total-error bounds."""
__version__ = "0.1.0"
