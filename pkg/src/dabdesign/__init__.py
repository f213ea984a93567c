"""Modulation design toolkit for dual active bridge converters."""

__version__ = "0.1.0"
