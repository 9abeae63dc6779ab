"""Qubit process tomography by maximum likelihood restricted to completely positive maps."""

__version__ = "0.1.0"
