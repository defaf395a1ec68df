"""Spectral laboratory for a single-jump quantum stochastic evolution.

Units: hbar = 1 throughout.
"""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
