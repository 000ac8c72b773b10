"""spikesolve - spike recovery from noisy generalized moments with the BLASSO."""

from __future__ import annotations

try:
    from ._version import __version__
except ImportError:  # source checkout without a build
    __version__ = "0.0.0+unknown"

__all__ = ["__version__"]
