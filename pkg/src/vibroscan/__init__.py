"""Vibrotactile texture mapping toolkit.

Builds pixel-registered vibration intensity maps from raster-scan sensor
data (simulated or recorded), and streams position-dependent vibrotactile
feedback from those maps over a small client-server protocol.
"""

__version__ = "0.1.0"

from . import alignment, client, geometry, protocol, scansim, server, vibmap  # noqa: F401
from .cli import main  # noqa: F401
