"""Simulation of a photonics-assisted joint radar and communication link.

A QPSK-sliced chirp is generated optically, used as a radar pulse (de-chirp
ranging and turntable ISAR) and as a data carrier (coherent de-chirp QPSK).
"""

__version__ = "0.1.0"

from .errors import ConfigError, SimulationError  # noqa: E402

__all__ = ["ConfigError", "SimulationError", "__version__"]
