"""Simulation and exact analysis of the East process and OFA-jf tree models."""

from .engine import (Boundary, CheckFailure, EventStream, LatticeState, Params,
                     ResourceCapError, UsageError, __version__, run)

__all__ = ["Boundary", "CheckFailure", "EventStream", "LatticeState", "Params",
           "ResourceCapError", "UsageError", "__version__", "run"]
