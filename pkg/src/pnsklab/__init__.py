"""1D numerical laboratory for a viscous liquid-vapor flow: the detailed
parabolic relaxation model with Korteweg-type coupling, and the effective
model that evolves a per-cell Young measure through a kinetic equation
closed by its density and pressure moments.
"""

from .errors import (
    BlowUpError,
    CourantError,
    DomainError,
    PnskLabError,
    QuadratureError,
    UnsupportedLawError,
    ValidationError,
)
from .grid import FluidState, Grid1D
from .hydro import EnergyReport, Params
from .measure import AtomicMeasure, CDFGrid, MeasureField
from .pressure import PressureLaw, SpinodalInfo

__all__ = [
    "AtomicMeasure",
    "BlowUpError",
    "CDFGrid",
    "CourantError",
    "DomainError",
    "EnergyReport",
    "FluidState",
    "Grid1D",
    "MeasureField",
    "Params",
    "PnskLabError",
    "PressureLaw",
    "QuadratureError",
    "SpinodalInfo",
    "UnsupportedLawError",
    "ValidationError",
]

__version__ = "0.1.0"
