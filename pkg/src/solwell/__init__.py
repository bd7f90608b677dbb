"""solwell: 1D Gross-Pitaevskii dynamics of a soliton in a truncated well.

Units are hbar = 1, m = 1/2 throughout: the kinetic term is -d^2/dx^2 and
phase gradients translate to velocity as v = 2 d(arg psi)/dx.
"""

from ._kernels import BACKEND as kernel_backend
from .grid import ComplexField, Grid1D, RealField, derivative, inner_product, integrate
from .potentials import Harmonic, Tabulated, TruncatedWell

__version__ = "0.1.0"

__all__ = [
    "ComplexField",
    "Grid1D",
    "Harmonic",
    "RealField",
    "Tabulated",
    "TruncatedWell",
    "derivative",
    "inner_product",
    "integrate",
    "kernel_backend",
    "__version__",
]
