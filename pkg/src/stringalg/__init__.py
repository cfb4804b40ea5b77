"""Exact Fourier calculus on flat complex tori for string algebroids.

Submodules
----------
forms       trigonometric-polynomial and grid differential forms
cohomology  Dolbeault, Bott-Chern and Aeppli classes of invariant forms
gauge       pairings, connections, curvature, Chern-Simons and reductions
courant     string algebroid data, Dorfman bracket, liftings
picard      Picard group elements, adjoint action, Aeppli homomorphism
dilaton     dilaton functional, symplectic and metric structures, moment map
moduli      linearized operators, gauge fixing and moduli metrics
cli         scenario-driven verification and sweep data
"""

from . import cohomology, courant, dilaton, forms, gauge, moduli, picard
from .forms import GridForm, TorusFrame, TrigForm
from .gauge import Connection, PairingSpec
from .courant import CourantData, CourantSection
from .dilaton import Configuration, TangentW
from .moduli import IntersectionRing

__version__ = "0.1.0"

__all__ = [
    "cohomology",
    "courant",
    "dilaton",
    "forms",
    "gauge",
    "moduli",
    "picard",
    "TorusFrame",
    "TrigForm",
    "GridForm",
    "PairingSpec",
    "Connection",
    "CourantData",
    "CourantSection",
    "Configuration",
    "TangentW",
    "IntersectionRing",
]
