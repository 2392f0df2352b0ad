"""Overlapping-circle substructuring for 2D elliptic Dirichlet problems.

The interfacial unknowns satisfy a sparse system ``C u = r`` whose rows come
from local pseudospectral solves on interior (floating) circles and from
Feynman-Kac Monte Carlo on circles cut by the boundary (perimeter circles).
The system is solved with GMRES preconditioned by restricted additive Schwarz.
"""
from .errors import CircddError
from .problem import EllipticProblem, RectDomain, builtin_problem

__all__ = ["CircddError", "EllipticProblem", "RectDomain", "builtin_problem"]
__version__ = "0.1.0"
