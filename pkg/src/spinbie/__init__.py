"""Clifford-algebra boundary integral equations for Dirac and Maxwell problems.

Submodules
----------
clifford    multivector algebra on the exterior algebra of C^2 and C^3
geometry    boundary curves and triangulated surfaces
kernels     fundamental solutions and manufactured fields
quadrature  singular panel integrals on flat triangles
operators   Nystrom matrices of Cauchy, double layer and reflection operators
solvers     dense solves, condition numbers, restricted maps
scattering  boundary value problem drivers and sweeps
mellin      Mellin symbols of the Cauchy operator on a planar cone
cli         JSON-configured experiment runner

Submodules are not imported here so that thread limits set by the command
line runner take effect before the numerical libraries load.
"""

__version__ = "0.1.0"

__all__ = ["clifford", "geometry", "kernels", "quadrature", "operators", "solvers", "scattering", "mellin", "cli"]
