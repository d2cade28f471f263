"""Numerics for the stability of the Poincare-Sobolev inequality on hyperbolic space.

Modules: geometry (ball model, grids, quadrature), extremal (ground states),
spectral (linearised spectrum), stability (deficit and distances), flow
(fast diffusion), euclidean (Aubin-Talenti bubbles), hsm (cylindrical lifting)
and cli.
"""

__version__ = "0.1.0"
