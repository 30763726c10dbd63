"""
capillary-bubble-lab: numerical laboratory for capillary mu-bubbles in axisymmetric warped products.

Provides background comparison data, free-boundary prescribed mean curvature solvers,
stability spectra, rigidity audits, and tangent-cone / barrier asymptotics.
"""

__version__ = "0.1.0"
