"""Numerical laboratory for exterior heat flow with a dynamical boundary condition.

Subpackages cover: kernel calculus on the unit sphere (kernels,
sphere_quadrature), the radial Dirichlet heat semigroup (radial_heat),
the direct stiff solver for the coupled boundary law (dynbc), the limit
semigroup and its forcing (limit_semigroup), the Duhamel fixed-point
solver (picard), heat-kernel lower bounds (lower_bound), auxiliary
estimate checks (analysis), and the sweep/report harness with its CLI
(harness, cli).
"""

__version__ = "0.1.0"
