"""Product quadrature on the unit sphere S^{N-1}, N in {3, 4, 5}.

The rule is built recursively: a sphere point is written y = (u, s*y'),
u in [-1, 1], s = sqrt(1 - u^2), y' in S^{N-2}, under which the measure
factors as (1 - u^2)^{(N-3)/2} du dsigma(y').  Each polar layer uses the
Gauss rule for that weight (Gauss-Gegenbauer with exponent (N-3)/2,
which is plain Gauss-Legendre when N = 3) and the innermost circle uses
equispaced angles, exact for trigonometric polynomials.  Weights are
therefore exactly positive and sum to the sphere area to rounding.

Node counts per level: 16*level points per polar layer, 32*level on the
circle; polynomial exactness 32*level - 1 in total degree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_gegenbauer

from .kernels import sphere_area

_SUPPORTED_DIMS = (3, 4, 5)


@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    nodes: np.ndarray  # (m, dim), unit vectors
    weights: np.ndarray  # (m,), positive
    level: int
    exactness: int

    def __post_init__(self):
        if self.nodes.shape != (self.weights.size, self.dim):
            raise ValueError("node/weight shape mismatch")
        if np.any(self.weights <= 0.0):
            raise ValueError("quadrature weights must be positive")


def _circle_rule(level: int) -> tuple[np.ndarray, np.ndarray]:
    m = 32 * level
    angles = 2.0 * np.pi * np.arange(m) / m
    nodes = np.column_stack([np.cos(angles), np.sin(angles)])
    weights = np.full(m, 2.0 * np.pi / m)
    return nodes, weights


def _sphere_rule(dim: int, level: int) -> tuple[np.ndarray, np.ndarray]:
    if dim == 2:
        return _circle_rule(level)
    sub_nodes, sub_weights = _sphere_rule(dim - 1, level)
    # Gauss rule for the layer weight (1-u^2)^{(dim-3)/2}: Gegenbauer
    # index alpha satisfies alpha - 1/2 = (dim-3)/2.
    u, wu = roots_gegenbauer(16 * level, (dim - 2) / 2.0)
    s = np.sqrt(np.maximum(1.0 - u * u, 0.0))
    nodes = np.empty((u.size * sub_nodes.shape[0], dim))
    nodes[:, 0] = np.repeat(u, sub_nodes.shape[0])
    nodes[:, 1:] = np.repeat(s, sub_nodes.shape[0])[:, None] * np.tile(
        sub_nodes, (u.size, 1)
    )
    weights = np.outer(wu, sub_weights).ravel()
    return nodes, weights


def build_rule(dim: int, level: int) -> QuadratureRule:
    """Product rule on S^{dim-1} with refinement parameter level >= 1."""
    if dim not in _SUPPORTED_DIMS:
        raise ValueError(f"supported dimensions are {_SUPPORTED_DIMS}, got {dim}")
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    nodes, weights = _sphere_rule(dim, level)
    # renormalize unit vectors against accumulated rounding
    nodes /= np.linalg.norm(nodes, axis=1)[:, None]
    return QuadratureRule(
        dim=dim, nodes=nodes, weights=weights, level=level, exactness=32 * level - 1
    )


def integrate(rule: QuadratureRule, f) -> float:
    """Sum of weights * f(node).

    f may be vectorized over an (m, dim) array of nodes or accept one
    point at a time; evaluation errors (kernel singularities at nodes)
    propagate.
    """
    try:
        vals = np.asarray(f(rule.nodes), dtype=float)
        if vals.shape != (rule.weights.size,):
            raise ValueError("not vectorized")
    except (TypeError, ValueError):
        vals = np.array([float(f(y)) for y in rule.nodes])
    return float(rule.weights @ vals)


def integrate_to_convergence(
    dim: int,
    f,
    level: int = 1,
    tol: float = 1e-7,
    max_doublings: int = 5,
) -> float:
    """Integrate with level doubling until successive values settle.

    Needed for sharply peaked integrands (the Kelvin kernel near the
    boundary); doubles the level until two successive values differ by
    less than tol, returning the finer one.
    """
    value = integrate(build_rule(dim, level), f)
    for _ in range(max_doublings):
        level *= 2
        refined = integrate(build_rule(dim, level), f)
        if abs(refined - value) < tol:
            return refined
        value = refined
    return value


def monomial_integral(exponents) -> float:
    """Exact integral of prod y_i^{a_i} over the unit sphere.

    Zero when any exponent is odd; otherwise
    2 * prod Gamma((a_i+1)/2) / Gamma(sum (a_i+1)/2).
    Serves as the oracle for the polynomial-exactness tests.
    """
    import math

    exps = list(exponents)
    if any(a % 2 for a in exps):
        return 0.0
    bs = [(a + 1) / 2.0 for a in exps]
    val = 2.0
    for b in bs:
        val *= math.gamma(b)
    return val / math.gamma(sum(bs))


__all__ = [
    "QuadratureRule",
    "build_rule",
    "integrate",
    "integrate_to_convergence",
    "monomial_integral",
    "sphere_area",
]
