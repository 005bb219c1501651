"""Limit evolution driven by boundary data, and its time derivative.

The boundary-driven evolution sends a datum psi on the unit sphere to

    [S2(t) psi](x) = integral over the sphere of K(x, y, t) psi(y),

with K the evolving exterior kernel from `kernels`.  For constant psi
the mass identity collapses this to the closed form
psi0 * (e^t |x|)^{-(N-2)}, which is exact and is the path the radial
solvers rely on; general data go through spherical quadrature.  The
companion forcing term

    [F1 psi](x, t) = integral of dt K(x, y, t) psi(y)

is the time derivative of S2, with closed form
-(N-2) psi0 e^{-(N-2)t} |x|^{-(N-2)} for constant data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .kernels import KernelContext, dt_evolving_kernel, evolving_kernel
from .sphere_quadrature import integrate_to_convergence

# below this scaled radius the kernel peaks sharply and quadrature
# starts from a finer base level; node counts grow like level^(2(N-2))
# so the base must shrink with dimension
_PEAK_RADIUS = 1.1
_BASE_LEVEL = {3: 2, 4: 1, 5: 1}
_PEAK_LEVEL = {3: 4, 4: 2, 5: 1}
_QUAD_TOL = 1e-7


def _start_level(dim: int, scaled: float) -> int:
    table = _PEAK_LEVEL if scaled < _PEAK_RADIUS else _BASE_LEVEL
    return table[dim]


@dataclass(frozen=True)
class BoundaryDatum:
    """Datum on the unit sphere: a constant or a sampled function."""

    kind: str
    value: float = 0.0
    func: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("constant", "sampled"):
            raise ValueError(f"unknown datum kind {self.kind!r}")
        if self.kind == "constant" and not math.isfinite(self.value):
            raise ValueError("constant datum must be finite")
        if self.kind == "sampled" and self.func is None:
            raise ValueError("sampled datum needs a function")

    @staticmethod
    def constant(value: float) -> "BoundaryDatum":
        return BoundaryDatum(kind="constant", value=float(value))

    @staticmethod
    def sampled(func: Callable) -> "BoundaryDatum":
        return BoundaryDatum(kind="sampled", func=func)


def limit_profile(dim: int, boundary_value: float, r, t):
    """Closed-form limit solution (e^t r)^{-(N-2)} * boundary_value.

    Vectorized over radii r >= 1; this is what the direct solver's
    output is compared against.
    """
    if dim < 3:
        raise ValueError("dimension must be >= 3")
    r = np.asarray(r, dtype=float)
    if np.any(r < 1.0):
        raise ValueError("radii must be >= 1")
    return boundary_value * (math.exp(t) * r) ** (-(dim - 2.0))


def _eval_datum(func, nodes: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(func(nodes), dtype=float)
        if vals.shape == (nodes.shape[0],):
            return vals
    except (TypeError, ValueError):
        pass
    return np.array([float(func(y)) for y in nodes])


def _scaled_radius(x, t: float) -> float:
    return math.exp(t) * float(np.linalg.norm(np.asarray(x, dtype=float)))


def s2_apply(ctx: KernelContext, psi: BoundaryDatum, x, t: float) -> float:
    """Evaluate the boundary-driven evolution of psi at (x, t).

    Constant data use the exact closed form (valid down to the
    boundary); sampled data integrate the evolving kernel against psi
    with adaptive level escalation near the kernel peak.
    """
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    scaled = _scaled_radius(x, t)
    if psi.kind == "constant":
        if scaled < 1.0 - 1e-12:
            raise ValueError("point must satisfy e^t |x| >= 1")
        return psi.value * scaled ** (-(ctx.dim - 2.0))
    if scaled <= 1.0:
        raise ValueError("sampled data need e^t |x| > 1")

    def integrand(nodes):
        return evolving_kernel(ctx, x, nodes, t) * _eval_datum(psi.func, nodes)

    return integrate_to_convergence(
        ctx.dim, integrand, level=_start_level(ctx.dim, scaled), tol=_QUAD_TOL
    )


def f1_apply(ctx: KernelContext, psi: BoundaryDatum, x, t: float) -> float:
    """Time derivative of s2_apply: the forcing the interior feels."""
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    scaled = _scaled_radius(x, t)
    if scaled <= 1.0:
        raise ValueError("need e^t |x| > 1")
    n = ctx.dim
    if psi.kind == "constant":
        rad = float(np.linalg.norm(np.asarray(x, dtype=float)))
        return -(n - 2.0) * psi.value * math.exp(-(n - 2.0) * t) * rad ** (-(n - 2.0))

    def integrand(nodes):
        return dt_evolving_kernel(ctx, x, nodes, t) * _eval_datum(psi.func, nodes)

    return integrate_to_convergence(
        ctx.dim, integrand, level=_start_level(ctx.dim, scaled), tol=_QUAD_TOL
    )


def f1_envelope(ctx: KernelContext, x, t: float, psi_sup: float) -> float:
    """Upper bound N s (s-1)^{-1} s^{-(N-2)} sup|psi| with s = e^t |x|."""
    scaled = _scaled_radius(x, t)
    if scaled <= 1.0:
        raise ValueError("need e^t |x| > 1")
    n = ctx.dim
    return n * scaled ** (-(n - 2.0)) * scaled / (scaled - 1.0) * psi_sup
