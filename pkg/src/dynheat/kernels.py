"""Kernels of the exterior-ball boundary calculus.

Four pointwise objects, all in dimension N >= 3:

* the Poisson kernel of the unit ball,
      P(x, y) = c_N (1 - |x|^2) / |x - y|^N,   |x| <= 1, |y| = 1,
  normalized so that P(x, .) has unit integral over the sphere;
* its Kelvin transform to the exterior domain {|x| > 1},
      K(x, y) = |x|^{-(N-2)} P(x / |x|^2, y);
* the dilation-evolved kernel  K(e^t x, y); and
* the time derivative of the evolved kernel, evaluated through the
  closed form
      d/dt K(e^t x, y) = K(X, y) [2 - N + 2/(|X|^2 - 1)
                                  + N (1 - X.y)/|X - y|^2],  X = e^t x,
  which avoids differencing noise near the boundary.

The sphere integral of the evolved kernel has the exact value
(e^t |x|)^{-(N-2)}; `kernel_mass` returns it and the quadrature tests
use it as the primary contract.

All evaluators accept a single sphere point of shape (N,) or a batch of
shape (m, N) and are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularEvaluationError

_UNIT_TOL = 1e-12


def sphere_area(dim: int) -> float:
    """Surface area of the unit sphere S^{dim-1} in R^dim."""
    if dim < 2:
        raise ValueError(f"dimension must be >= 2, got {dim}")
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


@dataclass(frozen=True)
class KernelContext:
    """Dimension and the Poisson normalization constant.

    c_N is computed as the reciprocal of the sphere area rather than
    hard-coded per dimension; the quadrature normalization test is the
    check that this choice is the right one.
    """

    dim: int
    c_n: float = field(init=False)

    def __post_init__(self):
        if self.dim < 3:
            raise ValueError(f"kernel calculus requires dim >= 3, got {self.dim}")
        object.__setattr__(self, "c_n", 1.0 / sphere_area(self.dim))


def _as_batch(ctx: KernelContext, y) -> tuple[np.ndarray, bool]:
    """Coerce y to shape (m, dim), validating unit norms."""
    arr = np.asarray(y, dtype=float)
    scalar = arr.ndim == 1
    if scalar:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != ctx.dim:
        raise ValueError(f"sphere points must have dimension {ctx.dim}")
    norms = np.linalg.norm(arr, axis=1)
    if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise ValueError(f"sphere point off the unit sphere by {worst:.3e}")
    return arr, scalar


def _as_point(ctx: KernelContext, x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (ctx.dim,):
        raise ValueError(f"point must have shape ({ctx.dim},)")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point has non-finite coordinates")
    return arr


def poisson_kernel(ctx: KernelContext, x, y):
    """Poisson kernel c_N (1 - |x|^2)/|x - y|^N for |x| <= 1.

    Returns a scalar for a single y or an array for a batch.  A node
    coinciding with x raises SingularEvaluationError instead of
    returning infinity, so quadrature rules fail loudly.
    """
    xa = _as_point(ctx, x)
    ya, scalar = _as_batch(ctx, y)
    r2 = float(xa @ xa)
    if r2 > 1.0 + _UNIT_TOL:
        raise ValueError(f"poisson_kernel requires |x| <= 1, got |x|={math.sqrt(r2):.6g}")
    diff = ya - xa[None, :]
    dist2 = np.einsum("ij,ij->i", diff, diff)
    if np.any(dist2 == 0.0):
        raise SingularEvaluationError("poisson kernel evaluated at x = y")
    vals = ctx.c_n * max(1.0 - r2, 0.0) * dist2 ** (-ctx.dim / 2.0)
    return float(vals[0]) if scalar else vals


def kelvin_kernel(ctx: KernelContext, x, y):
    """Kelvin-transformed kernel |x|^{-(N-2)} P(x/|x|^2, y) for |x| >= 1.

    Vanishes identically on |x| = 1 away from y; the coincident boundary
    point is singular.
    """
    xa = _as_point(ctx, x)
    rad = float(np.linalg.norm(xa))
    if rad < 1.0 - _UNIT_TOL:
        raise ValueError(f"kelvin_kernel requires |x| >= 1, got |x|={rad:.6g}")
    image = xa / (rad * rad)
    vals = poisson_kernel(ctx, image, y)
    return rad ** (-(ctx.dim - 2)) * vals


def evolving_kernel(ctx: KernelContext, x, y, t: float):
    """Kernel at the dilated point: K(e^t x, y), t >= 0."""
    if t < 0.0:
        raise ValueError(f"evolution time must be >= 0, got {t}")
    xa = _as_point(ctx, x)
    return kelvin_kernel(ctx, math.exp(t) * xa, y)


def dt_evolving_kernel(ctx: KernelContext, x, y, t: float):
    """Time derivative of the evolved kernel via the closed form.

    Requires e^t |x| > 1 strictly: the 2/(|X|^2 - 1) term blows up on
    the sphere (while K vanishes there, the product has a finite
    nonzero limit that this evaluator does not take).
    """
    xa = _as_point(ctx, x)
    big_x = math.exp(t) * xa
    rad2 = float(big_x @ big_x)
    if rad2 <= 1.0 + _UNIT_TOL:
        raise SingularEvaluationError(
            f"dt kernel needs e^t|x| > 1, got e^t|x| = {math.sqrt(rad2):.12g}"
        )
    ya, scalar = _as_batch(ctx, y)
    kval = kelvin_kernel(ctx, big_x, ya)
    diff = big_x[None, :] - ya
    dist2 = np.einsum("ij,ij->i", diff, diff)
    dots = ya @ big_x
    n = ctx.dim
    bracket = (2.0 - n) + 2.0 / (rad2 - 1.0) + n * (1.0 - dots) / dist2
    vals = kval * bracket
    return float(vals[0]) if scalar else vals


def kernel_mass(ctx: KernelContext, radius: float, t: float) -> float:
    """Exact sphere integral of the evolved kernel: (e^t radius)^{-(N-2)}."""
    if radius < 1.0 - _UNIT_TOL:
        raise ValueError(f"kernel_mass requires radius >= 1, got {radius}")
    scaled = math.exp(t) * radius
    if scaled < 1.0 - _UNIT_TOL:
        raise ValueError(f"kernel_mass requires e^t radius >= 1, got {scaled}")
    return scaled ** (-(ctx.dim - 2))


def dt_kernel_bound(ctx: KernelContext, x, t: float) -> float:
    """Pointwise envelope N e^t|x| / (e^t|x| - 1) multiplying the kernel.

    |d/dt K(e^t x, y)| <= dt_kernel_bound(ctx, x, t) * K(e^t x, y).
    """
    xa = _as_point(ctx, x)
    rad = math.exp(t) * float(np.linalg.norm(xa))
    if rad <= 1.0:
        raise SingularEvaluationError("bound undefined at e^t|x| <= 1")
    return ctx.dim * rad / (rad - 1.0)
