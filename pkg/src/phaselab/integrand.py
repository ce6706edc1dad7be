"""Variational densities F(x, u, p): the double well, growth checks, residuals.

Built-in integrands are unit-periodic in x and u.  The double well is
evaluated through the reduction w = u - round(u), which equals W over one
period, extends it with exact floating-point periodicity under integer
shifts of representable inputs, and avoids the cancellation of computing the
fractional part near integers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import minimize as _minimize
from .field import GridError, ScalarField

#: Central second-difference step for Hessian probes: balances truncation and
#: roundoff for C^2 densities.
HESSIAN_PROBE_STEP = 1e-4


class IntegrandEvaluationError(RuntimeError):
    """Non-finite density value; carries the offending sample point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


def eval_double_well(u):
    """Periodic double well: W(frac(u)) with W(v) = v^2 (1 - v)^2.

    Vanishes exactly at every integer, peaks at 1/16 on the half-integers,
    and satisfies W(u) = W(1 - u).
    """
    arr = np.asarray(u, dtype=float)
    w = arr - np.round(arr)
    t = 1.0 - np.abs(w)
    out = (w * w) * (t * t)
    return float(out) if out.ndim == 0 else out


def double_well_derivative(u):
    """d/du of the periodic double well (continuous, 1-periodic)."""
    arr = np.asarray(u, dtype=float)
    f = arr - np.floor(arr)
    out = 2.0 * f * (1.0 - f) * (1.0 - 2.0 * f)
    return float(out) if out.ndim == 0 else out


def allen_cahn_density(u, p):
    """|p|^2 + W(u) with the periodic double well."""
    p = np.asarray(p, dtype=float)
    return np.sum(p * p, axis=-1) + eval_double_well(u)


@dataclass(frozen=True)
class Integrand:
    """Variational density with first derivatives and growth constant.

    ``density``, ``d_u`` and ``d_p`` are vectorized callables of
    ``(x, u, p)`` where ``x`` has shape ``(..., n)`` (or is None when
    ``depends_on_x`` is false), ``u`` has shape ``(...,)`` and ``p`` has
    shape ``(..., n)``.  They are expected to be unit-periodic in x and u.
    Evaluation is pure and reentrant.
    """

    name: str
    dimension: int
    density: Callable
    d_u: Callable
    d_p: Callable
    growth_constant: float = 1.0
    depends_on_x: bool = True

    def __post_init__(self):
        if self.growth_constant < 1.0:
            raise ValueError("growth constant must be >= 1")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")


def allen_cahn(dimension: int) -> Integrand:
    return Integrand(
        name="allen-cahn",
        dimension=dimension,
        density=lambda x, u, p: allen_cahn_density(u, p),
        d_u=lambda x, u, p: double_well_derivative(u),
        d_p=lambda x, u, p: 2.0 * np.asarray(p, dtype=float),
        growth_constant=2.0,
        depends_on_x=False,
    )


#: Integrands addressable by name from the batch front end.  User-defined
#: densities enter through the library API only.
REGISTRY = {"allen-cahn": allen_cahn}


def get_integrand(name: str, dimension: int) -> Integrand:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown integrand {name!r}; available: {sorted(REGISTRY)}"
        ) from None
    return factory(dimension)


@dataclass
class GrowthReport:
    """Sampled ellipticity and derivative-growth measurements."""

    samples: int
    seed: int
    rayleigh_min: float
    rayleigh_max: float
    rayleigh_bounds: tuple[float, float]
    first_order_max: float   # sup (|F_pu| + |F_px|) / (1 + |p|), directional
    second_order_max: float  # sup (|F_uu| + |F_ux| + |F_xx|) / (1 + |p|^2)
    violations: list
    passed: bool


def _sample_density(integrand, x, u, p):
    val = np.asarray(integrand.density(x, u, p), dtype=float)
    if not np.all(np.isfinite(val)):
        bad = int(np.argmin(np.isfinite(val).ravel()))
        point = {
            "x": None if x is None else np.asarray(x).reshape(-1, np.asarray(x).shape[-1])[bad].tolist(),
            "u": float(np.asarray(u).ravel()[bad]),
            "p": np.asarray(p).reshape(-1, np.asarray(p).shape[-1])[bad].tolist(),
        }
        raise IntegrandEvaluationError("non-finite density value", point=point)
    return val


def check_growth(
    integrand: Integrand,
    sample_count: int,
    seed: int,
    x_range: float = 2.0,
    u_range: float = 2.0,
    p_range: float = 3.0,
    tol: float = 1e-3,
) -> GrowthReport:
    """Statistical check of ellipticity and derivative growth.

    Draws random (x, u, p) samples and unit directions, probes second
    differences of the density with step :data:`HESSIAN_PROBE_STEP`, and
    flags Rayleigh quotients of the p-Hessian leaving
    [1/c - tol, c + tol] as well as mixed-derivative ratios exceeding the
    growth constant.  The check is sampled, not symbolic: the integrand is an
    opaque callback.
    """
    if sample_count < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    n = integrand.dimension
    S = sample_count
    x = rng.uniform(-x_range, x_range, size=(S, n))
    u = rng.uniform(-u_range, u_range, size=S)
    p = rng.uniform(-p_range, p_range, size=(S, n))
    xi = rng.normal(size=(S, n))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    eta = rng.normal(size=(S, n))
    eta /= np.linalg.norm(eta, axis=1, keepdims=True)
    d = HESSIAN_PROBE_STEP

    def f(xx, uu, pp):
        return _sample_density(integrand, xx if integrand.depends_on_x else None, uu, pp)

    base = f(x, u, p)
    ray = (f(x, u, p + d * xi) - 2.0 * base + f(x, u, p - d * xi)) / (d * d)

    f_pu = (
        f(x, u + d, p + d * xi) - f(x, u + d, p - d * xi)
        - f(x, u - d, p + d * xi) + f(x, u - d, p - d * xi)
    ) / (4.0 * d * d)
    f_px = (
        f(x + d * eta, u, p + d * xi) - f(x + d * eta, u, p - d * xi)
        - f(x - d * eta, u, p + d * xi) + f(x - d * eta, u, p - d * xi)
    ) / (4.0 * d * d)
    f_uu = (f(x, u + d, p) - 2.0 * base + f(x, u - d, p)) / (d * d)
    f_ux = (
        f(x + d * eta, u + d, p) - f(x + d * eta, u - d, p)
        - f(x - d * eta, u + d, p) + f(x - d * eta, u - d, p)
    ) / (4.0 * d * d)
    f_xx = (f(x + d * eta, u, p) - 2.0 * base + f(x - d * eta, u, p)) / (d * d)

    pnorm = np.linalg.norm(p, axis=1)
    first = (np.abs(f_pu) + np.abs(f_px)) / (1.0 + pnorm)
    second = (np.abs(f_uu) + np.abs(f_ux) + np.abs(f_xx)) / (1.0 + pnorm * pnorm)

    c = integrand.growth_constant
    lo, hi = 1.0 / c - tol, c + tol
    violations = []
    bad_ray = np.flatnonzero((ray < lo) | (ray > hi))
    for idx in bad_ray[:20]:
        violations.append(
            {
                "kind": "rayleigh",
                "value": float(ray[idx]),
                "x": x[idx].tolist(),
                "u": float(u[idx]),
                "p": p[idx].tolist(),
                "direction": xi[idx].tolist(),
            }
        )
    for arr, kind in ((first, "first-order-growth"), (second, "second-order-growth")):
        bad = np.flatnonzero(arr > c + tol)
        for idx in bad[:20]:
            violations.append(
                {
                    "kind": kind,
                    "value": float(arr[idx]),
                    "x": x[idx].tolist(),
                    "u": float(u[idx]),
                    "p": p[idx].tolist(),
                }
            )
    return GrowthReport(
        samples=S,
        seed=seed,
        rayleigh_min=float(ray.min()),
        rayleigh_max=float(ray.max()),
        rayleigh_bounds=(lo, hi),
        first_order_max=float(first.max()),
        second_order_max=float(second.max()),
        violations=violations,
        passed=not violations,
    )


def euler_lagrange_residual(u: ScalarField, integrand: Integrand) -> ScalarField:
    """Discrete Euler-Lagrange residual -div(F_p) + F_u on the grid.

    Implemented as the exact first variation of the discrete energy, so the
    pairing with any compactly supported test field reproduces directional
    derivatives of the energy to rounding; for the Allen-Cahn integrand the
    node values equal -2 lap(u) + 2 (u - 3u^2 + 2u^3) up to O(h^2).
    """
    if integrand.dimension != u.n:
        raise GridError(
            f"integrand dimension {integrand.dimension} does not match field ({u.n})"
        )
    if min(ax.nodes for ax in u.axes) < 3:
        raise GridError("grid too small for the residual stencil (< 3 points per axis)")
    return _minimize.energy_gradient(u, integrand)
