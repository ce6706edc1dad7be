"""Discrete energy, its first variation, relaxation, and minimality spot checks.

The energy is the midpoint-rule quadrature of F(x, u, grad u) with the field
value and gradient reconstructed at cell centers from the corner nodes; the
scheme is second-order consistent.  The gradient returned by
``energy_gradient`` is the exact derivative of that quadrature (divided by
the cell volume), so the pairing <g, delta> h^n reproduces directional
derivatives of ``energy`` to rounding, and the same array serves as the
discrete Euler-Lagrange residual.

Relaxation is plain explicit gradient descent with an adaptive step (grow
1.2x on success, halve on energy increase) -- robust for nonconvex wells and
free of linear solves.  The adaptive rule compares energies in floating
point, so the reachable gradient floor scales like sqrt(eps * |E| / step);
the loop detects the resulting stall and stops instead of spinning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import BoxAxis, GridError, PeriodicAxis, ScalarField

STEP_GROW = 1.2
STEP_SHRINK = 0.5
_STEP_FLOOR = 1e-17
#: iterations without strict energy or gradient-norm progress before the
#: adaptive loop reports a rounding-level stall
_STALL_PATIENCE = 200


class EnergyDivergedError(RuntimeError):
    """Relaxation produced a non-finite or runaway energy."""


@dataclass(frozen=True)
class RelaxOptions:
    max_iterations: int = 200_000
    gradient_tolerance: float = 1e-10
    step_rule: str = "adaptive"  # "adaptive" | "fixed"
    initial_step: float = 1e-5
    clamp: tuple[float, float] | None = None
    seed: int = 0
    pin_boundary: bool = True
    log_every: int = 100

    def __post_init__(self):
        if self.gradient_tolerance <= 0:
            raise ValueError("gradient tolerance must be positive")
        if self.step_rule not in ("adaptive", "fixed"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.clamp is not None:
            lo, hi = self.clamp
            if not lo < hi:
                raise ValueError("clamp range needs u_min < u_max")
        if self.initial_step <= 0:
            raise ValueError("initial step must be positive")


@dataclass
class RelaxResult:
    field: ScalarField
    converged: bool
    status: str  # "converged" | "max-iterations" | "stalled"
    iterations: int
    final_energy: float
    final_gradient_norm: float
    history: dict


@dataclass
class MinimalityReport:
    """Sampled evidence, not certification: PASS means no tried compactly
    supported perturbation lowered the energy beyond rounding tolerance."""

    trials: int
    passed: bool
    worst_delta: float
    worst_trial: dict
    failures: list
    seed: int


# ---------------------------------------------------------------------------
# midpoint-cell machinery


class _AxisPlan:
    __slots__ = ("wrap", "start", "stop", "h", "rise", "nodes")

    def __init__(self, wrap, start, stop, h, rise, nodes):
        self.wrap = wrap
        self.start = start
        self.stop = stop
        self.h = h
        self.rise = rise
        self.nodes = nodes


def _plan(u: ScalarField, region):
    """Normalize a region (per-axis node ranges or None) into axis plans."""
    plans = []
    if region is None:
        region = (None,) * u.n
    if len(region) != u.n:
        raise GridError("region needs one entry per axis")
    for ax, p, reg in zip(u.axes, u.rises, region):
        nodes = ax.nodes
        if reg is None:
            start, stop = 0, nodes
        else:
            start, stop = reg
            start, stop = int(start), int(stop)
            if not (0 <= start < stop <= nodes):
                raise GridError(f"region [{start}, {stop}) outside axis of {nodes} nodes")
        full = start == 0 and stop == nodes
        wrap = isinstance(ax, PeriodicAxis) and full
        n_cells = (stop - start) if wrap else (stop - start - 1)
        if n_cells < 1:
            raise GridError("region is empty (fewer than two nodes along an axis)")
        plans.append(_AxisPlan(wrap, start, stop, ax.h, p, nodes))
    return plans


def _corner_pair(arr, axis, plan):
    """Views of the cell corners along one axis: (low side, high side)."""
    if plan.wrap:
        hi = np.roll(arr, -1, axis=axis)
        if plan.rise:
            last = [slice(None)] * arr.ndim
            last[axis] = -1
            hi[tuple(last)] += plan.rise
        return arr, hi
    sl_lo = [slice(None)] * arr.ndim
    sl_hi = [slice(None)] * arr.ndim
    sl_lo[axis] = slice(plan.start, plan.stop - 1)
    sl_hi[axis] = slice(plan.start + 1, plan.stop)
    return arr[tuple(sl_lo)], arr[tuple(sl_hi)]


def _build_corners(total, plans):
    corners = {(): total}
    for i, plan in enumerate(plans):
        grown = {}
        for sig, arr in corners.items():
            lo, hi = _corner_pair(arr, i, plan)
            grown[sig + (0,)] = lo
            grown[sig + (1,)] = hi
        corners = grown
    return corners


def _cell_centers(u: ScalarField, plans):
    coords = []
    for ax, plan in zip(u.axes, plans):
        c = ax.coords()
        if plan.wrap:
            coords.append(c + 0.5 * plan.h)
        else:
            coords.append(c[plan.start : plan.stop - 1] + 0.5 * plan.h)
    grids = np.meshgrid(*coords, indexing="ij")
    return np.stack(grids, axis=-1)


def _reduced_total(u: ScalarField) -> np.ndarray:
    """Node values with the offset reduced mod 1 (integrands are 1-periodic
    in u, and the reduction makes full-cell energies of vertical translates
    agree bitwise)."""
    off = u.offset - math.floor(u.offset)
    return u.values + float(off) + u.linear_part()


def _cell_means_and_slopes(corners, plans, n):
    inv2n = 1.0 / 2**n
    items = list(corners.items())
    ub = items[0][1].copy()
    for _, arr in items[1:]:
        ub += arr
    ub *= inv2n
    slopes = []
    for i in range(n):
        acc = None
        for sig, arr in items:
            if acc is None:
                acc = arr.copy() if sig[i] else -arr
            elif sig[i]:
                acc += arr
            else:
                acc -= arr
        acc *= 1.0 / (2 ** (n - 1) * plans[i].h)
        slopes.append(acc)
    return ub, slopes


def _scatter(g, contrib, sig, plans, n):
    for i in range(n):
        if plans[i].wrap and sig[i]:
            contrib = np.roll(contrib, 1, axis=i)
    slot = [slice(None)] * n
    for i in range(n):
        plan = plans[i]
        if not plan.wrap:
            slot[i] = (
                slice(plan.start + 1, plan.stop)
                if sig[i]
                else slice(plan.start, plan.stop - 1)
            )
    g[tuple(slot)] += contrib


def _reduce_cells(dens, vol, fast):
    if fast:
        return vol * float(np.sum(dens))
    # canonical-order reduction: full-cell energies of lattice translates are
    # permutations of the same cell terms and must sum identically
    return vol * float(np.sum(np.sort(dens, axis=None)))


def _pass_double_well(total, u, plans, need_gradient, fast):
    """Hand-fused pass for the built-in density |p|^2 + W(u); identical
    discretization to the generic pass, shared buffers."""
    n = u.n
    corners = _build_corners(total, plans)
    ub, slopes = _cell_means_and_slopes(corners, plans, n)
    w = ub - np.round(ub)
    aw = np.abs(w)
    t = 1.0 - aw
    q = w * t
    dens = q * q
    for d in slopes:
        dens += d * d
    vol = 1.0
    for plan in plans:
        vol *= plan.h
    energy = _reduce_cells(dens, vol, fast)
    if not np.isfinite(energy):
        raise EnergyDivergedError("non-finite energy value")
    if not need_gradient:
        return energy, None
    um = t - aw  # = 1 - 2|w|
    wp = q * um  # = W'(u)/2
    wp *= 2.0 / 2**n
    for i in range(n):
        slopes[i] *= 2.0 / (2 ** (n - 1) * plans[i].h)
    g = np.zeros(u.shape)
    for sig in corners:
        contrib = wp.copy()
        for i in range(n):
            if sig[i]:
                contrib += slopes[i]
            else:
                contrib -= slopes[i]
        _scatter(g, contrib, sig, plans, n)
    return energy, g


def _pass(total, u, plans, integrand, x_cells, need_gradient, fast=False):
    if getattr(integrand, "name", "") == "allen-cahn":
        return _pass_double_well(total, u, plans, need_gradient, fast)
    n = u.n
    corners = _build_corners(total, plans)
    ub, grads = _cell_means_and_slopes(corners, plans, n)
    p = np.stack(grads, axis=-1)
    vol = 1.0
    for plan in plans:
        vol *= plan.h
    dens = integrand.density(x_cells, ub, p)
    if not np.all(np.isfinite(dens)):
        raise EnergyDivergedError("non-finite integrand value during energy evaluation")
    energy = _reduce_cells(dens, vol, fast)
    if not need_gradient:
        return energy, None
    fu = integrand.d_u(x_cells, ub, p) / 2**n
    fp = integrand.d_p(x_cells, ub, p)
    parts = [fu]
    for i in range(n):
        parts.append(fp[..., i] / (2 ** (n - 1) * plans[i].h))
    g = np.zeros(u.shape)
    for sig in corners:
        contrib = parts[0]
        for i in range(n):
            contrib = contrib + parts[i + 1] if sig[i] else contrib - parts[i + 1]
        _scatter(g, contrib, sig, plans, n)
    return energy, g


def _check_integrand_dim(u: ScalarField, integrand):
    dim = getattr(integrand, "dimension", None)
    if dim is not None and dim != u.n:
        raise GridError(f"integrand dimension {dim} does not match field dimension {u.n}")


def energy(u: ScalarField, integrand, region=None) -> float:
    """Midpoint-rule energy of the field over the region (default whole cell)."""
    _check_integrand_dim(u, integrand)
    plans = _plan(u, region)
    x_cells = _cell_centers(u, plans) if integrand.depends_on_x else None
    total = _reduced_total(u)
    e, _ = _pass(total, u, plans, integrand, x_cells, need_gradient=False)
    return e


def energy_gradient(u: ScalarField, integrand) -> ScalarField:
    """Exact first variation g of the discrete energy: for any compactly
    supported grid perturbation delta, energy(u + s*delta) = energy(u)
    + s <g, delta> h^n + O(s^2)."""
    _check_integrand_dim(u, integrand)
    plans = _plan(u, None)
    x_cells = _cell_centers(u, plans) if integrand.depends_on_x else None
    total = _reduced_total(u)
    _, g = _pass(total, u, plans, integrand, x_cells, need_gradient=True)
    return ScalarField(u.axes, g, (0,) * u.n)


def _pin_mask(u: ScalarField) -> np.ndarray | None:
    mask = np.zeros(u.shape, dtype=bool)
    any_box = False
    for i, ax in enumerate(u.axes):
        if isinstance(ax, BoxAxis):
            any_box = True
            lo = [slice(None)] * u.n
            hi = [slice(None)] * u.n
            lo[i] = 0
            hi[i] = -1
            mask[tuple(lo)] = True
            mask[tuple(hi)] = True
    return mask if any_box else None


def relax(u0: ScalarField, integrand, opts: RelaxOptions = RelaxOptions()) -> RelaxResult:
    """Gradient-descent relaxation toward a critical point of the energy.

    Dirichlet behaviour: with ``pin_boundary`` the end slabs of box axes keep
    their initial values.  The average slope is preserved -- updates live
    entirely in the periodic part.  Non-convergence is flagged, not raised;
    a runaway energy raises :class:`EnergyDivergedError`.
    """
    _check_integrand_dim(u0, integrand)
    plans = _plan(u0, None)
    x_cells = _cell_centers(u0, plans) if integrand.depends_on_x else None
    lin = u0.linear_part() + float(u0.offset - math.floor(u0.offset))
    if not np.any(lin):
        lin = None
    pins = _pin_mask(u0) if opts.pin_boundary else None
    pin_idx = None if pins is None else np.flatnonzero(pins.ravel())

    values = u0.values.copy()

    def fused(vals):
        total = vals if lin is None else vals + lin
        e, g = _pass(total, u0, plans, integrand, x_cells, True, fast=True)
        if pin_idx is not None:
            g.ravel()[pin_idx] = 0.0
        return e, g

    e_cur, g_cur = fused(values)
    e_guard = abs(e_cur) * 1e8 + 1e8
    gnorm = float(np.abs(g_cur).max())

    hist_it, hist_e, hist_g, hist_s = [0], [e_cur], [gnorm], [0.0]
    status = "max-iterations"
    step = opts.initial_step
    iterations = 0
    best_e = e_cur
    best_g = gnorm
    last_progress = 0
    if gnorm <= opts.gradient_tolerance:
        status = "converged"
    else:
        while iterations < opts.max_iterations:
            iterations += 1
            cand = values - step * g_cur
            if opts.clamp is not None:
                lo, hi = opts.clamp
                if lin is None:
                    np.clip(cand, lo, hi, out=cand)
                else:
                    cand = np.clip(cand + lin, lo, hi) - lin
            e_new, g_new = fused(cand)
            if not np.isfinite(e_new) or e_new > e_guard:
                raise EnergyDivergedError(
                    f"energy diverged at iteration {iterations}: {e_new}"
                )
            if opts.step_rule == "fixed" or e_new <= e_cur:
                values, e_cur, g_cur = cand, e_new, g_new
                gnorm = float(np.abs(g_cur).max())
                if opts.step_rule == "adaptive":
                    step *= STEP_GROW
                if e_cur < best_e:
                    best_e = e_cur
                    last_progress = iterations
                if gnorm < 0.999 * best_g:
                    best_g = gnorm
                    last_progress = iterations
                if iterations % opts.log_every == 0:
                    hist_it.append(iterations)
                    hist_e.append(e_cur)
                    hist_g.append(gnorm)
                    hist_s.append(step)
                if gnorm <= opts.gradient_tolerance:
                    status = "converged"
                    break
            else:
                step *= STEP_SHRINK
            if step < _STEP_FLOOR or iterations - last_progress >= _STALL_PATIENCE:
                status = "stalled"
                break

    if not hist_it or hist_it[-1] != iterations:
        hist_it.append(iterations)
        hist_e.append(e_cur)
        hist_g.append(gnorm)
        hist_s.append(step)
    out = ScalarField(u0.axes, values, u0.rises, u0.offset)
    return RelaxResult(
        field=out,
        converged=status == "converged",
        status=status,
        iterations=iterations,
        final_energy=e_cur,
        final_gradient_norm=gnorm,
        history={
            "iteration": np.array(hist_it),
            "energy": np.array(hist_e),
            "grad_norm": np.array(hist_g),
            "step": np.array(hist_s),
        },
    )


# ---------------------------------------------------------------------------
# compactly supported random perturbations


def _mollifier(s2: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s2)
    inside = s2 < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
    return out


def _bump(u: ScalarField, center, radii, amplitude, power) -> np.ndarray:
    s2 = np.zeros(u.shape)
    for i, ax in enumerate(u.axes):
        x = ax.coords()
        d = np.abs(x - center[i])
        if isinstance(ax, PeriodicAxis):
            d = np.minimum(d, ax.period - d)
        shape = [1] * u.n
        shape[i] = x.size
        s2 = s2 + (d.reshape(shape) / radii[i]) ** 2
    phi = _mollifier(s2)
    if power != 1:
        phi = phi**power
    return amplitude * phi


def _support_region(u: ScalarField, center, radii):
    region = []
    for i, ax in enumerate(u.axes):
        lo_x = center[i] - radii[i]
        hi_x = center[i] + radii[i]
        if isinstance(ax, PeriodicAxis):
            if hi_x - lo_x + 2 * ax.h >= ax.period or lo_x < 0 or hi_x > ax.period:
                region.append(None)
                continue
        start = max(0, int(np.floor(lo_x * ax.m)) - 1)
        if isinstance(ax, BoxAxis):
            start = max(0, int(np.floor((lo_x - ax.lo) * ax.m)) - 1)
            stop = min(ax.nodes, int(np.ceil((hi_x - ax.lo) * ax.m)) + 2)
        else:
            stop = min(ax.nodes, int(np.ceil(hi_x * ax.m)) + 2)
        if stop - start < 2:
            region.append(None)
        else:
            region.append((start, stop))
    return tuple(region)


def minimality_spot_check(
    u: ScalarField,
    integrand,
    trials: int,
    max_radius: float,
    seed: int,
    amplitude: float = 0.5,
    min_radius: float = 0.5,
) -> MinimalityReport:
    """Probe local minimality with random compactly supported perturbations.

    Each trial draws a mollifier bump (random center, per-axis radii up to
    ``max_radius``, random amplitude up to ``amplitude``) and evaluates the
    energy difference on a window containing its support.  On a periodic axis
    a radius at or beyond half the period wraps into a perturbation covering
    the whole period (compactly supported in the remaining axes); on box axes
    the support stays strictly interior so pinned ends are untouched.  PASS
    means every difference is >= -tol with tol = 1e-9 (1 + |local energy|).
    Failures are data, not errors.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    rng = np.random.default_rng(seed)
    worst_delta = np.inf
    worst_trial: dict = {}
    failures = []
    for trial in range(trials):
        radii = []
        center = []
        for ax in u.axes:
            if isinstance(ax, PeriodicAxis):
                r = rng.uniform(min_radius, max_radius)
                c = rng.uniform(0.0, ax.period)
            else:
                cap = 0.5 * (ax.hi - ax.lo) - 2 * ax.h
                r = min(rng.uniform(min_radius, max_radius), max(cap, ax.h))
                c = rng.uniform(ax.lo + r + ax.h, ax.hi - r - ax.h)
            radii.append(r)
            center.append(c)
        amp = rng.uniform(0.1 * amplitude, amplitude) * rng.choice([-1.0, 1.0])
        power = int(rng.integers(1, 3))
        phi = _bump(u, center, radii, amp, power)
        region = _support_region(u, center, radii)
        e_base = energy(u, integrand, region)
        e_pert = energy(u.with_values(u.values + phi), integrand, region)
        delta = e_pert - e_base
        tol = 1e-9 * (1.0 + abs(e_base))
        descriptor = {
            "trial": trial,
            "center": [float(c) for c in center],
            "radii": [float(r) for r in radii],
            "amplitude": float(amp),
            "power": power,
            "delta": float(delta),
            "tolerance": float(tol),
        }
        if delta < worst_delta:
            worst_delta = delta
            worst_trial = descriptor
        if delta < -tol:
            failures.append(descriptor)
    return MinimalityReport(
        trials=trials,
        passed=not failures,
        worst_delta=float(worst_delta),
        worst_trial=worst_trial,
        failures=failures,
        seed=seed,
    )
