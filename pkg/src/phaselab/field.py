"""Grid fields with rational average slope and an exact lattice-translation algebra.

A field is stored over a fundamental domain that is a product of per-axis
segments.  A periodic axis covers an integer period ``q`` with spacing
``1/m`` and twisted periodicity ``u(x + q e_i) = u(x) + p_i`` for an integer
rise ``p_i`` (average slope ``p_i / q_i``).  A box axis covers an integer
interval ``[lo, hi]`` and is extended by clamping beyond its ends; this is
the truncated form used for transition layers whose tails are exponentially
flat.

Internally a field keeps three channels: the sampled periodic part
(``values``), the integer rises, and a rational vertical ``offset``.  Integer
translations then act by array rolls (or clamped gathers on box axes) plus
exact ``Fraction`` arithmetic on the offset, so the translation group law and
order comparisons hold with zero floating-point slack.  Fields are immutable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path

import numpy as np

#: Default tolerance for order comparisons: far below physical feature sizes
#: (wells are separated by 1) and far above solver residuals.
ORDER_TOL = 1e-8

#: Grid convention: spacing is 1/m with m at least this, so every integer
#: translation is grid aligned and ``translate`` never interpolates.
MIN_POINTS_PER_UNIT = 4


class GridError(ValueError):
    """Invalid grid description or mismatched grids."""


class SlopeMismatchError(ValueError):
    """Comparison requested between fields of different average slope.

    Fields with different slopes always cross far from the origin, so an
    order relation restricted to the fundamental domain would be meaningless.
    """


@dataclass(frozen=True)
class PeriodicAxis:
    """Axis covering an integer period with twisted-periodic wrapping."""

    period: int
    m: int

    def __post_init__(self):
        if self.period < 1:
            raise GridError(f"periodic axis needs period >= 1, got {self.period}")
        if self.m < MIN_POINTS_PER_UNIT:
            raise GridError(f"need m >= {MIN_POINTS_PER_UNIT} points per unit, got {self.m}")

    @property
    def nodes(self) -> int:
        return self.period * self.m

    @property
    def h(self) -> float:
        return 1.0 / self.m

    def coords(self) -> np.ndarray:
        return np.arange(self.nodes) / self.m


@dataclass(frozen=True)
class BoxAxis:
    """Axis covering the integer interval [lo, hi], clamped beyond the ends."""

    lo: int
    hi: int
    m: int

    def __post_init__(self):
        if self.hi <= self.lo:
            raise GridError(f"box axis needs hi > lo, got [{self.lo}, {self.hi}]")
        if self.m < MIN_POINTS_PER_UNIT:
            raise GridError(f"need m >= {MIN_POINTS_PER_UNIT} points per unit, got {self.m}")

    @property
    def nodes(self) -> int:
        return (self.hi - self.lo) * self.m + 1

    @property
    def h(self) -> float:
        return 1.0 / self.m

    def coords(self) -> np.ndarray:
        return self.lo + np.arange(self.nodes) / self.m


Axis = PeriodicAxis | BoxAxis


@dataclass(frozen=True)
class TranslationVector:
    """Element of the integer lattice acting by u(x) -> u(x - k) + vertical."""

    spatial: tuple[int, ...]
    vertical: int

    def __post_init__(self):
        if not all(isinstance(k, (int, np.integer)) for k in self.spatial):
            raise ValueError("translation components must be integers")
        object.__setattr__(self, "spatial", tuple(int(k) for k in self.spatial))
        object.__setattr__(self, "vertical", int(self.vertical))

    @classmethod
    def from_components(cls, comps) -> "TranslationVector":
        comps = [int(c) for c in comps]
        return cls(tuple(comps[:-1]), comps[-1])

    def as_array(self) -> np.ndarray:
        return np.array(self.spatial + (self.vertical,), dtype=np.int64)

    def scaled(self, factor: int) -> "TranslationVector":
        return TranslationVector(tuple(factor * k for k in self.spatial), factor * self.vertical)

    def __neg__(self) -> "TranslationVector":
        return self.scaled(-1)

    def __add__(self, other: "TranslationVector") -> "TranslationVector":
        return TranslationVector(
            tuple(a + b for a, b in zip(self.spatial, other.spatial)),
            self.vertical + other.vertical,
        )


class Ordering(Enum):
    LESS = "less"
    GREATER = "greater"
    EQUAL = "equal"
    CROSSING = "crossing"


@dataclass(frozen=True)
class Witness:
    """Grid point backing an order classification."""

    point: tuple[float, ...]
    delta: float


@dataclass(frozen=True)
class OrderRelation:
    """Outcome of an order comparison over the fundamental domain.

    ``margin`` is the size of the one-signed excursion for LESS/GREATER, the
    residual sup-difference for EQUAL, and the smaller of the two opposite
    excursions for CROSSING.  Witnesses are populated for CROSSING: the two
    extremal points followed by up to four sign-change locations.
    """

    kind: Ordering
    margin: float
    witnesses: tuple[Witness, ...] = ()


@dataclass(frozen=True)
class ScalarField:
    """Immutable grid field: periodic part + integer rises + rational offset."""

    axes: tuple[Axis, ...]
    values: np.ndarray
    rises: tuple[int, ...]
    offset: Fraction = Fraction(0)

    def __post_init__(self):
        axes = tuple(self.axes)
        object.__setattr__(self, "axes", axes)
        vals = np.asarray(self.values, dtype=float)
        shape = tuple(ax.nodes for ax in axes)
        if vals.shape != shape:
            raise GridError(f"values shape {vals.shape} does not match grid {shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        rises = tuple(int(p) for p in self.rises)
        if len(rises) != len(axes):
            raise GridError("one rise per axis required")
        for ax, p in zip(axes, rises):
            if isinstance(ax, BoxAxis) and p != 0:
                raise GridError("box axes carry no average slope")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "rises", rises)
        object.__setattr__(self, "offset", Fraction(self.offset))

    @property
    def n(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(ax.h for ax in self.axes)

    @property
    def slope(self) -> tuple[Fraction, ...]:
        out = []
        for ax, p in zip(self.axes, self.rises):
            if isinstance(ax, PeriodicAxis):
                out.append(Fraction(p, ax.period))
            else:
                out.append(Fraction(0))
        return tuple(out)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.axes, values, self.rises, self.offset)

    def axis_coords(self) -> list[np.ndarray]:
        return [ax.coords() for ax in self.axes]

    def node_points(self) -> np.ndarray:
        """Node coordinates stacked on the trailing axis, shape grid + (n,)."""
        grids = np.meshgrid(*self.axis_coords(), indexing="ij")
        return np.stack(grids, axis=-1)

    def linear_part(self) -> np.ndarray:
        """Linear contribution slope . x at the nodes (zero on box axes)."""
        out = np.zeros(self.shape)
        for i, (ax, p) in enumerate(zip(self.axes, self.rises)):
            if isinstance(ax, PeriodicAxis) and p != 0:
                shape = [1] * self.n
                shape[i] = ax.nodes
                out = out + (ax.coords() * (p / ax.period)).reshape(shape)
        return out

    def total_values(self) -> np.ndarray:
        """Field values at the nodes, linear part and offset included."""
        return self.values + float(self.offset) + self.linear_part()

    def value_range(self) -> tuple[float, float]:
        t = self.total_values()
        return float(t.min()), float(t.max())


def constant_field(axes, value: float) -> ScalarField:
    axes = tuple(axes)
    shape = tuple(ax.nodes for ax in axes)
    return ScalarField(axes, np.full(shape, float(value)), (0,) * len(axes))


def field_from_values(axes, samples: np.ndarray, rises=None) -> ScalarField:
    """Build a field from sampled total values; the linear part is split off."""
    axes = tuple(axes)
    if rises is None:
        rises = (0,) * len(axes)
    probe = ScalarField(axes, np.zeros(tuple(ax.nodes for ax in axes)), tuple(rises))
    periodic_part = np.asarray(samples, dtype=float) - probe.linear_part()
    return ScalarField(axes, periodic_part, tuple(rises))


def field_from_function(axes, fn, rises=None) -> ScalarField:
    """Sample ``fn`` (vectorized over points of shape (..., n)) on the grid."""
    axes = tuple(axes)
    grids = np.meshgrid(*[ax.coords() for ax in axes], indexing="ij")
    pts = np.stack(grids, axis=-1)
    return field_from_values(axes, np.asarray(fn(pts), dtype=float), rises)


def _check_same_grid(u: ScalarField, v: ScalarField):
    if u.axes != v.axes:
        raise GridError("fields live on different grids")
    if u.rises != v.rises:
        raise SlopeMismatchError(
            f"ordering undefined for slopes {u.slope} vs {v.slope}"
        )


def translate(u: ScalarField, kbar: TranslationVector) -> ScalarField:
    """Apply the lattice action u(x) -> u(x - k) + vertical.

    Exact on periodic axes (pure index roll); box axes gather with clamped
    indices, matching the clamped extension of the stored window.  The rises
    and hence the average slope are unchanged; the offset absorbs the exact
    rational vertical shift ``vertical - slope . k``.
    """
    if len(kbar.spatial) != u.n:
        raise GridError("translation dimension mismatch")
    out = u.values
    off = u.offset + kbar.vertical
    for i, (ax, k, p) in enumerate(zip(u.axes, kbar.spatial, u.rises)):
        if k == 0:
            continue
        if isinstance(ax, PeriodicAxis):
            shift = (k * ax.m) % ax.nodes
            if shift:
                out = np.roll(out, shift, axis=i)
            off -= Fraction(p, ax.period) * k
        else:
            idx = np.clip(np.arange(ax.nodes) - k * ax.m, 0, ax.nodes - 1)
            out = np.take(out, idx, axis=i)
    return ScalarField(u.axes, out, u.rises, off)


def _difference(u: ScalarField, v: ScalarField) -> np.ndarray:
    _check_same_grid(u, v)
    return (u.values - v.values) + float(u.offset - v.offset)


def _point_of(u: ScalarField, flat_index: int) -> tuple[float, ...]:
    idx = np.unravel_index(flat_index, u.shape)
    coords = u.axis_coords()
    return tuple(float(coords[i][j]) for i, j in enumerate(idx))


def _sign_change_points(u: ScalarField, d: np.ndarray, tol: float, limit: int = 4):
    """Grid points where d flips sign along an axis, for crossing reports.

    Within-tol plateaus between the signed regions are skipped; the reported
    point sits midway between the last significant samples of opposite sign.
    """
    pts = []
    sgn = np.zeros(d.shape, dtype=np.int8)
    sgn[d > tol] = 1
    sgn[d < -tol] = -1
    coords = u.axis_coords()
    for i, ax in enumerate(u.axes):
        moved = np.moveaxis(sgn, i, -1)
        lines = moved.reshape(-1, moved.shape[-1])
        n_i = lines.shape[-1]
        for line_no, line in enumerate(lines):
            sig = np.flatnonzero(line)
            if sig.size < 2:
                continue
            idx_pairs = zip(sig[:-1], sig[1:])
            if isinstance(ax, PeriodicAxis):
                idx_pairs = list(idx_pairs) + [(sig[-1], sig[0] + n_i)]
            for j0, j1 in idx_pairs:
                if line[j0 % n_i] != line[j1 % n_i]:
                    mid = ((j0 + j1) // 2) % n_i
                    other = np.unravel_index(line_no, moved.shape[:-1])
                    full = list(other)
                    full.insert(i, mid)
                    point = tuple(float(coords[k][q]) for k, q in enumerate(full))
                    pts.append(Witness(point, float(d[tuple(full)])))
                    if len(pts) >= limit:
                        return pts
    return pts


def compare(u: ScalarField, v: ScalarField, tol: float = ORDER_TOL) -> OrderRelation:
    """Classify u vs v over the fundamental domain.

    EQUAL when sup|u - v| <= tol.  LESS/GREATER when the difference exceeds
    tol somewhere with one sign and nowhere with the other (sub-tol
    excursions are absorbed, so numerical equality swallows solver noise).
    CROSSING otherwise, with witness points.
    """
    d = _difference(u, v)
    dmax = float(d.max())
    dmin = float(d.min())
    if dmax <= tol and dmin >= -tol:
        return OrderRelation(Ordering.EQUAL, max(abs(dmax), abs(dmin)))
    if dmin >= -tol:
        return OrderRelation(Ordering.GREATER, dmax)
    if dmax <= tol:
        return OrderRelation(Ordering.LESS, -dmin)
    hi = int(d.argmax())
    lo = int(d.argmin())
    wits = [
        Witness(_point_of(u, hi), dmax),
        Witness(_point_of(u, lo), dmin),
    ]
    wits.extend(_sign_change_points(u, d, tol))
    return OrderRelation(Ordering.CROSSING, min(dmax, -dmin), tuple(wits))


def sup_distance(u: ScalarField, v: ScalarField) -> float:
    """Sup norm of u - v over the fundamental domain (a metric at fixed slope)."""
    d = _difference(u, v)
    return float(np.abs(d).max())


def node_gradients(u: ScalarField) -> list[np.ndarray]:
    """Central-difference gradient per axis at the nodes.

    Periodic axes wrap with the twisted rise; box axes use one-sided
    second-order differences at the window ends.
    """
    total = u.total_values()
    out = []
    for i, (ax, p) in enumerate(zip(u.axes, u.rises)):
        if isinstance(ax, PeriodicAxis):
            fwd = np.roll(total, -1, axis=i)
            bwd = np.roll(total, 1, axis=i)
            if p != 0:
                first = [slice(None)] * u.n
                last = [slice(None)] * u.n
                first[i] = 0
                last[i] = -1
                # the rolled-in slabs re-enter one period away
                fwd[tuple(last)] += p
                bwd[tuple(first)] -= p
            out.append((fwd - bwd) / (2.0 * ax.h))
        else:
            out.append(np.gradient(total, ax.h, axis=i, edge_order=2))
    return out


# ---------------------------------------------------------------------------
# CSV dump / load


def _axis_to_json(ax: Axis) -> dict:
    if isinstance(ax, PeriodicAxis):
        return {"kind": "periodic", "period": ax.period, "m": ax.m}
    return {"kind": "box", "lo": ax.lo, "hi": ax.hi, "m": ax.m}


def _axis_from_json(d: dict) -> Axis:
    if d["kind"] == "periodic":
        return PeriodicAxis(int(d["period"]), int(d["m"]))
    if d["kind"] == "box":
        return BoxAxis(int(d["lo"]), int(d["hi"]), int(d["m"]))
    raise GridError(f"unknown axis kind {d['kind']!r}")


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def dump_csv(u: ScalarField, csv_path) -> Path:
    """Write one row per grid node (x1,...,xn,u) plus a JSON sidecar.

    Values are printed with 17 significant digits so the decimal text
    round-trips every double bit-exactly.  The rational offset is folded into
    the value column; the sidecar records the grid, the slope and the cell.
    """
    csv_path = Path(csv_path)
    coords = u.axis_coords()
    total = u.total_values()
    n = u.n
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(f"x{i + 1}" for i in range(n)) + ",u\n")
        for idx in np.ndindex(u.shape):
            row = [f"{coords[i][j]:.17g}" for i, j in enumerate(idx)]
            row.append(f"{total[idx]:.17g}")
            fh.write(",".join(row) + "\n")
    meta = {
        "n": n,
        "axes": [_axis_to_json(ax) for ax in u.axes],
        "cell": [
            ax.period if isinstance(ax, PeriodicAxis) else [ax.lo, ax.hi]
            for ax in u.axes
        ],
        "h": [ax.h for ax in u.axes],
        "slope": [str(s) for s in u.slope],
        "rises": list(u.rises),
        "offset": "0",
    }
    with open(sidecar_path(csv_path), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return csv_path


def load_csv(csv_path) -> ScalarField:
    csv_path = Path(csv_path)
    with open(sidecar_path(csv_path), encoding="utf-8") as fh:
        meta = json.load(fh)
    axes = tuple(_axis_from_json(d) for d in meta["axes"])
    rises = tuple(int(p) for p in meta.get("rises", [0] * len(axes)))
    shape = tuple(ax.nodes for ax in axes)
    count = int(np.prod(shape))
    vals = np.empty(count)
    with open(csv_path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[-1] != "u" or len(header) != len(axes) + 1:
            raise GridError(f"malformed field CSV header: {header}")
        for k, line in enumerate(fh):
            if k >= count:
                raise GridError("field CSV has more rows than grid nodes")
            vals[k] = float(line.rsplit(",", 1)[1])
        if k != count - 1:
            raise GridError("field CSV has fewer rows than grid nodes")
    samples = vals.reshape(shape)
    out = field_from_values(axes, samples, rises)
    off = Fraction(meta.get("offset", "0"))
    if off != 0:
        out = ScalarField(axes, out.values, rises, off)
    return out
