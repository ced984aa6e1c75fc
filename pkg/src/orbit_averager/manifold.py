"""Chart coordinates on (S^2)^m x R^n.

Each sphere factor contributes an (azimuth, polar) pair, each line factor a
single Cartesian coordinate.  Azimuths live in [-pi, pi), polar angles in
[-pi/2, pi/2].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

AZIMUTH = "azimuth"
POLAR = "polar"
LINE = "line"

POLE_WARNING_MARGIN = 1e-3


class InvalidPointError(ValueError):
    """Raised for non-finite chart coordinates."""


class DimensionError(ValueError):
    """Raised when points or matrices do not match a manifold's dimension."""


class NearPoleWarning(UserWarning):
    """A point came within ``POLE_WARNING_MARGIN`` of a sphere pole."""


@dataclass(frozen=True)
class ManifoldSpec:
    """Factor structure of (S^2)^m x R^n.

    ``layout`` lists the kind of every coordinate.  The default puts the
    sphere pairs first, ``(theta_1, phi_1, ..., theta_m, phi_m, x_1, ..., x_n)``;
    an explicit layout may put line coordinates first, but each azimuth must
    be immediately followed by its polar angle.
    """

    m: int
    n: int
    layout: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.m < 0 or self.n < 0 or self.m + self.n < 1:
            raise ValueError(f"need m, n >= 0 and m + n >= 1, got m={self.m}, n={self.n}")
        if self.layout is None:
            object.__setattr__(self, "layout", (AZIMUTH, POLAR) * self.m + (LINE,) * self.n)
        layout = tuple(self.layout)
        object.__setattr__(self, "layout", layout)
        if layout.count(AZIMUTH) != self.m or layout.count(POLAR) != self.m or layout.count(LINE) != self.n:
            raise ValueError(f"layout {layout} does not describe m={self.m}, n={self.n}")
        for i, kind in enumerate(layout):
            if kind == AZIMUTH and (i + 1 >= len(layout) or layout[i + 1] != POLAR):
                raise ValueError("every azimuth must be followed by its polar angle")
            if kind == POLAR and (i == 0 or layout[i - 1] != AZIMUTH):
                raise ValueError("every polar angle must follow its azimuth")

    @property
    def dim(self) -> int:
        return 2 * self.m + self.n

    @property
    def azimuth_indices(self) -> tuple[int, ...]:
        return tuple(i for i, kind in enumerate(self.layout) if kind == AZIMUTH)

    @property
    def polar_indices(self) -> tuple[int, ...]:
        return tuple(i for i, kind in enumerate(self.layout) if kind == POLAR)

    @property
    def line_indices(self) -> tuple[int, ...]:
        return tuple(i for i, kind in enumerate(self.layout) if kind == LINE)


@dataclass(frozen=True)
class ChartPoint:
    """A coordinate vector on a :class:`ManifoldSpec`.  Immutable."""

    coords: np.ndarray
    spec: ManifoldSpec

    def __post_init__(self):
        c = np.array(self.coords, dtype=float).reshape(-1)
        if c.shape[0] != self.spec.dim:
            raise DimensionError(f"expected {self.spec.dim} coordinates, got {c.shape[0]}")
        c.flags.writeable = False
        object.__setattr__(self, "coords", c)

    def __getitem__(self, i):
        return self.coords[i]

    def __len__(self):
        return self.spec.dim

    def with_coords(self, coords) -> "ChartPoint":
        return ChartPoint(coords, self.spec)


@dataclass(frozen=True)
class ChartRegion:
    """Working region: polar band of margin ``delta0`` and, when ``kappa > 0``,
    the ball ``|line coords| < 1 + kappa``.  ``kappa == 0`` leaves the line
    factors unbounded."""

    delta0: float = 0.05
    kappa: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.delta0 < HALF_PI):
            raise ValueError(f"delta0 must lie in (0, pi/2), got {self.delta0}")
        if not (self.kappa >= 0.0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be a finite non-negative number, got {self.kappa}")


def wrap_angle(theta: float) -> float:
    """Reduce an angle into [-pi, pi).  Values already in range are returned
    unchanged, which makes the reduction exactly idempotent."""
    if -math.pi <= theta < math.pi:
        return theta
    w = math.fmod(theta + math.pi, TWO_PI)
    if w < 0.0:
        w += TWO_PI
    w -= math.pi
    if w >= math.pi:
        w -= TWO_PI
    if w < -math.pi:
        w = -math.pi
    return w


def wrap_angles(values: np.ndarray, indices: Sequence[int]) -> np.ndarray:
    out = np.array(values, dtype=float)
    for i in indices:
        out[i] = wrap_angle(float(out[i]))
    return out


def angle_difference(a: float, b: float) -> float:
    """Signed shortest difference ``a - b`` in [-pi, pi)."""
    return wrap_angle(a - b)


def normalize(p: ChartPoint) -> ChartPoint:
    """Wrap azimuths into [-pi, pi); other coordinates are untouched."""
    if not np.all(np.isfinite(p.coords)):
        raise InvalidPointError(f"non-finite coordinate in {p.coords}")
    return ChartPoint(wrap_angles(p.coords, p.spec.azimuth_indices), p.spec)


def in_region(p: ChartPoint, region: ChartRegion) -> bool:
    c = p.coords
    bound = HALF_PI - region.delta0
    for i in p.spec.polar_indices:
        if not (-bound < c[i] < bound):
            return False
    if region.kappa > 0.0 and p.spec.line_indices:
        if np.linalg.norm(c[list(p.spec.line_indices)]) >= 1.0 + region.kappa:
            return False
    return True


def polar_margin(p: ChartPoint, region: ChartRegion) -> float:
    """Smallest distance from a polar coordinate to the edge of the polar
    band; positive exactly when every polar angle is strictly inside."""
    idx = p.spec.polar_indices
    if not idx:
        return math.inf
    return float(min(HALF_PI - region.delta0 - abs(p.coords[i]) for i in idx))


def chart_distance(p: ChartPoint, q: ChartPoint) -> float:
    """Product distance: shortest arc on each azimuth, Euclidean elsewhere."""
    if p.spec != q.spec:
        raise DimensionError("points live on different manifolds")
    d = np.asarray(p.coords) - np.asarray(q.coords)
    total = 0.0
    az = set(p.spec.azimuth_indices)
    for i, di in enumerate(d):
        if i in az:
            a = abs(di) % TWO_PI
            di = min(a, TWO_PI - a)
        total += di * di
    return math.sqrt(total)


def pole_distance(p: ChartPoint) -> float:
    idx = p.spec.polar_indices
    if not idx:
        return math.inf
    return float(min(HALF_PI - abs(p.coords[i]) for i in idx))


def near_pole(p: ChartPoint, margin: float = POLE_WARNING_MARGIN) -> bool:
    return pole_distance(p) < margin


def warn_if_near_pole(p: ChartPoint, margin: float = POLE_WARNING_MARGIN) -> bool:
    if near_pole(p, margin):
        warnings.warn(
            f"chart point {p.coords} is within {margin} rad of a pole; "
            "the field switches branch there and is not modelled",
            NearPoleWarning,
            stacklevel=2,
        )
        return True
    return False
