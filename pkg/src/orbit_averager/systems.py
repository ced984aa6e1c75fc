"""The three unperturbed linear systems and their affine perturbations.

Every scenario is a concatenation of blocks with closed-form flows:

* ``drift``    -- azimuth with unit speed, ``theta' = 1``
* ``constant`` -- frozen coordinate, ``phi' = 0``
* ``radial``   -- ``r' = r - 1``; the periodic orbits sit on ``r = 1``
* ``rotation`` -- planar centre, ``x' = -y, y' = x``

All periodic orbits of the three systems share the period ``2*pi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .manifold import (
    AZIMUTH,
    LINE,
    POLAR,
    TWO_PI,
    ChartPoint,
    DimensionError,
    ManifoldSpec,
    normalize,
    wrap_angles,
)

DRIFT = "drift"
CONSTANT = "constant"
RADIAL = "radial"
ROTATION = "rotation"

BLOCK_SIZE = {DRIFT: 1, CONSTANT: 1, RADIAL: 1, ROTATION: 2}

ROW_LETTERS = "abcde"


@dataclass(frozen=True)
class Scenario:
    id: str
    spec: ManifoldSpec
    blocks: tuple[str, ...]
    k: int
    names: tuple[str, ...]
    period: float = TWO_PI

    @property
    def dim(self) -> int:
        return self.spec.dim

    def block_slices(self):
        start = 0
        for kind in self.blocks:
            size = BLOCK_SIZE[kind]
            yield kind, slice(start, start + size)
            start += size

    def embed(self, alpha) -> np.ndarray:
        """Initial condition ``z_alpha = (alpha, beta0(alpha))`` of the
        unperturbed periodic orbit labelled by ``alpha``.  Radial coordinates
        outside the projection sit on the invariant set ``r = 1``."""
        alpha = np.asarray(alpha, dtype=float).reshape(-1)
        if alpha.shape[0] != self.k:
            raise DimensionError(f"{self.id}: expected {self.k} averaging coordinates, got {alpha.shape[0]}")
        z = np.empty(self.dim)
        z[: self.k] = alpha
        for kind, sl in self.block_slices():
            if sl.start >= self.k:
                if kind != RADIAL:
                    raise ValueError(f"{self.id}: only radial blocks may lie outside the projection")
                z[sl] = 1.0
        return z

    @property
    def drift_indices(self) -> tuple[int, ...]:
        return tuple(sl.start for kind, sl in self.block_slices() if kind == DRIFT)


def _make_scenarios() -> dict[str, Scenario]:
    s1 = Scenario(
        id="S1",
        spec=ManifoldSpec(1, 1),
        blocks=(DRIFT, CONSTANT, RADIAL),
        k=2,
        names=("theta", "phi", "r"),
    )
    s2 = Scenario(
        id="S2",
        spec=ManifoldSpec(2, 1),
        blocks=(DRIFT, CONSTANT, DRIFT, CONSTANT, RADIAL),
        k=4,
        names=("theta", "phi", "nu", "psi", "r"),
    )
    # line coordinates first, matching the natural (x, y, theta, phi) order
    s3 = Scenario(
        id="S3",
        spec=ManifoldSpec(1, 2, layout=(LINE, LINE, AZIMUTH, POLAR)),
        blocks=(ROTATION, DRIFT, CONSTANT),
        k=4,
        names=("x", "y", "theta", "phi"),
    )
    return {s.id: s for s in (s1, s2, s3)}


SCENARIOS: Mapping[str, Scenario] = _make_scenarios()


def get_scenario(scenario_id: str) -> Scenario:
    try:
        return SCENARIOS[scenario_id.upper()]
    except KeyError:
        raise ValueError(f"unknown scenario {scenario_id!r}; choose from {sorted(SCENARIOS)}") from None


def _rotation(angle: float) -> np.ndarray:
    # reduce first so that multiples of 2*pi give the identity exactly
    a = math.remainder(angle, TWO_PI)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s], [s, c]])


def unperturbed_field(s: Scenario, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.zeros(s.dim)
    for kind, sl in s.block_slices():
        if kind == DRIFT:
            out[sl] = 1.0
        elif kind == RADIAL:
            out[sl] = z[sl] - 1.0
        elif kind == ROTATION:
            x, y = z[sl]
            out[sl] = (-y, x)
    return out


def linearization(s: Scenario) -> np.ndarray:
    """Constant Jacobian ``D_x F_0``."""
    L = np.zeros((s.dim, s.dim))
    for kind, sl in s.block_slices():
        i = sl.start
        if kind == RADIAL:
            L[i, i] = 1.0
        elif kind == ROTATION:
            L[i, i + 1] = -1.0
            L[i + 1, i] = 1.0
    return L


def flow(s: Scenario, z0, t: float, normalized: bool = True):
    """Closed-form unperturbed flow.

    Accepts a :class:`ChartPoint` or a raw vector.  With ``normalized=False``
    the azimuths are left unwrapped (``theta0 + t``), which is what the
    averaging integrals need.
    """
    if isinstance(z0, ChartPoint):
        if z0.spec != s.spec:
            raise DimensionError("point does not belong to the scenario's manifold")
        z = np.array(z0.coords)
    else:
        z = np.array(z0, dtype=float).reshape(-1)
        if z.shape[0] != s.dim:
            raise DimensionError(f"{s.id}: expected {s.dim} coordinates")
    out = z.copy()
    for kind, sl in s.block_slices():
        if kind == DRIFT:
            out[sl] = z[sl] + t
        elif kind == RADIAL:
            out[sl] = (z[sl] - 1.0) * math.exp(t) + 1.0
        elif kind == ROTATION:
            out[sl] = _rotation(t) @ z[sl]
    if isinstance(z0, ChartPoint):
        p = ChartPoint(out, s.spec)
        return normalize(p) if normalized else p
    return wrap_angles(out, s.spec.azimuth_indices) if normalized else out


def fundamental_matrix(s: Scenario, t: float) -> np.ndarray:
    """``M(t) = exp(D_x F_0 t)`` assembled block by block."""
    M = np.eye(s.dim)
    for kind, sl in s.block_slices():
        if kind == RADIAL:
            M[sl, sl] = math.exp(t)
        elif kind == ROTATION:
            M[sl, sl] = _rotation(t)
    return M


def inverse_fundamental_matrix(s: Scenario, t: float) -> np.ndarray:
    return fundamental_matrix(s, -t)


@dataclass(frozen=True)
class MonodromyDefect:
    matrix: np.ndarray
    k: int
    upper_right_norm: float
    delta_det: float

    @property
    def condition_holds(self) -> bool:
        n = self.matrix.shape[0]
        if self.k == n:
            return True
        return self.upper_right_norm == 0.0 and self.delta_det != 0.0

    @property
    def lower_right(self) -> np.ndarray:
        return self.matrix[self.k :, self.k :]


def monodromy_defect(s: Scenario, k: int | None = None) -> MonodromyDefect:
    """``M^{-1}(0) - M^{-1}(T)`` with its block diagnostics."""
    k = s.k if k is None else k
    if not 1 <= k <= s.dim:
        raise ValueError(f"projection dimension must lie in [1, {s.dim}], got {k}")
    D = inverse_fundamental_matrix(s, 0.0) - inverse_fundamental_matrix(s, s.period)
    upper_right = D[:k, k:]
    ur_norm = float(np.max(np.abs(upper_right))) if upper_right.size else 0.0
    delta = float(np.linalg.det(D[k:, k:])) if k < s.dim else 1.0
    return MonodromyDefect(D, k, ur_norm, delta)


@dataclass(frozen=True)
class AffinePerturbation:
    """Coefficients of ``F_1(z) = A z + b``.

    Row ``i`` holds the i-th perturbed equation.  In named form the rows are
    ``a, b, c, ...``; index 0 is the constant term and index ``j >= 1``
    multiplies the j-th chart coordinate, so an S1 row reads
    ``(a1, a2, a3 | a0)``.
    """

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
            raise DimensionError(f"inconsistent perturbation shapes A{A.shape}, b{b.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("perturbation coefficients must be finite")
        A.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    @classmethod
    def zero(cls, s: Scenario) -> "AffinePerturbation":
        return cls(np.zeros((s.dim, s.dim)), np.zeros(s.dim))

    @classmethod
    def from_rows(cls, rows) -> "AffinePerturbation":
        """Build from rows ``(c0, c1, ..., c_dim)`` with the constant first."""
        rows = np.array(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != rows.shape[0] + 1:
            raise DimensionError(f"expected a dim x (dim+1) coefficient block, got {rows.shape}")
        return cls(rows[:, 1:], rows[:, 0])

    @classmethod
    def from_named(cls, s: Scenario, coefficients: Mapping[str, float]) -> "AffinePerturbation":
        """Build from names like ``a0, a2, b1``; absent coefficients are zero."""
        rows = np.zeros((s.dim, s.dim + 1))
        for name, value in coefficients.items():
            row, col = parse_coefficient_name(s, name)
            rows[row, col] = float(value)
        return cls.from_rows(rows)

    def rows(self) -> np.ndarray:
        return np.column_stack([self.b, self.A])

    def named(self) -> dict[str, float]:
        rows = self.rows()
        return {
            f"{ROW_LETTERS[i]}{j}": float(rows[i, j]) for i in range(rows.shape[0]) for j in range(rows.shape[1])
        }

    def scaled(self, factor: float) -> "AffinePerturbation":
        return AffinePerturbation(self.A * factor, self.b * factor)

    def check(self, s: Scenario) -> None:
        if self.dim != s.dim:
            raise DimensionError(f"{s.id} needs a {s.dim}-dimensional perturbation, got {self.dim}")


def parse_coefficient_name(s: Scenario, name: str) -> tuple[int, int]:
    name = name.strip().lower()
    if len(name) < 2 or name[0] not in ROW_LETTERS[: s.dim] or not name[1:].isdigit():
        raise ValueError(f"{s.id}: bad coefficient name {name!r}")
    row, col = ROW_LETTERS.index(name[0]), int(name[1:])
    if col > s.dim:
        raise ValueError(f"{s.id}: coefficient index out of range in {name!r}")
    return row, col


class PerturbedField:
    """``F_0(z) + eps F_1(z) + eps^2 F_2(z)`` with ``F_2 = 0``.

    Calling the field evaluates it at the chart-normalized point, so it is a
    well-defined vector field on the manifold.  The affine part jumps where an
    azimuth crosses the chart seam at +-pi; integrators that follow unwrapped
    azimuths use :meth:`segment_rhs` with an explicit seam shift instead.
    """

    def __init__(self, s: Scenario, P: AffinePerturbation, eps: float):
        if eps < 0.0:
            raise ValueError("eps must be non-negative")
        P.check(s)
        self.scenario = s
        self.perturbation = P
        self.eps = float(eps)
        self._L0 = linearization(s)
        self.linear_part = self._L0 + self.eps * P.A
        self.azimuth_indices = s.spec.azimuth_indices

    def second_order(self, z) -> np.ndarray:
        return np.zeros(self.scenario.dim)

    def segment_rhs(self, z: np.ndarray, shift: np.ndarray | None = None) -> np.ndarray:
        s = self.scenario
        chart = z if shift is None else z - shift
        F0 = unperturbed_field(s, z)
        F1 = self.perturbation.A @ chart + self.perturbation.b
        return F0 + self.eps * F1 + self.eps**2 * self.second_order(chart)

    def seam_shift(self, z: np.ndarray) -> np.ndarray:
        """Shift that maps every azimuth of ``z`` into the chart [-pi, pi)."""
        shift = np.zeros(self.scenario.dim)
        for i in self.azimuth_indices:
            shift[i] = TWO_PI * math.floor((z[i] + math.pi) / TWO_PI)
        return shift

    def jacobian(self, z=None) -> np.ndarray:
        return self.linear_part

    def __call__(self, z) -> np.ndarray:
        if isinstance(z, ChartPoint):
            z = z.coords
        z = np.asarray(z, dtype=float)
        if z.shape[0] != self.scenario.dim:
            raise DimensionError(f"{self.scenario.id}: expected {self.scenario.dim} coordinates")
        return self.segment_rhs(z, self.seam_shift(z))


def perturbed_field(s: Scenario, P: AffinePerturbation, eps: float) -> PerturbedField:
    return PerturbedField(s, P, eps)


def example_s1_perturbation(a: float = 1.0, b: float = 1.0) -> AffinePerturbation:
    """``theta' = 1 + eps a phi, phi' = eps b theta, r' = r - 1``."""
    return AffinePerturbation.from_named(SCENARIOS["S1"], {"a2": a, "b1": b})


def example_s3_perturbation(a: float = 2.0, b: float = 1.0, c: float = 1.0, d: float = 1.0) -> AffinePerturbation:
    """``x' = -y + eps a y, y' = x + eps b x, theta' = 1 + eps c phi, phi' = eps d theta``."""
    return AffinePerturbation.from_named(SCENARIOS["S3"], {"a2": a, "b1": b, "c4": c, "d3": d})


def rotation_block_kappa(P: AffinePerturbation) -> float:
    """Radius margin ``kappa`` of the S3 working region, ``2 sqrt(a3^2 + b3^2) /
    sqrt((a1 + b2)^2 + (a2 - b1)^2)``; returns 0 when the denominator vanishes."""
    n = P.named()
    num = 2.0 * math.hypot(n["a3"], n["b3"])
    den = math.hypot(n["a1"] + n["b2"], n["a2"] - n["b1"])
    return num / den if den > 0.0 else 0.0


def random_perturbation(s: Scenario, rng: np.random.Generator, scale: float = 1.0) -> AffinePerturbation:
    """Coefficients drawn uniformly from ``[-scale, scale]``."""
    rows = rng.uniform(-scale, scale, size=(s.dim, s.dim + 1))
    return AffinePerturbation.from_rows(rows)
