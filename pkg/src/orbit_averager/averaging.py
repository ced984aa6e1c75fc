"""First-order averaged map of the perturbed systems, in closed form.

For a perturbation ``F_1(z) = A z + b`` the averaged function

    F(alpha) = proj_k  int_0^T  M(t)^{-1} F_1(x(t, z_alpha, 0)) dt

is affine in ``alpha``.  :func:`averaged_map` builds it exactly with
:mod:`orbit_averager.integrand`; :func:`numeric_averaged` evaluates the same
integral by Gauss-Legendre quadrature and serves as the independent check.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .integrand import TermSum
from .manifold import ChartPoint, ChartRegion, DimensionError, in_region, normalize
from .systems import (
    CONSTANT,
    DRIFT,
    RADIAL,
    ROTATION,
    AffinePerturbation,
    Scenario,
    flow,
    fundamental_matrix,
    get_scenario,
)

SINGULAR_RTOL = 1e-12


class AffineForm:
    """``sum_i coeffs[i] * alpha_i + const`` with TermSum coefficients."""

    def __init__(self, k: int, coeffs=None, const: TermSum | None = None):
        self.k = k
        self.coeffs = list(coeffs) if coeffs is not None else [TermSum() for _ in range(k)]
        self.const = const if const is not None else TermSum()

    @classmethod
    def variable(cls, k: int, i: int, factor: TermSum) -> "AffineForm":
        form = cls(k)
        form.coeffs[i] = factor
        return form

    def __add__(self, other: "AffineForm") -> "AffineForm":
        return AffineForm(
            self.k, [a + b for a, b in zip(self.coeffs, other.coeffs)], self.const + other.const
        )

    def times(self, factor) -> "AffineForm":
        return AffineForm(self.k, [c * factor for c in self.coeffs], self.const * factor)

    def integrate(self, T: float) -> tuple[np.ndarray, float]:
        return (
            np.array([c.integrate(T) for c in self.coeffs]),
            self.const.integrate(T),
        )

    def __repr__(self) -> str:
        parts = [f"({c!r})*alpha{i}" for i, c in enumerate(self.coeffs) if c]
        if self.const:
            parts.append(repr(self.const))
        return " + ".join(parts) or "0"


def _periodic_solution(s: Scenario) -> list[AffineForm]:
    """Unperturbed periodic orbit through ``z_alpha`` as affine forms in alpha."""
    k = s.k
    one = TermSum.constant(1.0)
    comps: list[AffineForm] = [None] * s.dim  # type: ignore[list-item]
    for kind, sl in s.block_slices():
        i = sl.start
        if kind in (DRIFT, CONSTANT, ROTATION) and sl.stop > k:
            raise ValueError(f"{s.id}: {kind} block must lie inside the projection")
        if kind == DRIFT:
            comps[i] = AffineForm.variable(k, i, one) + AffineForm(k, const=TermSum.monomial())
        elif kind == CONSTANT:
            comps[i] = AffineForm.variable(k, i, one)
        elif kind == RADIAL:
            comps[i] = AffineForm(k, const=one)
        elif kind == ROTATION:
            c, sn = TermSum.cos(), TermSum.sin()
            comps[i] = AffineForm.variable(k, i, c) + AffineForm.variable(k, i + 1, -sn)
            comps[i + 1] = AffineForm.variable(k, i, sn) + AffineForm.variable(k, i + 1, c)
    return comps


def _inverse_fundamental_terms(s: Scenario) -> list[list[TermSum]]:
    zero, one = TermSum(), TermSum.constant(1.0)
    Minv = [[zero] * s.dim for _ in range(s.dim)]
    for kind, sl in s.block_slices():
        i = sl.start
        if kind in (DRIFT, CONSTANT):
            Minv[i][i] = one
        elif kind == RADIAL:
            Minv[i][i] = TermSum.exp(-1.0)
        elif kind == ROTATION:
            c, sn = TermSum.cos(), TermSum.sin()
            Minv[i][i], Minv[i][i + 1] = c, sn
            Minv[i + 1][i], Minv[i + 1][i + 1] = -sn, c
    return Minv


@dataclass(frozen=True)
class AveragedMap:
    """``F(alpha) = scale * (K alpha + h)``.  All constants are folded into
    ``K`` and ``h``, so ``scale`` is 1; it is kept for reports that factor out
    a common multiple."""

    scenario_id: str
    K: np.ndarray
    h: np.ndarray
    scale: float = 1.0
    components: tuple = field(default=(), repr=False, compare=False)

    @property
    def k(self) -> int:
        return self.h.shape[0]

    def __call__(self, alpha) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=float)
        return self.scale * (self.K @ alpha + self.h)


def _symbolic_components(s: Scenario, P: AffinePerturbation) -> list[AffineForm]:
    """Integrands of the k averaged components as affine forms in alpha."""
    x = _periodic_solution(s)
    Minv = _inverse_fundamental_terms(s)
    F1 = []
    for row in range(s.dim):
        form = AffineForm(s.k, const=TermSum.constant(P.b[row]))
        for j in range(s.dim):
            if P.A[row, j] != 0.0:
                form = form + x[j].times(P.A[row, j])
        F1.append(form)
    components = []
    for p in range(s.k):
        integrand = AffineForm(s.k)
        for l in range(s.dim):
            if Minv[p][l]:
                integrand = integrand + F1[l].times(Minv[p][l])
        components.append(integrand)
    return components


@functools.lru_cache(maxsize=None)
def _basis_integrals(scenario_id: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact integrals that make the averaged map a contraction with the
    coefficients:

    * ``W[p, l, j, m] = int Minv[p][l] * dx_j/dalpha_m``
    * ``C[p, l, j]    = int Minv[p][l] * x_j|_(alpha=0)``
    * ``V[p, l]       = int Minv[p][l]``
    """
    s = get_scenario(scenario_id)
    x = _periodic_solution(s)
    Minv = _inverse_fundamental_terms(s)
    T = s.period
    W = np.zeros((s.k, s.dim, s.dim, s.k))
    C = np.zeros((s.k, s.dim, s.dim))
    V = np.zeros((s.k, s.dim))
    for p in range(s.k):
        for l in range(s.dim):
            if not Minv[p][l]:
                continue
            V[p, l] = Minv[p][l].integrate(T)
            for j in range(s.dim):
                coeffs, const = x[j].times(Minv[p][l]).integrate(T)
                W[p, l, j] = coeffs
                C[p, l, j] = const
    for arr in (W, C, V):
        arr.flags.writeable = False
    return W, C, V


def averaged_map(s: Scenario | str, P: AffinePerturbation, audit: bool = False) -> AveragedMap:
    """Closed-form averaged map.  The exact integrals depend only on the
    scenario and are computed once; each call contracts them with ``A`` and
    ``b``.  ``audit=True`` instead multiplies out the integrands for this
    perturbation and keeps them in ``components``."""
    s = get_scenario(s) if isinstance(s, str) else s
    P.check(s)
    if audit:
        components = _symbolic_components(s, P)
        K = np.zeros((s.k, s.k))
        h = np.zeros(s.k)
        for p, form in enumerate(components):
            K[p], h[p] = form.integrate(s.period)
        return AveragedMap(s.id, K, h, 1.0, tuple(components))
    W, C, V = _basis_integrals(s.id)
    K = np.einsum("lj,pljm->pm", P.A, W)
    h = np.einsum("lj,plj->p", P.A, C) + V @ P.b
    return AveragedMap(s.id, K, h)


def laplace_det(M) -> float:
    """Determinant by cofactor expansion along the sparsest row.  Meant for the
    small (k <= 4) matrices here; exact arithmetic on the entries given."""
    rows = [[float(v) for v in r] for r in np.asarray(M, dtype=float)]
    return _laplace(rows)


def _laplace(M: list[list[float]]) -> float:
    n = len(M)
    if n == 0:
        return 1.0
    if n == 1:
        return M[0][0]
    if n == 2:
        return M[0][0] * M[1][1] - M[0][1] * M[1][0]
    row = max(range(n), key=lambda i: sum(v == 0.0 for v in M[i]))
    total = []
    for j in range(n):
        if M[row][j] == 0.0:
            continue
        minor = [[v for c, v in enumerate(r) if c != j] for i, r in enumerate(M) if i != row]
        total.append((-1) ** (row + j) * M[row][j] * _laplace(minor))
    return math.fsum(total)


def jacobian_det(M: AveragedMap) -> float:
    return M.scale**M.k * laplace_det(M.K)


@dataclass(frozen=True)
class RootResult:
    alpha: np.ndarray | None
    det: float
    in_region: bool
    degenerate: bool
    point: ChartPoint | None = None


def is_degenerate(K: np.ndarray, det: float) -> bool:
    k = K.shape[0]
    norm_inf = float(np.max(np.sum(np.abs(K), axis=1))) if K.size else 0.0
    return abs(det) <= SINGULAR_RTOL * (1.0 + norm_inf**k)


def solve_root(M: AveragedMap, R: ChartRegion | None = None) -> RootResult:
    """Solve ``K alpha = -h``.  A singular ``K`` gives a degenerate result,
    not an exception."""
    R = R or ChartRegion()
    det = jacobian_det(M)
    if is_degenerate(M.scale * M.K, det):
        return RootResult(None, det, False, True)
    alpha = np.linalg.solve(M.K, -M.h) + 0.0
    s = get_scenario(M.scenario_id)
    point = normalize(ChartPoint(s.embed(alpha), s.spec))
    return RootResult(alpha, det, in_region(point, R), False, point)


def numeric_averaged(s: Scenario | str, P: AffinePerturbation, alpha, nodes: int = 64, panels: int = 1) -> np.ndarray:
    """Gauss-Legendre evaluation of the averaged function at ``alpha``."""
    s = get_scenario(s) if isinstance(s, str) else s
    if nodes < 16:
        raise ValueError("use at least 16 quadrature nodes")
    P.check(s)
    x0, w0 = np.polynomial.legendre.leggauss(nodes)
    z_alpha = s.embed(alpha)
    edges = np.linspace(0.0, s.period, panels + 1)
    total = np.zeros(s.dim)
    for lo, hi in zip(edges[:-1], edges[1:]):
        half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
        for xi, wi in zip(x0, w0):
            t = mid + half * xi
            z = flow(s, z_alpha, t, normalized=False)
            Minv = np.linalg.inv(fundamental_matrix(s, t))
            total += half * wi * (Minv @ (P.A @ z + P.b))
    return total[: s.k]


# Closed-form root formulas for the three scenarios -----------------------------


def s1_root_formula(P: AffinePerturbation) -> tuple[float, float]:
    """Root ``(theta0, phi0)`` of the S1 averaged map written out by Cramer's
    rule.  The phi0 numerator uses ``b1*pi``, which is what the linear system
    gives."""
    n = P.named()
    a0, a1, a2, a3 = (n[f"a{i}"] for i in range(4))
    b0, b1, b2, b3 = (n[f"b{i}"] for i in range(4))
    den = a1 * b2 - a2 * b1
    theta0 = (a2 * (b0 + b3 + b1 * math.pi) - b2 * (a0 + a3 + a1 * math.pi)) / den
    phi0 = (b1 * (a0 + a3 + a1 * math.pi) - a1 * (b0 + b3 + b1 * math.pi)) / den
    return theta0, phi0


def s1_phi0_printed_variant(P: AffinePerturbation) -> float:
    """The phi0 expression with ``b2*pi`` in place of ``b1*pi``.  Kept only to
    show where the two readings differ; never used for roots."""
    n = P.named()
    a0, a1, a2, a3 = (n[f"a{i}"] for i in range(4))
    b0, b1, b2, b3 = (n[f"b{i}"] for i in range(4))
    return (b1 * (a0 + a3 + a1 * math.pi) - a1 * (b0 + b3 + b2 * math.pi)) / (a1 * b2 - a2 * b1)


def s1_det_formula(P: AffinePerturbation) -> float:
    n = P.named()
    return 4.0 * math.pi**2 * (n["a1"] * n["b2"] - n["a2"] * n["b1"])


def s2_root_system(P: AffinePerturbation) -> tuple[np.ndarray, np.ndarray]:
    """Linear system ``C alpha = rhs`` whose solution is the S2 root: ``C`` is
    the 4x4 minor of coefficients of (theta, phi, nu, psi) in rows a..d and
    ``rhs_i = -(c0 + c1 pi + c3 pi + c5)`` per row."""
    rows = P.rows()[:4]
    C = rows[:, 1:5]
    rhs = -(rows[:, 0] + rows[:, 1] * math.pi + rows[:, 3] * math.pi + rows[:, 5])
    return C, rhs


def s2_det_formula(P: AffinePerturbation) -> float:
    C, _ = s2_root_system(P)
    return 16.0 * math.pi**4 * laplace_det(C)


def s3_nondegeneracy_determinants(P: AffinePerturbation) -> tuple[float, float]:
    """The two 2x2 determinants that must not vanish for S3: the rotation
    block ``(b2 + a1)^2 + (a2 - b1)^2`` and ``c3 d4 - c4 d3``."""
    n = P.named()
    rot = (n["b2"] + n["a1"]) ** 2 + (n["a2"] - n["b1"]) ** 2
    sphere = n["c3"] * n["d4"] - n["c4"] * n["d3"]
    return rot, sphere


def s3_root_formula(P: AffinePerturbation) -> tuple[float, float, float, float]:
    n = P.named()
    a0, a1, a2, a3 = (n[f"a{i}"] for i in range(4))
    b0, b1, b2, b3 = (n[f"b{i}"] for i in range(4))
    c0, c3, c4 = n["c0"], n["c3"], n["c4"]
    d0, d3, d4 = n["d0"], n["d3"], n["d4"]
    den = b2**2 + b1**2 + a2**2 + a1**2 + 2 * a1 * b2 - 2 * a2 * b1
    x0 = ((2 * b2 + 2 * a1) * b3 - 2 * a3 * b1 + 2 * a2 * a3) / den
    y0 = -((2 * b1 - 2 * a2) * b3 + 2 * a3 * b2 + 2 * a1 * a3) / den
    sden = c3 * d4 - c4 * d3
    theta0 = -((math.pi * c3 + c0) * d4 - math.pi * c4 * d3 - c4 * d0) / sden
    phi0 = (c0 * d3 - c3 * d0) / sden
    return x0, y0, theta0, phi0


def s3_det_formula(P: AffinePerturbation) -> float:
    rot, sphere = s3_nondegeneracy_determinants(P)
    return math.pi**2 * rot * 4.0 * math.pi**2 * sphere
