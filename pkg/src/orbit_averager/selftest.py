"""Seeded property suites run by ``orbit-averager selftest``.

Each suite compares a piece of the engine with an oracle that does not share
its code path: exact integrals against composite Gauss-Legendre quadrature,
closed-form flows against themselves under time composition, the RK4
integrator against the matrix exponential, and the averaged-map matrix
against central differences of the map.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .averaging import averaged_map
from .integrand import COS, NONE, SIN, ExpTrigTerm, TermSum, corrupted_product_table
from .manifold import ChartPoint, chart_distance
from .numerics import RK4, IntegratorConfig, finite_difference_jacobian, integrate
from .systems import RADIAL, ROTATION, SCENARIOS, CONSTANT, flow, get_scenario, perturbed_field, random_perturbation

DEFAULT_SEED = 20240601

INTEGRAND_CASES = 500
INTEGRAND_TOL = 1e-10
FLOW_CASES = 100
FLOW_TOL = 1e-12
ORDER_CASES = 3
ORDER_TARGET = 16.0
ORDER_BAND = 0.25
JACOBIAN_CASES = 12
JACOBIAN_TOL = 1e-8


@dataclass
class SuiteResult:
    name: str
    module: str
    seed: int
    cases: int
    worst: float
    limit: str
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name} [{self.module}] seed={self.seed} cases={self.cases} worst={self.worst:.3e} limit={self.limit}"


def _random_terms(rng: np.random.Generator) -> TermSum:
    terms = []
    for _ in range(rng.integers(1, 4)):
        trig = (NONE, SIN, COS)[rng.integers(3)]
        omega = 0.0 if trig == NONE else float(rng.choice([1.0, 2.0, 3.0, rng.uniform(0.3, 3.0)]))
        lam = float(rng.choice([0.0, 1.0, -1.0, rng.uniform(-1.0, 0.5)]))
        terms.append(ExpTrigTerm(float(rng.uniform(-2, 2)), int(rng.integers(0, 3)), lam, trig, omega))
    return TermSum(terms)


def _gauss_legendre(f, T: float, nodes: int = 64, panels: int = 8) -> tuple[float, float]:
    """Composite rule for ``int_0^T f`` and ``int_0^T |f|``."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, T, panels + 1)
    total = absolute = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        t = 0.5 * (b - a) * x + 0.5 * (b + a)
        v = f(t)
        total += 0.5 * (b - a) * float(w @ v)
        absolute += 0.5 * (b - a) * float(w @ np.abs(v))
    return total, absolute


def integrand_suite(seed: int, fault: bool = False) -> SuiteResult:
    rng = np.random.default_rng([seed, 1])
    result = SuiteResult("integrand-vs-quadrature", "integrand_algebra", seed, INTEGRAND_CASES, 0.0, f"{INTEGRAND_TOL:g} rel")
    guard = corrupted_product_table() if fault else contextlib.nullcontext()
    with guard:
        for case in range(INTEGRAND_CASES):
            f, g = _random_terms(rng), _random_terms(rng)
            T = float(rng.choice([2 * math.pi, rng.uniform(0.5, 2 * math.pi)]))
            exact = (f * g + f).integrate(T)
            quad, scale = _gauss_legendre(lambda t: f.values(t) * g.values(t) + f.values(t), T)
            err = abs(exact - quad) / max(scale, 1e-300)
            result.worst = max(result.worst, err)
            if not err <= INTEGRAND_TOL:
                result.failures.append(f"case {case}: relative error {err:.3e}")
    return result


def _random_state(s, rng: np.random.Generator) -> np.ndarray:
    z = []
    for kind, sl in s.block_slices():
        if kind == ROTATION:
            z += list(rng.uniform(-1.0, 1.0, 2))
        elif kind == RADIAL:
            z.append(rng.uniform(0.5, 1.5))
        elif kind == CONSTANT:
            z.append(rng.uniform(-1.2, 1.2))
        else:
            z.append(rng.uniform(-math.pi, math.pi))
    return np.array(z)


def flow_suite(seed: int) -> SuiteResult:
    rng = np.random.default_rng([seed, 2])
    result = SuiteResult("flow-composition", "systems", seed, FLOW_CASES, 0.0, f"{FLOW_TOL:g}")
    ids = sorted(SCENARIOS)
    for case in range(FLOW_CASES):
        s = get_scenario(ids[case % len(ids)])
        z = ChartPoint(_random_state(s, rng), s.spec)
        t1, t2 = rng.uniform(0.0, math.pi, 2)
        a = flow(s, flow(s, z, t1), t2)
        b = flow(s, z, t1 + t2)
        err = chart_distance(a, b) / max(1.0, float(np.max(np.abs(b.coords))))
        result.worst = max(result.worst, err)
        if not err <= FLOW_TOL:
            result.failures.append(f"case {case} ({s.id}): composition error {err:.3e}")
    return result


def order_suite(seed: int) -> SuiteResult:
    """Error ratio of fixed-step RK4 under step halving, on a perturbed S1
    flight off the invariant sphere (``r0 != 1``) that stays inside one
    chart segment, so the affine solution is an exact reference."""
    rng = np.random.default_rng([seed, 3])
    lo, hi = ORDER_TARGET * (1 - ORDER_BAND), ORDER_TARGET * (1 + ORDER_BAND)
    result = SuiteResult("rk4-order-ratio", "numerics", seed, ORDER_CASES, 0.0, f"[{lo:g}, {hi:g}]")
    s = get_scenario("S1")
    t_end, h = 1.5, 0.1
    for case in range(ORDER_CASES):
        P = random_perturbation(s, rng)
        fld = perturbed_field(s, P, 0.1)
        z0 = np.array([rng.uniform(-3.0, -2.5), rng.uniform(-0.5, 0.5), rng.choice([-1, 1]) * rng.uniform(0.2, 0.8) + 1.0])
        L = fld.linear_part
        c = fld.segment_rhs(np.zeros(3), np.zeros(3))
        aug = np.zeros((4, 4))
        aug[:3, :3], aug[:3, 3] = L, c
        exact = (expm(aug * t_end) @ np.append(z0, 1.0))[:3]
        errs = []
        for step in (h, h / 2):
            traj = integrate(fld, z0, t_end, IntegratorConfig(method=RK4, initial_step=step))
            if traj.seam_crossings:
                raise RuntimeError("order check flight crossed a seam")
            errs.append(float(np.max(np.abs(traj.final_state - exact))))
        ratio = errs[0] / errs[1]
        result.worst = max(result.worst, abs(ratio - ORDER_TARGET) / ORDER_TARGET)
        if not lo <= ratio <= hi:
            result.failures.append(f"case {case}: ratio {ratio:.3f}")
    return result


def jacobian_suite(seed: int) -> SuiteResult:
    rng = np.random.default_rng([seed, 4])
    result = SuiteResult("fd-jacobian-recovery", "averaging", seed, JACOBIAN_CASES, 0.0, f"{JACOBIAN_TOL:g} rel")
    ids = sorted(SCENARIOS)
    for case in range(JACOBIAN_CASES):
        s = get_scenario(ids[case % len(ids)])
        M = averaged_map(s, random_perturbation(s, rng))
        alpha = rng.uniform(-1.0, 1.0, M.k)
        J = finite_difference_jacobian(M, alpha, step=1e-3)
        err = float(np.max(np.abs(J - M.K))) / max(1.0, float(np.max(np.abs(M.K))))
        result.worst = max(result.worst, err)
        if not err <= JACOBIAN_TOL:
            result.failures.append(f"case {case} ({s.id}): relative error {err:.3e}")
    return result


def run_selftest(seed: int = DEFAULT_SEED, fault: bool = False) -> list[SuiteResult]:
    """All suites for one seed.  ``fault`` corrupts the product table while
    the integrand suite runs (negative control)."""
    return [integrand_suite(seed, fault), flow_suite(seed), order_suite(seed), jacobian_suite(seed)]
