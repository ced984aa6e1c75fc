"""Numerical confirmation of predicted limit cycles.

A predicted cycle is checked on the Poincare section ``theta = theta_sec``
(one azimuth held fixed).  :func:`find_fixed_point` runs damped Newton on
``y - P(y)``.  When the return map has a whole curve of fixed points (the
Jacobian ``I - DP`` is rank deficient, as happens for the worked examples
where a first integral makes the return map the identity on the sphere), the
period condition ``tau(y) = T`` is appended and the stacked system is solved
by Gauss-Newton.  That singles out the member of the family with period
exactly ``T``, which is the cycle the averaging prediction refers to.
"""

from __future__ import annotations

import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .manifold import (
    TWO_PI,
    ChartPoint,
    ChartRegion,
    NearPoleWarning,
    chart_distance,
    normalize,
    wrap_angle,
    wrap_angles,
)
from .numerics import Crossing, IntegrationError, IntegratorConfig, integrate
from .systems import RADIAL, AffinePerturbation, Scenario, flow, perturbed_field

DEFAULT_TOL = 1e-8
DEGENERACY_TOL = 1e-6
MAX_NEWTON = 50
MAX_HALVINGS = 8
MAX_STEP = 0.5  # largest Newton correction per coordinate before damping

CERTIFIED = "certified"
DEGENERATE = "degenerate"
FAILED = "failed"


@dataclass(frozen=True)
class SectionSpec:
    """Section ``z[index] = value`` crossed with increasing azimuth.  ``index``
    defaults to the scenario's first drifting azimuth."""

    index: int | None = None
    value: float = -math.pi

    def resolve(self, s: Scenario) -> int:
        idx = s.drift_indices[0] if self.index is None else self.index
        if idx not in s.spec.azimuth_indices:
            raise ValueError(f"section index {idx} is not an azimuth of {s.id}")
        return idx


def section_names(s: Scenario, sec: SectionSpec) -> list[str]:
    idx = sec.resolve(s)
    return [name for i, name in enumerate(s.names) if i != idx]


def to_full_state(s: Scenario, sec: SectionSpec, y) -> np.ndarray:
    return np.insert(np.asarray(y, dtype=float), sec.resolve(s), sec.value)


def section_prediction(s: Scenario, alpha, sec: SectionSpec) -> ChartPoint:
    """Point where the unperturbed orbit through ``z_alpha`` meets the section."""
    idx = sec.resolve(s)
    z = s.embed(alpha)
    t_hit = (sec.value - z[idx]) % TWO_PI
    z = flow(s, z, t_hit, normalized=False)
    z[idx] = sec.value
    return normalize(ChartPoint(z, s.spec))


@dataclass
class ReturnResult:
    y: np.ndarray
    time: float
    status: str
    state: np.ndarray
    jacobian: np.ndarray | None = None
    time_gradient: np.ndarray | None = None
    states: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _section_azimuths(s: Scenario, idx: int) -> list[int]:
    others = [i for i in range(s.dim) if i != idx]
    return [j for j, i in enumerate(others) if i in s.spec.azimuth_indices]


def return_map(
    s: Scenario,
    P: AffinePerturbation,
    eps: float,
    sec: SectionSpec,
    y,
    cfg: IntegratorConfig | None = None,
    region: ChartRegion | None = None,
    jacobian: bool = False,
) -> ReturnResult:
    """First return to the section.  Status is ``ok``, ``boundary_exit``
    (the flight left ``region``, by default the polar band), ``near_pole`` or
    ``no_return`` (no crossing within three periods).  Integration stops at
    the first exit."""
    idx = sec.resolve(s)
    z0 = to_full_state(s, sec, y)
    fld = perturbed_field(s, P, eps)
    event = Crossing(idx, sec.value + TWO_PI, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearPoleWarning)
        traj = integrate(
            fld, z0, 3 * s.period, cfg, tangent=jacobian, event=event, region=region or ChartRegion(), spec=s.spec
        )
    end = traj.final_state
    others = [i for i in range(s.dim) if i != idx]
    y_out = wrap_angles(end[others], _section_azimuths(s, idx))
    if traj.exit_time is not None:
        status = "boundary_exit"
    elif traj.event_time is None:
        status = "no_return"
    elif traj.near_pole:
        status = "near_pole"
    else:
        status = "ok"
    result = ReturnResult(y_out, traj.event_time if traj.event_time is not None else math.nan, status, end, states=traj.states)
    if jacobian and traj.event_time is not None:
        Phi = traj.final_tangent
        f_end = traj.final_rhs
        grad_tau = -Phi[idx] / f_end[idx]
        D = Phi + np.outer(f_end, grad_tau)
        result.jacobian = D[np.ix_(others, others)]
        result.time_gradient = grad_tau[others]
    return result


@dataclass
class CycleCertificate:
    eps: float
    status: str
    y: np.ndarray
    point: ChartPoint | None
    residual: float
    period_residual: float
    multipliers: np.ndarray
    distance: float
    period: float
    selection: str = "isolated"
    hyperbolic: bool = False
    det_dp_minus_i: float = math.nan
    iterations: int = 0
    radial_deviation: float | None = None
    message: str = ""

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED


def _residual(s, idx, y, res: ReturnResult) -> np.ndarray:
    G = y - res.y
    for j in _section_azimuths(s, idx):
        G[j] = -wrap_angle(res.y[j] - y[j])
    return G


def _stack(G, res: ReturnResult, T: float, with_period: bool):
    n = G.shape[0]
    J = np.eye(n) - res.jacobian
    if not with_period:
        return G, J
    return np.append(G, res.time - T), np.vstack([J, res.time_gradient])


def _failure(eps, status, y, message, iterations=0, res=None, T=TWO_PI) -> CycleCertificate:
    residual = math.nan
    return CycleCertificate(
        eps=eps,
        status=status,
        y=np.asarray(y, dtype=float),
        point=None,
        residual=residual,
        period_residual=math.nan,
        multipliers=np.array([], dtype=complex),
        distance=math.nan,
        period=res.time if res is not None else math.nan,
        iterations=iterations,
        message=message,
    )


def _sorted_multipliers(DP: np.ndarray) -> np.ndarray:
    mu = np.linalg.eigvals(DP)
    order = sorted(range(len(mu)), key=lambda i: (-abs(mu[i]), -mu[i].real, -mu[i].imag))
    return mu[order]


def find_fixed_point(
    s: Scenario,
    P: AffinePerturbation,
    eps: float,
    sec: SectionSpec,
    guess,
    tol: float = DEFAULT_TOL,
    cfg: IntegratorConfig | None = None,
    region: ChartRegion | None = None,
    prediction: ChartPoint | None = None,
) -> CycleCertificate:
    idx = sec.resolve(s)
    T = s.period
    y = np.array(guess, dtype=float)
    try:
        res = return_map(s, P, eps, sec, y, cfg, region, jacobian=True)
    except IntegrationError as exc:
        return _failure(eps, FAILED, y, str(exc))
    if not res.ok:
        return _failure(eps, res.status, y, "return map unavailable at the initial guess", res=res)

    G = _residual(s, idx, y, res)
    J = np.eye(len(y)) - res.jacobian
    with_period = bool(np.linalg.svd(J, compute_uv=False)[-1] <= DEGENERACY_TOL)
    R, JR = _stack(G, res, T, with_period)
    if np.linalg.svd(JR, compute_uv=False)[-1] <= DEGENERACY_TOL:
        return _failure(eps, DEGENERATE, y, "Newton Jacobian is singular: continuum of fixed points", res=res)

    def converged(R):
        section = np.linalg.norm(R[: len(y)])
        return section < tol and (not with_period or abs(R[-1]) < tol)

    iterations = 0
    while not converged(R):
        if iterations >= MAX_NEWTON:
            cert = _failure(eps, FAILED, y, f"no convergence in {MAX_NEWTON} iterations", iterations, res)
            cert.residual = float(np.linalg.norm(R[: len(y)]))
            return cert
        iterations += 1
        step = np.linalg.lstsq(JR, -R, rcond=None)[0]
        biggest = np.max(np.abs(step))
        if biggest > MAX_STEP:
            step *= MAX_STEP / biggest
        norm0 = np.linalg.norm(R)
        lam = 1.0
        accepted = None
        for _ in range(MAX_HALVINGS + 1):
            y_try = y + lam * step
            try:
                res_try = return_map(s, P, eps, sec, y_try, cfg, region, jacobian=True)
            except IntegrationError:
                res_try = None
            if res_try is not None and res_try.ok:
                R_try, JR_try = _stack(_residual(s, idx, y_try, res_try), res_try, T, with_period)
                accepted = (y_try, res_try, R_try, JR_try)
                if np.linalg.norm(R_try) < norm0:
                    break
            lam *= 0.5
        if accepted is None:
            return _failure(eps, FAILED, y, "Newton step left the domain of the return map", iterations, res)
        y, res, R, JR = accepted

    DP = res.jacobian
    mu = _sorted_multipliers(DP)
    point = normalize(ChartPoint(to_full_state(s, sec, y), s.spec))
    radial = [sl.start for kind, sl in s.block_slices() if kind == RADIAL]
    deviation = float(np.max(np.abs(res.states[:, radial] - 1.0))) if radial else None
    margin = eps / 10.0
    return CycleCertificate(
        eps=eps,
        status=CERTIFIED,
        y=y,
        point=point,
        residual=float(np.linalg.norm(R[: len(y)])),
        period_residual=float(res.time - T),
        multipliers=mu,
        distance=chart_distance(point, prediction) if prediction is not None else math.nan,
        period=float(res.time),
        selection="period" if with_period else "isolated",
        hyperbolic=bool(np.all(np.abs(mu - 1.0) >= margin)) if eps > 0 else False,
        det_dp_minus_i=float(np.linalg.det(DP - np.eye(len(y)))),
        iterations=iterations,
        radial_deviation=deviation,
    )


@dataclass
class SweepResult:
    scenario_id: str
    names: list[str]
    rows: list[CycleCertificate]
    slope: float | None
    intercept: float | None
    period_constant: float | None

    @property
    def all_certified(self) -> bool:
        return bool(self.rows) and all(r.certified for r in self.rows)

    def failed_rows(self) -> list[int]:
        return [i for i, r in enumerate(self.rows) if not r.certified]

    def to_csv(self) -> str:
        n_mult = max([len(self.names)] + [len(r.multipliers) for r in self.rows])
        header = ["eps", *self.names, "residual"]
        for i in range(n_mult):
            header += [f"mult{i + 1}_re", f"mult{i + 1}_im"]
        header += ["distance", "period", "status"]
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for r in self.rows:
            cells = [_fmt(r.eps), *(_fmt(v) for v in r.y), _fmt(r.residual)]
            for i in range(n_mult):
                if i < len(r.multipliers):
                    cells += [_fmt(r.multipliers[i].real), _fmt(r.multipliers[i].imag)]
                else:
                    cells += ["nan", "nan"]
            cells += [_fmt(r.distance), _fmt(r.period), r.status]
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()


def _fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x + 0.0, ".17g")


def fit_slope(eps_values, distances) -> tuple[float | None, float | None]:
    """Least-squares slope of log(distance) against log(eps)."""
    pairs = [(e, d) for e, d in zip(eps_values, distances) if e > 0 and d > 0 and math.isfinite(d)]
    if len(pairs) < 2:
        return None, None
    x = np.log([p[0] for p in pairs])
    y = np.log([p[1] for p in pairs])
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def _sweep_row(args) -> CycleCertificate:
    s, P, eps, sec, guess, tol, cfg, region, prediction = args
    return find_fixed_point(s, P, eps, sec, guess, tol, cfg, region, prediction)


def epsilon_sweep(
    s: Scenario,
    P: AffinePerturbation,
    sec: SectionSpec,
    prediction: ChartPoint,
    eps_list,
    tol: float = DEFAULT_TOL,
    cfg: IntegratorConfig | None = None,
    region: ChartRegion | None = None,
    jobs: int = 1,
) -> SweepResult:
    """One certificate per eps, each started from the prediction on the
    section.  Rows keep the input order whatever the completion order."""
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list):
        raise ValueError("eps values must be positive")
    idx = sec.resolve(s)
    guess = np.delete(np.asarray(prediction.coords), idx)
    tasks = [(s, P, e, sec, guess, tol, cfg, region, prediction) for e in eps_list]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(t) for t in tasks]
    ok = [r for r in rows if r.certified]
    slope, intercept = fit_slope([r.eps for r in ok], [r.distance for r in ok])
    C = max((abs(r.period - s.period) / r.eps for r in ok), default=None)
    return SweepResult(s.id, section_names(s, sec), rows, slope, intercept, C)
