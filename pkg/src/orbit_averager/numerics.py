"""Runge-Kutta integration of the perturbed systems with tangent propagation.

Azimuths are integrated unwrapped.  Fields that know about the chart seam
(anything exposing ``segment_rhs``/``seam_shift``, such as
:class:`~orbit_averager.systems.PerturbedField`) are integrated segment by
segment: the seam crossing is located like any other event, the seam shift
is updated there and the tangent matrix picks up the saltation jump.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .manifold import (
    TWO_PI,
    ChartPoint,
    ChartRegion,
    ManifoldSpec,
    NearPoleWarning,
    POLE_WARNING_MARGIN,
    in_region,
    pole_distance,
    wrap_angles,
)

RK4 = "rk4-fixed"
RK45 = "rk45-adaptive"
EVENT_TIME_TOL = 1e-12
# local error target is tolerance / SAFETY so that endpoint (global) error
# stays within a small multiple of the tolerance over one period
SAFETY = 10.0


class IntegrationError(RuntimeError):
    pass


class StiffnessError(IntegrationError):
    """Step size fell below the configured minimum."""


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = RK45
    atol: float = 1e-10
    rtol: float = 1e-10
    max_step: float = TWO_PI / 16
    initial_step: float = 1e-3  # also the fixed step of rk4-fixed
    min_step: float = 1e-13
    max_steps: int = 200_000

    def __post_init__(self):
        if self.method not in (RK4, RK45):
            raise ValueError(f"unknown method {self.method!r}")
        if not (self.atol > 0 and self.rtol > 0):
            raise ValueError("tolerances must be positive")
        if not (0 < self.max_step <= TWO_PI / 16 * (1 + 1e-12)):
            raise ValueError("max_step must lie in (0, T/16]")
        if not (0 < self.initial_step):
            raise ValueError("initial_step must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


@dataclass(frozen=True)
class Crossing:
    """Event ``z[index] == level`` reached in the given direction."""

    index: int
    level: float
    direction: int = 1

    def value(self, z) -> float:
        return self.direction * (z[self.index] - self.level)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    tangents: np.ndarray | None = None
    status: str = "ok"
    event_time: float | None = None
    exit_time: float | None = None
    near_pole: bool = False
    seam_crossings: int = 0
    final_rhs: np.ndarray | None = field(default=None, repr=False)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_tangent(self) -> np.ndarray | None:
        return None if self.tangents is None else self.tangents[-1]

    def interpolate(self, t: float) -> np.ndarray:
        """Linear interpolation between accepted steps."""
        return np.array([np.interp(t, self.times, self.states[:, j]) for j in range(self.states.shape[1])])


# Dormand-Prince 5(4)
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4


class _System:
    """Augmented right-hand side ``[f(z); J(z) Phi]`` over one seam segment."""

    def __init__(self, fn, dim: int, tangent: bool):
        self.fn = fn
        self.dim = dim
        self.tangent = tangent
        self.segmented = hasattr(fn, "segment_rhs") and hasattr(fn, "seam_shift")
        self.azimuths = tuple(getattr(fn, "azimuth_indices", ())) if self.segmented else ()
        if tangent and not hasattr(fn, "jacobian"):
            raise TypeError("tangent propagation needs a field with a jacobian() method")
        self.shift = np.zeros(dim)

    def f(self, z):
        if self.segmented:
            return self.fn.segment_rhs(z, self.shift)
        return np.asarray(self.fn(z), dtype=float)

    def __call__(self, y):
        z = y[: self.dim]
        dz = self.f(z)
        if not self.tangent:
            return dz
        Phi = y[self.dim :].reshape(self.dim, self.dim)
        return np.concatenate([dz, (self.fn.jacobian(z) @ Phi).ravel()])

    def seam_events(self) -> list[Crossing]:
        out = []
        for i in self.azimuths:
            out.append(Crossing(i, self.shift[i] + math.pi, 1))
            out.append(Crossing(i, self.shift[i] - math.pi, -1))
        return out


def _rk4_step(sys: _System, y, h):
    k1 = sys(y)
    k2 = sys(y + 0.5 * h * k1)
    k3 = sys(y + 0.5 * h * k2)
    k4 = sys(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), None


def _dp_step(sys: _System, y, h):
    K = np.empty((7, y.shape[0]))
    K[0] = sys(y)
    for s in range(1, 7):
        acc = y.copy()
        for j, a in enumerate(_DP_A[s]):
            if a:
                acc += h * a * K[j]
        K[s] = sys(acc)
    y_new = y + h * (_DP_B5 @ K)
    return y_new, h * (_DP_E @ K)


def _error_norm(err, y, y_new, cfg: IntegratorConfig) -> float:
    sc = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
    return SAFETY * float(np.max(np.abs(err / sc)))


def _locate(stepper, sys, y, h, event: Crossing, dim: int) -> float:
    """Time offset in (0, h] at which ``event`` fires, refined by bracketing
    on a re-taken step from ``y`` to within EVENT_TIME_TOL."""

    def g(delta):
        if delta == 0.0:
            return event.value(y[:dim])
        return event.value(stepper(sys, y, delta)[0][:dim])

    g_end = g(h)
    if g_end == 0.0:
        return h
    return brentq(g, 0.0, h, xtol=EVENT_TIME_TOL, rtol=4 * np.finfo(float).eps, maxiter=200)


def _fired(event: Crossing, z_old, z_new) -> bool:
    return event.value(z_old) < 0.0 <= event.value(z_new)


def _saltation(sys: _System, z, crossing: Crossing, new_shift: np.ndarray) -> np.ndarray:
    f_minus = sys.f(z)
    old = sys.shift
    sys.shift = new_shift
    f_plus = sys.f(z)
    sys.shift = old
    n = np.zeros(sys.dim)
    n[crossing.index] = 1.0
    return np.eye(sys.dim) + np.outer(f_plus - f_minus, n) / (n @ f_minus)


def integrate(
    fn: Callable,
    z0,
    t_end: float,
    cfg: IntegratorConfig | None = None,
    *,
    tangent: bool = False,
    event: Crossing | None = None,
    region: ChartRegion | None = None,
    spec: ManifoldSpec | None = None,
    stop_on_exit: bool = True,
) -> Trajectory:
    """Integrate ``z' = fn(z)`` from ``z0`` over ``[0, t_end]``.

    Stops early at ``event`` (status ``"event"``) or, with ``stop_on_exit``,
    when the normalized state leaves ``region`` (status ``"boundary_exit"``).
    Without ``stop_on_exit`` a region exit is only recorded.
    """
    cfg = cfg or IntegratorConfig()
    if isinstance(z0, ChartPoint):
        spec = spec or z0.spec
        z0 = z0.coords
    z0 = np.array(z0, dtype=float).reshape(-1)
    if not np.all(np.isfinite(z0)):
        raise IntegrationError("non-finite initial condition")
    dim = z0.shape[0]
    sys = _System(fn, dim, tangent)
    if sys.segmented:
        sys.shift = np.asarray(fn.seam_shift(z0), dtype=float)
    y = np.concatenate([z0, np.eye(dim).ravel()]) if tangent else z0.copy()
    stepper = _rk4_step if cfg.method == RK4 else _dp_step
    adaptive = cfg.method == RK45

    times, states, tangents = [0.0], [z0.copy()], [np.eye(dim)] if tangent else None
    traj = Trajectory(np.empty(0), np.empty((0, dim)))
    warned = False

    def check(z, t):
        nonlocal warned
        if spec is None:
            return True
        p = ChartPoint(wrap_angles(z, spec.azimuth_indices), spec)
        if pole_distance(p) < POLE_WARNING_MARGIN:
            traj.near_pole = True
            if not warned:
                warnings.warn(f"trajectory within {POLE_WARNING_MARGIN} rad of a pole at t={t:.6g}", NearPoleWarning, stacklevel=3)
                warned = True
        if region is not None and not in_region(p, region):
            if traj.exit_time is None:
                traj.exit_time = t
            traj.status = "boundary_exit"
            return not stop_on_exit
        return True

    if event is not None and event.value(z0) >= 0.0:
        raise ValueError("event already satisfied at the initial condition")
    check(z0, 0.0)

    t = 0.0
    if adaptive:
        h = min(cfg.initial_step, cfg.max_step)
    else:
        n_steps = max(1, math.ceil(t_end / cfg.initial_step - 1e-9))
        h = t_end / n_steps
    running = t_end > 0.0
    attempts = 0
    while running:
        attempts += 1
        if attempts > cfg.max_steps:
            raise IntegrationError(f"step budget of {cfg.max_steps} exhausted at t={t:.6g}")
        h = min(h, t_end - t)
        y_new, err = stepper(sys, y, h)
        if not np.all(np.isfinite(y_new)):
            raise IntegrationError(f"non-finite state at t={t:.6g}")
        if adaptive:
            e = _error_norm(err, y, y_new, cfg)
            if e > 1.0:
                h *= max(0.2, 0.9 * e ** (-0.2))
                if h < cfg.min_step:
                    raise StiffnessError(f"step size underflow at t={t:.6g}")
                continue
            factor = 5.0 if e == 0.0 else min(5.0, max(0.2, 0.9 * e ** (-0.2)))
        z_old, z_new = y[:dim], y_new[:dim]

        # earliest event inside the accepted step
        fired = []
        if event is not None and _fired(event, z_old, z_new):
            fired.append((_locate(stepper, sys, y, h, event, dim), 0, event))
        for seam in sys.seam_events():
            if _fired(seam, z_old, z_new):
                fired.append((_locate(stepper, sys, y, h, seam, dim), 1, seam))
        if fired:
            fired.sort(key=lambda item: (round(item[0] / EVENT_TIME_TOL), item[1]))
            delta, kind, ev = fired[0]
            y_new = stepper(sys, y, delta)[0] if delta < h else y_new
            t += delta
            y = y_new
            if kind == 0:
                z = y[:dim].copy()
                z[ev.index] = ev.level
                y[:dim] = z
                times.append(t)
                states.append(z)
                if tangent:
                    tangents.append(y[dim:].reshape(dim, dim).copy())
                traj.event_time = t
                check(z, t)
                if traj.status == "ok":
                    traj.status = "event"
                break
            new_shift = sys.shift.copy()
            new_shift[ev.index] += TWO_PI * ev.direction
            if tangent:
                S = _saltation(sys, y[:dim], ev, new_shift)
                y[dim:] = (S @ y[dim:].reshape(dim, dim)).ravel()
            sys.shift = new_shift
            traj.seam_crossings += 1
        else:
            t += h
            y = y_new
        times.append(t)
        states.append(y[:dim].copy())
        if tangent:
            tangents.append(y[dim:].reshape(dim, dim).copy())
        if not check(y[:dim], t):
            break
        if t >= t_end - 1e-14 * max(1.0, abs(t_end)):
            break
        if adaptive and not fired:
            h = min(cfg.max_step, h * factor)

    traj.times = np.array(times)
    traj.states = np.array(states)
    traj.tangents = np.array(tangents) if tangent else None
    traj.final_rhs = sys.f(traj.states[-1])
    if event is not None and traj.event_time is None and traj.status == "ok":
        traj.status = "no_event"
    return traj


def monodromy_numeric(fn, z0, T: float, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Tangent matrix at time ``T`` of the variational equation, started from
    the identity."""
    dim = len(z0.coords if isinstance(z0, ChartPoint) else z0)
    if T == 0.0:
        return np.eye(dim)
    return integrate(fn, z0, T, cfg, tangent=True).final_tangent


def finite_difference_jacobian(fn: Callable, alpha, step: float = 1e-6) -> np.ndarray:
    """Central differences, one coordinate at a time."""
    if not step > 0:
        raise ValueError("step must be positive")
    alpha = np.asarray(alpha, dtype=float)
    f0 = np.asarray(fn(alpha), dtype=float)
    J = np.empty((f0.shape[0], alpha.shape[0]))
    for j in range(alpha.shape[0]):
        e = np.zeros_like(alpha)
        e[j] = step
        J[:, j] = (np.asarray(fn(alpha + e)) - np.asarray(fn(alpha - e))) / (2 * step)
    return J
