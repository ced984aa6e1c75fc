"""Run configuration, read from a TOML document.

Example::

    seed = 7

    [scenario]
    id = "S1"                  # or: preset = "theorem1-example"

    [coefficients]             # named form; absent names are zero
    a2 = 1.0
    b1 = 1.0
    # dense form instead: matrix = [[...], ...] and vector = [...]

    [epsilon]
    values = [1e-2, 5e-3, 2.5e-3, 1.25e-3]

    [region]
    delta0 = 0.05
    kappa = 1.0

    [integrator]
    method = "rk45-adaptive"
    atol = 1e-10
    rtol = 1e-10

    [verify]
    tolerance = 1e-8

    [output]
    dir = "out"
"""

from __future__ import annotations

import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .manifold import ChartRegion
from .numerics import IntegratorConfig
from .selftest import DEFAULT_SEED
from .systems import AffinePerturbation, Scenario, get_scenario, rotation_block_kappa
from .verifier import DEFAULT_TOL, SectionSpec

SEED_ENV = "ORBIT_AVERAGER_SEED"
DEFAULT_EPSILONS = (1e-2, 5e-3, 2.5e-3, 1.25e-3)
EPS_SOFT_MAX = 0.1

PRESETS = {
    "theorem1-example": ("S1", {"a2": 1.0, "b1": 1.0}),
    "theorem3-example": ("S3", {"a2": 2.0, "b1": 1.0, "c4": 1.0, "d3": 1.0}),
}

_SECTIONS = {"scenario", "coefficients", "epsilon", "region", "integrator", "verify", "output", "selftest"}
_TOP_KEYS = {"seed"} | _SECTIONS


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


class LargeEpsilonWarning(UserWarning):
    pass


@dataclass
class RunConfig:
    scenario: Scenario
    perturbation: AffinePerturbation
    epsilons: list[float] = field(default_factory=lambda: list(DEFAULT_EPSILONS))
    region: ChartRegion = field(default_factory=ChartRegion)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    section: SectionSpec = field(default_factory=SectionSpec)
    tolerance: float = DEFAULT_TOL
    output_dir: Path | None = None
    seed: int = DEFAULT_SEED
    inject_fault: bool = False
    preset: str | None = None


def _table(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return value


def _unknown(table: dict, allowed: set[str], where: str) -> None:
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{what} must be a number, got {value!r}")
    x = float(value)
    if not math.isfinite(x):
        raise ConfigError(f"{what} must be finite")
    return x


def _perturbation(s: Scenario, coeffs: dict, base: dict | None) -> AffinePerturbation:
    dense = {"matrix", "vector"} & set(coeffs)
    if dense:
        if base is not None:
            raise ConfigError("dense coefficients cannot be combined with a preset")
        if set(coeffs) != {"matrix", "vector"}:
            raise ConfigError("dense form needs exactly 'matrix' and 'vector'")
        try:
            P = AffinePerturbation(coeffs["matrix"], coeffs["vector"])
            P.check(s)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"coefficients: {exc}") from None
        return P
    named = dict(base or {})
    for name, value in coeffs.items():
        named[name] = _number(value, f"coefficient {name}")
    try:
        return AffinePerturbation.from_named(s, named)
    except ValueError as exc:
        raise ConfigError(f"coefficients: {exc}") from None


def _epsilons(table: dict) -> list[float]:
    _unknown(table, {"values"}, "[epsilon]")
    values = table.get("values", list(DEFAULT_EPSILONS))
    if not isinstance(values, list) or not values:
        raise ConfigError("[epsilon] values must be a non-empty list")
    eps = [_number(v, "epsilon") for v in values]
    if any(e <= 0 for e in eps):
        raise ConfigError("epsilon values must be positive")
    big = [e for e in eps if e > EPS_SOFT_MAX]
    if big:
        warnings.warn(f"epsilon {big} above {EPS_SOFT_MAX}; averaging is not expected to apply", LargeEpsilonWarning, stacklevel=3)
    return eps


def _region(table: dict, s: Scenario, P: AffinePerturbation) -> ChartRegion:
    _unknown(table, {"delta0", "kappa"}, "[region]")
    delta0 = _number(table.get("delta0", 0.05), "delta0")
    if "kappa" in table:
        kappa = _number(table["kappa"], "kappa")
    elif s.id == "S3":
        kappa = rotation_block_kappa(P)
    else:
        kappa = 1.0
    try:
        return ChartRegion(delta0, kappa)
    except ValueError as exc:
        raise ConfigError(f"[region]: {exc}") from None


def _integrator(table: dict) -> IntegratorConfig:
    allowed = {"method", "atol", "rtol", "max_step", "initial_step", "min_step", "max_steps"}
    _unknown(table, allowed, "[integrator]")
    kwargs = {}
    for key, value in table.items():
        if key == "method":
            kwargs[key] = str(value)
        elif key == "max_steps":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError("max_steps must be an integer")
            kwargs[key] = value
        else:
            kwargs[key] = _number(value, key)
    try:
        return IntegratorConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[integrator]: {exc}") from None


def resolve_seed(doc: dict) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is not None and raw.strip():
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None
    seed = doc.get("seed", DEFAULT_SEED)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    return seed


def parse_config(doc: dict, base_dir: Path | None = None) -> RunConfig:
    _unknown(doc, _TOP_KEYS, "top level")
    scen = _table(doc, "scenario")
    _unknown(scen, {"id", "preset"}, "[scenario]")
    base = None
    preset = scen.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        sid, base = PRESETS[preset]
        if "id" in scen and str(scen["id"]).upper() != sid:
            raise ConfigError(f"preset {preset} is scenario {sid}, not {scen['id']}")
    elif "id" in scen:
        sid = str(scen["id"])
    else:
        raise ConfigError("[scenario] needs an id or a preset")
    try:
        s = get_scenario(sid)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    P = _perturbation(s, _table(doc, "coefficients"), base)
    verify = _table(doc, "verify")
    _unknown(verify, {"tolerance", "section_index", "section_value"}, "[verify]")
    tol = _number(verify.get("tolerance", DEFAULT_TOL), "tolerance")
    if tol <= 0:
        raise ConfigError("tolerance must be positive")
    index = verify.get("section_index")
    sec = SectionSpec(None if index is None else int(index), _number(verify.get("section_value", -math.pi), "section_value"))
    try:
        sec.resolve(s)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    out = _table(doc, "output")
    _unknown(out, {"dir"}, "[output]")
    out_dir = None
    if "dir" in out:
        out_dir = Path(str(out["dir"]))
        if base_dir is not None and not out_dir.is_absolute():
            out_dir = base_dir / out_dir
    st = _table(doc, "selftest")
    _unknown(st, {"inject_fault"}, "[selftest]")
    fault = st.get("inject_fault", False)
    if not isinstance(fault, bool):
        raise ConfigError("inject_fault must be true or false")

    return RunConfig(
        scenario=s,
        perturbation=P,
        epsilons=_epsilons(_table(doc, "epsilon")),
        region=_region(_table(doc, "region"), s, P),
        integrator=_integrator(_table(doc, "integrator")),
        section=sec,
        tolerance=tol,
        output_dir=out_dir,
        seed=resolve_seed(doc),
        inject_fault=fault,
        preset=preset,
    )


def loads(text: str, base_dir: Path | None = None) -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"not valid TOML: {exc}") from None
    return parse_config(doc, base_dir)


def load(path: str | os.PathLike) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return loads(text, path.parent)
