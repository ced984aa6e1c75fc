"""``orbit-averager`` command line.

Exit codes: 0 success, 1 malformed configuration, 2 degenerate averaged map,
3 root outside the working region, 4 verification failed, 5 selftest failure.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .averaging import AveragedMap, RootResult, averaged_map, s3_nondegeneracy_determinants, solve_root
from .config import ConfigError, RunConfig
from .selftest import DEFAULT_SEED, run_selftest
from .systems import monodromy_defect
from .verifier import SweepResult, epsilon_sweep, section_prediction

EXIT_OK = 0
EXIT_MALFORMED = 1
EXIT_DEGENERATE = 2
EXIT_OUT_OF_REGION = 3
EXIT_UNVERIFIED = 4
EXIT_SELFTEST = 5

SLOPE_RANGE = (0.8, 1.2)
DEFAULT_OUT = Path("out")


@dataclass
class Report:
    lines: list[str] = field(default_factory=list)
    csv: str | None = None
    exit_code: int = EXIT_OK

    def add(self, line: str = "") -> None:
        self.lines.append(line)

    def text(self) -> str:
        return "\n".join(self.lines + [f"exit code: {self.exit_code}"]) + "\n"


def _vec(v) -> str:
    return "(" + ", ".join(f"{x + 0.0:.17g}" for x in np.asarray(v, dtype=float)) + ")"


def _average(rc: RunConfig, report: Report) -> tuple[AveragedMap, RootResult]:
    s = rc.scenario
    M = averaged_map(s, rc.perturbation)
    root = solve_root(M, rc.region)
    label = f" (preset {rc.preset})" if rc.preset else ""
    report.add(f"scenario: {s.id}{label}")
    nonzero = {k: v for k, v in rc.perturbation.named().items() if v != 0.0}
    report.add("coefficients: " + (", ".join(f"{k}={v:.17g}" for k, v in nonzero.items()) or "all zero"))
    d = monodromy_defect(s)
    report.add(f"monodromy defect: upper-right norm {d.upper_right_norm:.3e}, det(lower-right) {d.delta_det:.17g}")
    report.add("K:")
    for row in M.K:
        report.add("  " + "  ".join(f"{x + 0.0:24.17g}" for x in row))
    report.add(f"h: {_vec(M.h)}")
    report.add(f"det K: {root.det:.17g}")
    if s.id == "S3":
        d1, d2 = s3_nondegeneracy_determinants(rc.perturbation)
        report.add(f"block determinants: {d1:.17g}, {d2:.17g}")
    if root.degenerate:
        report.add("root: none (degenerate averaged map)")
        report.exit_code = EXIT_DEGENERATE
        return M, root
    report.add(f"root alpha*: {_vec(root.alpha)}")
    report.add(f"region (delta0={rc.region.delta0:g}, kappa={rc.region.kappa:g}): {'inside' if root.in_region else 'OUTSIDE'}")
    if not root.in_region:
        report.exit_code = EXIT_OUT_OF_REGION
        print("warning: averaged root lies outside the working region; no verification attempted", file=sys.stderr)
    return M, root


def _sweep(rc: RunConfig, root: RootResult, jobs: int, report: Report) -> SweepResult:
    s = rc.scenario
    pred = section_prediction(s, root.alpha, rc.section)
    report.add(f"prediction on section: {_vec(pred.coords)}")
    sweep = epsilon_sweep(
        s, rc.perturbation, rc.section, pred, rc.epsilons, rc.tolerance, rc.integrator, rc.region, jobs=jobs
    )
    report.add(f"sweep ({len(sweep.rows)} rows, tolerance {rc.tolerance:g}):")
    for i, row in enumerate(sweep.rows):
        mu = max((abs(m) for m in row.multipliers), default=float("nan"))
        extra = f" [{row.message}]" if row.message else ""
        report.add(
            f"  row {i}: eps={row.eps:g} status={row.status} selection={row.selection} residual={row.residual:.3e} "
            f"distance={row.distance:.6e} period={row.period:.15g} max|mu|={mu:.6g} hyperbolic={row.hyperbolic}{extra}"
        )
        if row.radial_deviation is not None and row.certified:
            report.add(f"         max |r-1| along cycle: {row.radial_deviation:.3e}")
    report.add("slope: " + ("unavailable" if sweep.slope is None else f"{sweep.slope:.6f}"))
    if sweep.period_constant is not None:
        report.add(f"period constant C (|tau - 2pi| <= C eps): {sweep.period_constant:.6g}")
    report.csv = sweep.to_csv()
    return sweep


def cmd_average(rc: RunConfig, jobs: int = 1) -> Report:
    report = Report()
    _average(rc, report)
    return report


def cmd_verify(rc: RunConfig, jobs: int = 1) -> Report:
    report = Report()
    _, root = _average(rc, report)
    if report.exit_code != EXIT_OK:
        return report
    sweep = _sweep(rc, root, jobs, report)
    failed = sweep.failed_rows()
    lo, hi = SLOPE_RANGE
    slope_ok = sweep.slope is not None and lo <= sweep.slope <= hi
    if failed:
        report.add(f"uncertified rows: {', '.join(str(i) for i in failed)}")
    if not slope_ok:
        report.add(f"slope outside [{lo:g}, {hi:g}]")
    report.add("verification: " + ("PASSED" if not failed and slope_ok else "FAILED"))
    report.exit_code = EXIT_OK if not failed and slope_ok else EXIT_UNVERIFIED
    return report


def cmd_sweep(rc: RunConfig, jobs: int = 1) -> Report:
    """Like verify but only tabulates; uncertified rows do not change the exit code."""
    report = Report()
    _, root = _average(rc, report)
    if report.exit_code != EXIT_OK:
        return report
    _sweep(rc, root, jobs, report)
    return report


def cmd_selftest(seed: int = DEFAULT_SEED, fault: bool = False) -> Report:
    report = Report()
    report.add(f"selftest seed={seed}" + (" (fault injected)" if fault else ""))
    results = run_selftest(seed, fault)
    for r in results:
        report.add(r.line())
        for failure in r.failures[:20]:
            report.add(f"  {r.module} seed={seed}: {failure}")
        if len(r.failures) > 20:
            report.add(f"  ... {len(r.failures) - 20} more")
    report.exit_code = EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST
    return report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="orbit-averager", description="Predict and verify limit cycles by first-order averaging.")
    p.add_argument("command", choices=["average", "verify", "selftest", "sweep"])
    p.add_argument("--config", type=Path, help="TOML run configuration (optional for selftest)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for the epsilon sweep")
    p.add_argument("--out", type=Path, help="directory for report.txt and sweep.csv")
    p.add_argument("--inject-fault", action="store_true", help="corrupt the product table during selftest")
    return p


def _write(report: Report, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.text(), encoding="utf-8")
    if report.csv is not None:
        (out / "sweep.csv").write_text(report.csv, encoding="utf-8")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_MALFORMED
    rc = None
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", cfgmod.LargeEpsilonWarning)
            if args.config is not None:
                rc = cfgmod.load(args.config)
            elif args.command != "selftest":
                raise ConfigError("--config is required")
            seed = rc.seed if rc is not None else cfgmod.resolve_seed({})
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED

    if args.command == "selftest":
        fault = args.inject_fault or (rc is not None and rc.inject_fault)
        report = cmd_selftest(seed, fault)
    else:
        report = {"average": cmd_average, "verify": cmd_verify, "sweep": cmd_sweep}[args.command](rc, args.jobs)

    sys.stdout.write(report.text())
    out = args.out or (rc.output_dir if rc is not None else None)
    if out is None and args.command in ("verify", "sweep"):
        out = DEFAULT_OUT
    if out is not None:
        _write(report, out)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
