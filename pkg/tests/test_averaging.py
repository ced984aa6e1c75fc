import math

import numpy as np
import pytest

from orbit_averager.averaging import (
    averaged_map,
    jacobian_det,
    numeric_averaged,
    s1_det_formula,
    s1_phi0_printed_variant,
    s1_root_formula,
    s2_det_formula,
    s2_root_system,
    s3_det_formula,
    s3_nondegeneracy_determinants,
    s3_root_formula,
    solve_root,
)
from orbit_averager.manifold import ChartRegion
from orbit_averager.numerics import finite_difference_jacobian
from orbit_averager.systems import AffinePerturbation, get_scenario, random_perturbation

PI = math.pi


def quadrature_newton_root(s, P, guess):
    """Root of the quadrature-evaluated averaged function, independent of the
    closed-form path."""
    f = lambda a: numeric_averaged(s, P, a)
    a = np.asarray(guess, dtype=float)
    for _ in range(5):
        a = a - np.linalg.solve(finite_difference_jacobian(f, a, 1e-4), f(a))
    return a


class TestAveragedMap:
    def test_example3_closed_form(self, s1):
        a, b = 1.7, -0.6
        P = AffinePerturbation.from_named(s1, {"a2": a, "b1": b})
        M = averaged_map(s1, P)
        for theta0, phi0 in [(0.1, 0.2), (-PI, 0.0), (2.0, -1.0)]:
            expected = [2 * PI * a * phi0, 2 * PI * b * (theta0 + PI)]
            np.testing.assert_allclose(M([theta0, phi0]), expected, atol=1e-13)
            np.testing.assert_allclose(numeric_averaged(s1, P, [theta0, phi0]), expected, atol=1e-10)

    def test_zero_perturbation(self, s1):
        M = averaged_map(s1, AffinePerturbation.zero(s1))
        assert not M.K.any() and not M.h.any()

    def test_example8_first_component(self, s3, example8):
        M = averaged_map(s3, example8)
        # pi (a - b) y0 with a=2, b=1
        np.testing.assert_allclose(M.K[0], [0.0, PI, 0.0, 0.0], atol=1e-14)
        assert M.h[0] == pytest.approx(0.0, abs=1e-14)

    def test_s1_general_closed_form(self, s1, rng):
        for _ in range(20):
            P = random_perturbation(s1, rng)
            n = P.named()
            th, ph = rng.uniform(-3, 3, 2)
            expected = 2 * PI * np.array(
                [
                    n["a0"] + n["a1"] * (th + PI) + n["a2"] * ph + n["a3"],
                    n["b0"] + n["b1"] * (th + PI) + n["b2"] * ph + n["b3"],
                ]
            )
            np.testing.assert_allclose(averaged_map(s1, P)([th, ph]), expected, rtol=1e-13, atol=1e-12)

    def test_dimension_mismatch(self, s1, s2):
        with pytest.raises(ValueError):
            averaged_map(s1, random_perturbation(s2, np.random.default_rng(0)))

    @pytest.mark.parametrize("sid", ["S1", "S2", "S3"])
    def test_audit_path_matches_fast_path(self, sid, rng):
        s = get_scenario(sid)
        for _ in range(5):
            P = random_perturbation(s, rng)
            fast, audit = averaged_map(s, P), averaged_map(s, P, audit=True)
            np.testing.assert_allclose(fast.K, audit.K, rtol=1e-13, atol=1e-13)
            np.testing.assert_allclose(fast.h, audit.h, rtol=1e-13, atol=1e-13)


class TestSolveRoot:
    def test_example3_root(self, s1, example3):
        r = solve_root(averaged_map(s1, example3))
        assert not r.degenerate and r.in_region
        np.testing.assert_allclose(r.alpha, [-PI, 0.0], atol=1e-12)

    def test_example8_root(self, s3, example8):
        r = solve_root(averaged_map(s3, example8))
        np.testing.assert_allclose(r.alpha, [0.0, 0.0, -PI, 0.0], atol=1e-12)
        assert r.in_region

    def test_zero_is_degenerate(self, s1):
        r = solve_root(averaged_map(s1, AffinePerturbation.zero(s1)))
        assert r.degenerate and r.alpha is None and not r.in_region

    def test_constructed_s1_root(self, s1):
        # a-row (a0..a3) = (-pi, 1, 0, 0); b-row (0.3, 0, 1, 0) puts phi0 at -0.3
        P = AffinePerturbation.from_named(s1, {"a0": -PI, "a1": 1.0, "b0": 0.3, "b2": 1.0})
        r = solve_root(averaged_map(s1, P))
        np.testing.assert_allclose(r.alpha, [0.0, -0.3], atol=1e-12)
        np.testing.assert_allclose(quadrature_newton_root(s1, P, [0.5, 0.5]), [0.0, -0.3], atol=1e-9)
        assert r.in_region

    def test_listed_b_row_gives_out_of_region_root(self, s1):
        # b-row (0.3 - pi, 0, 1, 0) solves to phi0 = pi - 0.3, beyond the pole
        P = AffinePerturbation.from_named(s1, {"a0": -PI, "a1": 1.0, "b0": 0.3 - PI, "b2": 1.0})
        r = solve_root(averaged_map(s1, P))
        np.testing.assert_allclose(r.alpha, [0.0, PI - 0.3], atol=1e-12)
        np.testing.assert_allclose(quadrature_newton_root(s1, P, [0.5, 0.5]), r.alpha, atol=1e-9)
        assert not r.in_region

    def test_root_at_pole_is_out_of_region(self, s1):
        P = AffinePerturbation.from_named(s1, {"a1": 1.0, "b0": PI, "b2": 1.0})
        r = solve_root(averaged_map(s1, P))
        np.testing.assert_allclose(r.alpha, [-PI, -PI], atol=1e-12)
        assert not r.degenerate and not r.in_region

    def test_region_is_respected(self, s1):
        P = AffinePerturbation.from_named(s1, {"a1": 1.0, "b0": 1.5, "b2": 1.0})
        M = averaged_map(s1, P)
        assert solve_root(M, ChartRegion(0.05)).in_region
        assert not solve_root(M, ChartRegion(0.1)).in_region

    def test_scaling_equivariance(self, rng):
        for sid in ("S1", "S2", "S3"):
            s = get_scenario(sid)
            for _ in range(10):
                P = random_perturbation(s, rng)
                lam = rng.uniform(0.01, 100.0)
                a1 = solve_root(averaged_map(s, P)).alpha
                a2 = solve_root(averaged_map(s, P.scaled(lam))).alpha
                np.testing.assert_allclose(a2, a1, rtol=1e-12, atol=1e-12)

    def test_theta0_matches_formula(self, s1, rng):
        checked = 0
        while checked < 100:
            P = random_perturbation(s1, rng)
            n = P.named()
            if abs(n["a1"] * n["b2"] - n["a2"] * n["b1"]) <= 0.1:
                continue
            theta0, phi0 = s1_root_formula(P)
            alpha = solve_root(averaged_map(s1, P)).alpha
            assert alpha[0] == pytest.approx(theta0, abs=1e-10 * max(1.0, abs(theta0)))
            assert alpha[1] == pytest.approx(phi0, abs=1e-10 * max(1.0, abs(phi0)))
            checked += 1

    def test_printed_phi0_variant_agrees_only_when_b1_equals_b2(self, s1):
        P = AffinePerturbation.from_named(s1, {"a0": 0.2, "a1": 1.0, "a2": 1.0, "b1": 1.0, "b2": 0.5, "b0": 0.1})
        _, phi0 = s1_root_formula(P)
        assert s1_phi0_printed_variant(P) != pytest.approx(phi0)
        Q = AffinePerturbation.from_named(s1, {"a0": 0.2, "a1": 1.0, "a2": 0.5, "b1": 1.0, "b2": 1.0})
        assert s1_phi0_printed_variant(Q) == pytest.approx(s1_root_formula(Q)[1], rel=1e-14)

    def test_s2_system_residual(self, s2, rng):
        done = 0
        while done < 20:
            P = random_perturbation(s2, rng)
            C, rhs = s2_root_system(P)
            if abs(np.linalg.det(C)) <= 0.1:
                continue
            alpha = solve_root(averaged_map(s2, P)).alpha
            assert np.max(np.abs(C @ alpha - rhs)) <= 1e-10
            done += 1

    def test_s3_root_formula(self, s3, rng):
        for _ in range(20):
            P = random_perturbation(s3, rng)
            np.testing.assert_allclose(solve_root(averaged_map(s3, P)).alpha, s3_root_formula(P), rtol=1e-9, atol=1e-9)


class TestJacobianDet:
    def test_example3(self, s1, example3):
        assert jacobian_det(averaged_map(s1, example3)) == pytest.approx(-4 * PI**2, rel=1e-12)

    def test_example8(self, s3, example8):
        M = averaged_map(s3, example8)
        assert jacobian_det(M) == pytest.approx(-4 * PI**4, rel=1e-12)
        assert s3_det_formula(example8) == pytest.approx(-4 * PI**4, rel=1e-12)
        rot, sphere = s3_nondegeneracy_determinants(example8)
        assert rot == 1.0 and sphere == -1.0

    def test_formulas(self, rng):
        formulas = {"S1": s1_det_formula, "S2": s2_det_formula, "S3": s3_det_formula}
        for sid, formula in formulas.items():
            s = get_scenario(sid)
            for _ in range(20):
                P = random_perturbation(s, rng)
                d = jacobian_det(averaged_map(s, P))
                assert d == pytest.approx(formula(P), rel=1e-10, abs=1e-10)

    def test_matches_numpy(self, rng):
        for sid in ("S1", "S2", "S3"):
            s = get_scenario(sid)
            for _ in range(30):
                M = averaged_map(s, random_perturbation(s, rng))
                assert jacobian_det(M) == pytest.approx(np.linalg.det(M.K), rel=1e-12, abs=1e-12)


class TestQuadratureOracle:
    @pytest.mark.parametrize("sid", ["S1", "S2", "S3"])
    def test_agreement(self, sid):
        s = get_scenario(sid)
        rng = np.random.default_rng([7, ord(sid[1])])
        worst = 0.0
        for _ in range(100):
            P = random_perturbation(s, rng)
            alpha = rng.uniform(-1.0, 1.0, s.k)
            worst = max(worst, float(np.max(np.abs(averaged_map(s, P)(alpha) - numeric_averaged(s, P, alpha)))))
        assert worst <= 1e-9

    def test_s1_at_fixed_alpha(self, s1, rng):
        for _ in range(100):
            P = random_perturbation(s1, rng)
            diff = averaged_map(s1, P)([0.1, 0.2]) - numeric_averaged(s1, P, [0.1, 0.2])
            assert np.max(np.abs(diff)) <= 1e-10

    def test_zero_perturbation(self, s1):
        assert not numeric_averaged(s1, AffinePerturbation.zero(s1), [0.4, -0.2]).any()

    def test_example8_root(self, s3, example8):
        np.testing.assert_allclose(numeric_averaged(s3, example8, [0, 0, -PI, 0]), 0.0, atol=1e-10)

    def test_too_few_nodes(self, s1, example3):
        with pytest.raises(ValueError):
            numeric_averaged(s1, example3, [0, 0], nodes=8)

    def test_affine(self, rng):
        for sid in ("S1", "S2", "S3"):
            s = get_scenario(sid)
            for _ in range(20):
                M = averaged_map(s, random_perturbation(s, rng))
                a1, a2 = rng.uniform(-2, 2, (2, s.k))
                assert np.max(np.abs(M(a1) - M(a2) - M.K @ (a1 - a2))) <= 1e-12

    def test_fd_recovers_K(self, rng):
        for sid in ("S1", "S2", "S3"):
            s = get_scenario(sid)
            M = averaged_map(s, random_perturbation(s, rng))
            np.testing.assert_allclose(finite_difference_jacobian(M, np.zeros(s.k), 1e-3), M.K, atol=1e-8)
