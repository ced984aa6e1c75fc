import math

import numpy as np
import pytest

from orbit_averager.manifold import ChartPoint, DimensionError, chart_distance, normalize
from orbit_averager.systems import (
    SCENARIOS,
    AffinePerturbation,
    flow,
    fundamental_matrix,
    get_scenario,
    linearization,
    monodromy_defect,
    parse_coefficient_name,
    perturbed_field,
    random_perturbation,
    rotation_block_kappa,
    unperturbed_field,
)

TWO_PI = 2 * math.pi
DEFECT = 1 - math.exp(-TWO_PI)


def random_point(s, rng):
    c = rng.uniform(-1.0, 1.0, s.dim)
    for i in s.spec.azimuth_indices:
        c[i] = rng.uniform(-math.pi, math.pi)
    for i in s.spec.polar_indices:
        c[i] = rng.uniform(-1.4, 1.4)
    return ChartPoint(c, s.spec)


class TestScenarios:
    def test_blocks(self):
        assert SCENARIOS["S1"].blocks == ("drift", "constant", "radial")
        assert SCENARIOS["S2"].blocks == ("drift", "constant", "drift", "constant", "radial")
        assert SCENARIOS["S3"].blocks == ("rotation", "drift", "constant")

    def test_dimensions(self):
        assert [(s.spec.m, s.spec.n, s.k) for s in SCENARIOS.values()] == [(1, 1, 2), (2, 1, 4), (1, 2, 4)]
        assert all(s.period == TWO_PI for s in SCENARIOS.values())

    def test_lookup_is_case_insensitive(self):
        assert get_scenario("s3") is SCENARIOS["S3"]
        with pytest.raises(ValueError):
            get_scenario("S4")


class TestFlow:
    def test_drift_wraps(self, s1):
        z = flow(s1, ChartPoint([0.0, 0.3, 1.0], s1.spec), math.pi)
        np.testing.assert_allclose(z.coords, [-math.pi, 0.3, 1.0], atol=1e-15)

    def test_radial(self, s1):
        z = flow(s1, ChartPoint([0.0, 0.0, 2.0], s1.spec), math.log(2))
        assert z[2] == pytest.approx(3.0, abs=1e-14)

    def test_quarter_turn(self, s3):
        z = flow(s3, ChartPoint([1.0, 0.0, 0.0, 0.0], s3.spec), math.pi / 2)
        np.testing.assert_allclose(z.coords[:2], [0.0, 1.0], atol=1e-15)

    def test_unnormalized_keeps_unwrapped_azimuth(self, s1):
        z = flow(s1, np.array([3.0, 0.0, 1.0]), 1.0, normalized=False)
        assert z[0] == 4.0

    def test_wrong_manifold(self, s1, s3):
        with pytest.raises(DimensionError):
            flow(s1, ChartPoint([0.0, 0.0, 0.0, 0.0], s3.spec), 1.0)

    def test_composition(self, rng):
        for case in range(100):
            s = SCENARIOS[("S1", "S2", "S3")[case % 3]]
            z = random_point(s, rng)
            t, u = rng.uniform(0, 3, 2)
            assert chart_distance(flow(s, flow(s, z, t), u), flow(s, z, t + u)) <= 1e-12 * max(1, np.max(np.abs(z.coords))) * math.exp(t + u)

    def test_isochronous_set(self, rng):
        s1, s3 = SCENARIOS["S1"], SCENARIOS["S3"]
        for _ in range(20):
            z = random_point(s1, rng).with_coords(np.r_[rng.uniform(-3, 3), rng.uniform(-1, 1), 1.0])
            assert chart_distance(flow(s1, z, TWO_PI), normalize(z)) < 1e-14
            w = normalize(random_point(s3, rng))
            assert chart_distance(flow(s3, w, TWO_PI), w) < 1e-14


class TestFundamentalMatrix:
    def test_s1(self, s1):
        np.testing.assert_allclose(fundamental_matrix(s1, 1.0), np.diag([1, 1, math.e]), rtol=1e-15)

    @pytest.mark.parametrize("sid", ["S1", "S2", "S3"])
    def test_identity_at_zero(self, sid):
        assert np.array_equal(fundamental_matrix(SCENARIOS[sid], 0.0), np.eye(SCENARIOS[sid].dim))

    def test_s3_half_turn(self, s3):
        np.testing.assert_allclose(fundamental_matrix(s3, math.pi), np.diag([-1, -1, 1, 1]), atol=1e-15)

    @pytest.mark.parametrize("sid", ["S1", "S2", "S3"])
    def test_cocycle(self, sid, rng):
        s = SCENARIOS[sid]
        for _ in range(20):
            t, u = rng.uniform(-3, 3, 2)
            Mtu = fundamental_matrix(s, t + u)
            np.testing.assert_allclose(fundamental_matrix(s, t) @ fundamental_matrix(s, u), Mtu, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("sid", ["S1", "S2", "S3"])
    def test_variational_equation(self, sid):
        s = SCENARIOS[sid]
        L = linearization(s)
        h = 1e-5
        for t in np.linspace(0.1, TWO_PI, 20):
            dM = (fundamental_matrix(s, t + h) - fundamental_matrix(s, t - h)) / (2 * h)
            np.testing.assert_allclose(dM, L @ fundamental_matrix(s, t), atol=1e-6 * math.exp(t))


class TestMonodromyDefect:
    @pytest.mark.parametrize("sid", ["S1", "S2"])
    def test_sphere_and_line(self, sid):
        s = SCENARIOS[sid]
        d = monodromy_defect(s)
        expected = np.zeros((s.dim, s.dim))
        expected[-1, -1] = DEFECT
        np.testing.assert_allclose(d.matrix, expected, atol=1e-15)
        assert d.upper_right_norm == 0.0
        assert d.delta_det == pytest.approx(DEFECT, abs=1e-12)
        assert d.condition_holds

    def test_rotation(self, s3):
        d = monodromy_defect(s3)
        assert np.array_equal(d.matrix, np.zeros((4, 4)))
        assert d.delta_det == 1.0
        assert d.condition_holds


class TestPerturbation:
    def test_named_rows(self, s1):
        P = AffinePerturbation.from_named(s1, {"a0": 5.0, "a2": 1.0, "b1": 2.0, "c3": 3.0})
        np.testing.assert_array_equal(P.rows(), [[5, 0, 1, 0], [0, 2, 0, 0], [0, 0, 0, 3]])
        assert P.named()["b1"] == 2.0

    def test_bad_names(self, s1):
        for name in ("z1", "a4", "d1", "a", "ax"):
            with pytest.raises(ValueError):
                parse_coefficient_name(s1, name)

    def test_shape_checks(self, s1):
        with pytest.raises(DimensionError):
            AffinePerturbation(np.zeros((3, 2)), np.zeros(3))
        with pytest.raises(DimensionError):
            AffinePerturbation.zero(SCENARIOS["S2"]).check(s1)
        with pytest.raises(ValueError):
            AffinePerturbation(np.full((3, 3), np.nan), np.zeros(3))

    def test_immutable(self, example3):
        with pytest.raises(ValueError):
            example3.A[0, 0] = 1.0

    def test_rotation_kappa(self, s3):
        P = AffinePerturbation.from_named(s3, {"a1": 1.0, "b2": 1.0, "a3": 3.0, "b3": 4.0})
        assert rotation_block_kappa(P) == pytest.approx(2 * 5 / 2)
        assert rotation_block_kappa(AffinePerturbation.zero(s3)) == 0.0


class TestPerturbedField:
    @pytest.mark.parametrize("sid", ["S1", "S2", "S3"])
    def test_unperturbed_limit(self, sid, rng):
        s = SCENARIOS[sid]
        F = perturbed_field(s, random_perturbation(s, rng), 0.0)
        for _ in range(100):
            z = random_point(s, rng)
            assert np.array_equal(F(z), unperturbed_field(s, z.coords))

    def test_example3(self, s1):
        a, b, eps = 2.0, 3.0, 0.01
        F = perturbed_field(s1, AffinePerturbation.from_named(s1, {"a2": a, "b1": b}), eps)
        np.testing.assert_allclose(F(np.array([0.0, 0.1, 1.0])), [1 + 0.1 * eps * a, 0.0, 0.0], atol=1e-16)

    def test_example8(self, s3, example8):
        eps = 0.01
        F = perturbed_field(s3, example8, eps)
        np.testing.assert_allclose(F(np.array([0.0, 0.0, -math.pi, 0.0])), [0, 0, 1, -eps * math.pi], atol=1e-16)

    def test_evaluates_in_chart(self, s1, example3):
        F = perturbed_field(s1, example3, 0.1)
        z = np.array([0.5, 0.2, 1.0])
        np.testing.assert_array_equal(F(z + [TWO_PI, 0, 0]), F(z))

    def test_negative_eps(self, s1, example3):
        with pytest.raises(ValueError):
            perturbed_field(s1, example3, -0.1)

    def test_dimension_mismatch(self, s1, example8):
        with pytest.raises(DimensionError):
            perturbed_field(s1, example8, 0.1)

    def test_second_order_slot_is_zero(self, s2, rng):
        F = perturbed_field(s2, random_perturbation(s2, rng), 0.1)
        assert not np.any(F.second_order(np.ones(5)))
