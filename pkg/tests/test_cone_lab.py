"""Tip analysis: rescaled cones, the disk comparison and the flat barrier model."""

import logging

import numpy as np
import pytest
import sympy as sp

from capillary_lab.cone_lab import (
    DEFAULT_SCHLAEFLI_PAIRS,
    ConeModel,
    barrier_constants,
    barrier_sign_fields,
    barrier_sign_schedule,
    boundary_directions,
    cone_gaussbonnet_audit,
    cone_geometry,
    flat_model_mean_curvature,
    mean_limit_H0,
    model_surface_angle_audit,
    rescale_convergence,
    rescale_order,
    schlaefli_difference,
    schlaefli_order,
    search_cone_counterexamples,
    symbolic_barrier_constants,
)
from capillary_lab.errors import InputError, PreconditionError
from capillary_lab.metrics import PerturbedMetric
from capillary_lab.presets import R, ScalarFn
from capillary_lab.warped_geometry import build_geometry


def round_disk(a):
    return ScalarFn.from_expr(sp.Float(a), var=R), ScalarFn.from_expr(a * sp.sin(R), var=R)


class TestRescaling:
    """Convergence of the rescaled warp to the tangent cone."""

    def test_sine_tip_is_second_order(self):
        result = rescale_order(build_geometry("cone_sin"))
        assert not result["exact"]
        assert result["order"] >= 1.9

    def test_exact_cone(self):
        result = rescale_order(build_geometry("cone", {"a": 0.8}))
        assert result["exact"]
        assert result["order"] is None

    def test_exact_cone_has_no_deviation(self):
        assert rescale_convergence(build_geometry("cone", {"a": 0.8}), 0.1) < 1e-14

    def test_needs_conical_tip(self, round_geo):
        with pytest.raises(PreconditionError):
            rescale_order(round_geo)


class TestBarrierSign:
    """Sign field of the rescaled barrier and its boundary angle."""

    @pytest.mark.parametrize("tau", [1.0, 1.2])
    def test_limit_and_angle(self, tau):
        result = barrier_sign_schedule(ConeModel.synthetic(0.8, tau))
        assert result["limit_error"][-1] <= 1e-2
        assert result["limit"] == pytest.approx(2.0 - 2.0 * tau)
        assert result["alpha"][-1] == pytest.approx(np.pi / 2, abs=0.05)
        assert result["alpha_order"] == pytest.approx(1.0, abs=0.1)

    def test_fields_at_one_scale(self):
        fields = barrier_sign_fields(ConeModel.synthetic(0.8, 1.2), 0.1)
        np.testing.assert_allclose(fields.limit, 2.0 - 2.0 * 1.2)
        assert 0.0 < fields.alpha < np.pi
        assert fields.alpha_gap == pytest.approx(abs(fields.alpha - np.pi / 2))

    def test_rejects_nonpositive_slope(self):
        with pytest.raises(InputError):
            ConeModel.synthetic(0.0, 1.0)

    def test_ricci_flag(self):
        assert ConeModel.synthetic(1.0, 1.0).nonnegative_ricci
        assert not ConeModel.synthetic(1.5, 1.0).nonnegative_ricci

    def test_tau_from_round_disk(self):
        a = 0.7
        cone = ConeModel.from_disk_metric(a, *round_disk(a), 1.0)
        np.testing.assert_allclose(cone.tau, 1.0, atol=1e-12)

    def test_varying_tau_tracks_pointwise_limit(self):
        profile = "(1.1 + 0.1*r**2)"
        cone = ConeModel.from_disk_metric(
            0.8, f"0.8*{profile}", f"0.8*sin(r)*{profile}", 1.0, k=1.0, warp=ScalarFn.from_expr("sin(0.8*t)")
        )
        assert cone.tau[0] == pytest.approx(1.1)
        assert cone.tau[-1] == pytest.approx(1.2)

        fields = barrier_sign_fields(cone, 0.025)
        np.testing.assert_allclose(fields.f_richardson, 2.0 - 2.0 * cone.tau, atol=1e-2)
        assert np.ptp(fields.f) > 0.15

        result = barrier_sign_schedule(cone)
        assert result["limit_error"][-1] <= 1e-2
        assert result["alpha_order"] >= 0.9
        assert result["cone"]["dominates"]

    def test_field_is_measured_on_the_rescaled_metric(self):
        cone = ConeModel.synthetic(0.8, 1.1, k=1.0, warp=ScalarFn.from_expr("sin(0.8*t)"))
        s = 0.2
        exact_cone_value = 2.0 - 2.0 * 1.1 / (1.0 + s)
        assert np.max(np.abs(barrier_sign_fields(cone, s).f - exact_cone_value)) > 1e-2

    def test_exact_cone_pair(self):
        s = 0.1
        fields = barrier_sign_fields(ConeModel.synthetic(0.8, 1.2), s)
        np.testing.assert_allclose(fields.f, 2.0 - 2.0 * 1.2 / (1.0 + s), atol=1e-6)


class TestConeComparison:
    """g >= gbar on the tangent cones and the bound tau >= 1."""

    @pytest.mark.parametrize("a", [0.5, 0.8, 1.0])
    @pytest.mark.parametrize("tau0,c", [(1.0, 0.0), (1.1, 0.0), (1.1, 0.1), (1.3, 0.05)])
    def test_admissible_pairs_dominate(self, a, tau0, c):
        profile = f"({tau0} + {c}*r**2)"
        cone = ConeModel.from_disk_metric(a, f"{a}*{profile}", f"{a}*sin(r)*{profile}", 1.0)
        assert cone.dominates
        assert np.min(cone.tau) >= 1.0 - 1e-12

    def test_generated_pairs_respect_tau_bound(self):
        rng = np.random.default_rng(7)
        dominating = 0
        for _ in range(40):
            e0, f0 = rng.uniform(0.8, 1.4, 2)
            e2, f2 = rng.uniform(-0.1, 0.2, 2)
            cone = ConeModel.from_disk_metric(0.8, f"0.8*({e0} + {e2}*r**2)", f"0.8*sin(r)*({f0} + {f2}*r**2)", 1.0)
            if cone.dominates:
                dominating += 1
                assert np.min(cone.tau) >= 1.0 - 1e-8
        assert dominating > 0

    def test_small_disk_is_flagged(self, caplog):
        with caplog.at_level(logging.WARNING, logger="capillary_lab.cone_lab"):
            cone = ConeModel.from_disk_metric(0.8, "0.4", "0.4*sin(t)", 1.0)
        summary = cone.to_dict()
        assert summary["tau_min"] == pytest.approx(0.5)
        assert summary["dominates"] is False
        assert summary["min_comparison_eigenvalue"] == pytest.approx(-3.0)
        assert "does not dominate" in caplog.text

    def test_cross_term_breaks_domination(self):
        # the ds dr cross term wins near the axis
        profile = "(1 + 0.2*r**2)"
        cone = ConeModel.from_disk_metric(0.8, f"0.8*{profile}", f"0.8*sin(r)*{profile}", 1.0)
        assert np.min(cone.tau) >= 1.0
        assert not cone.dominates


class TestDiskComparison:
    """Gauss-Bonnet comparison of a rescaled disk with the round cap."""

    def test_round_disk_is_rigid(self):
        a = 0.8
        audit = cone_gaussbonnet_audit(*round_disk(a), a, 1.0)
        assert audit["isometric"]
        assert abs(audit["gb_defect"]) < 1e-10
        assert abs(audit["comparison_excess"]) < 1e-10
        assert not audit["contradiction"]

    def test_no_admissible_counterexample(self):
        rows = search_cone_counterexamples(0.8)
        assert len(rows) == 10
        admissible = [row for row in rows if row["admissible"]]
        assert admissible
        assert all(row["isometric"] for row in admissible)
        assert not any(row["contradiction"] for row in rows)

    def test_bulged_disk_fails_curvature(self):
        rows = search_cone_counterexamples(0.8, deltas=(0.1,))
        bulged = next(row for row in rows if row["family"] == "bulged")
        assert bulged["metric_ok"]
        assert not bulged["curvature_ok"]


class TestDifferenceIdentity:
    """Linearized difference identity on the truncated cone."""

    def test_identical_metrics_give_zero(self):
        cone = PerturbedMetric.background(cone_geometry())
        result = schlaefli_difference(cone, cone, cone)
        assert result.lhs == 0.0
        assert result.gap == 0.0
        assert all(value == 0.0 for value in result.terms.values())

    @pytest.mark.parametrize("pair", DEFAULT_SCHLAEFLI_PAIRS)
    def test_gap_is_second_order(self, pair):
        result = schlaefli_order(1.0, 1.0, pair)
        assert result["order"] >= 1.9
        assert result["pair"][0] == (pair[0] or "cone")


class TestBarrierConstants:
    """B and b_ij of the anisotropic barrier."""

    def test_isotropic_metric_gives_unit_b(self):
        k = barrier_constants(np.eye(3), 2.0, 0.3, 1.0)
        np.testing.assert_allclose(k.b, np.ones((2, 2)), atol=1e-15)
        assert k.B == pytest.approx(3.0)

    def test_anisotropic_example(self):
        k = barrier_constants(np.diag([4.0, 1.0, 1.0]), 1.0, 0.0, 1.0)
        assert k.B == pytest.approx(3.0)
        assert k.b11 == pytest.approx(2.0)
        assert k.b12 == pytest.approx(4.0 / 3.0)
        assert k.b22 == pytest.approx(1.0)

    def test_scale_invariance(self):
        a = np.diag([2.0, 1.5, 1.2])
        k1 = barrier_constants(a, 1.0, 0.2, 0.5)
        k2 = barrier_constants(a, 3.0, 0.6, 1.5)
        np.testing.assert_allclose(k2.b, k1.b, rtol=1e-12)
        assert k2.B == pytest.approx(3.0 * k1.B, rel=1e-12)

    def test_symbolic_oracle(self):
        a = np.diag([4.0, 1.0, 2.0])
        k = barrier_constants(a, 1.0, 0.5, 2.0)
        exact = symbolic_barrier_constants(a, 1.0, 0.5, 2.0)
        for name in ("B", "b11", "b12", "b22"):
            assert abs(float(exact[name]) - getattr(k, name)) < 1e-12

    @pytest.mark.parametrize(
        "a,c",
        [
            (np.diag([0.5, 1.0, 1.0]), (1.0, 0.0, 1.0)),
            (np.eye(3), (1.0, 2.0, 1.0)),
            (np.array([[2.0, 0.5, 0.0], [0.5, 2.0, 0.0], [0.0, 0.0, 2.0]]), (1.0, 0.0, 1.0)),
        ],
    )
    def test_invalid_input(self, a, c):
        with pytest.raises(InputError):
            barrier_constants(a, *c)

    def test_boundary_directions_lie_on_ellipse(self):
        k = barrier_constants(np.diag([4.0, 1.0, 1.0]), 1.0, 0.0, 1.0)
        xhat = boundary_directions(k, 0.1, 16)
        values = 1.1 * np.einsum("ni,ij,nj->n", xhat, k.C * k.b, xhat)
        np.testing.assert_allclose(values, 1.0)
        with pytest.raises(ValueError):
            boundary_directions(k, 0.1, 15)


class TestModelSurfaceAngles:
    """Expansion of the contact angle of the model surfaces."""

    def test_isotropic_strict_inequality(self):
        k = barrier_constants(np.eye(3), 1.0, 0.2, 0.8)
        audit = model_surface_angle_audit(k, lam=0.1)
        assert all(audit["strict_by_scale"])
        assert audit["s0"] == pytest.approx(0.04)
        assert audit["sin_order"] >= 2.0
        fit = audit["lambda_fit"]
        assert fit["constant"] == pytest.approx(0.0, abs=1e-2)
        assert fit["linear"] == pytest.approx(-4.0, abs=1e-2)
        assert fit["quadratic"] == pytest.approx(-2.0, abs=1e-2)

    def test_anisotropic_remainder_orders(self):
        k = barrier_constants(np.diag([4.0, 1.0, 1.0]), 1.0, 0.0, 1.0)
        audit = model_surface_angle_audit(k)
        assert audit["sin_order"] >= 2.0
        assert audit["even_order"] >= 3.5
        assert max(audit["odd_remainder"]) < 1e-12


class TestMeanCurvatureLimit:
    """Apex mean curvature of the model surfaces and the barrier branch."""

    def test_isotropic_is_borderline(self):
        k = barrier_constants(np.eye(3), 1.0, 0.0, 1.0)
        H_sigma, jump = flat_model_mean_curvature(k)
        limit = mean_limit_H0(k, jump)
        assert H_sigma == pytest.approx(0.0, abs=1e-12)
        assert limit.H0 == pytest.approx(0.0, abs=1e-12)
        assert limit.branch == "foliation_needed"

    def test_stretched_horizontal_direction(self):
        k = barrier_constants(np.diag([4.0, 1.0, 1.0]), 1.0, 0.0, 1.0)
        H_sigma, jump = flat_model_mean_curvature(k)
        assert H_sigma == pytest.approx(0.5)
        assert mean_limit_H0(k, jump).H0 == pytest.approx(0.5)
        assert mean_limit_H0(k, jump).branch == "inconsistent"
        assert mean_limit_H0(k, jump, hbar0=1.0).branch == "strict_barrier"

    def test_stretched_vertical_direction(self):
        k = barrier_constants(np.diag([1.0, 1.0, 4.0]), 1.0, 0.0, 1.0)
        H_sigma, jump = flat_model_mean_curvature(k)
        limit = mean_limit_H0(k, jump)
        assert limit.H0 == pytest.approx(-4.0)
        assert H_sigma == pytest.approx(limit.H0)
        assert limit.branch == "strict_barrier"
