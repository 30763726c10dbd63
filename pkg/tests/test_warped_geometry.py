import numpy as np
import pytest

from capillary_lab.errors import ConfigurationError, DomainError
from capillary_lab.warped_geometry import (
    background_boundary_mean_curvature,
    background_scalar_curvature,
    boundary_convexity,
    build_geometry,
    conformal_coordinate,
    hatted_boundary_mean_curvature,
    hbar,
    hbar_derivative,
    prescribed_angle,
    prescribed_angle_cos,
    validate_background,
)

RHO0 = np.pi / 3


class TestPrescribedMeanCurvature:
    """hbar = 2 psi'/psi and its derivative."""

    def test_round(self, round_geo):
        t = np.linspace(round_geo.t_minus, round_geo.t_plus, 7)
        np.testing.assert_allclose(hbar(round_geo, t), 2.0 / np.tan(t), atol=1e-13)
        np.testing.assert_allclose(hbar_derivative(round_geo, t), -2.0 / np.sin(t) ** 2, atol=1e-12)

    def test_scalar_input_gives_float(self, round_geo):
        assert isinstance(hbar(round_geo, 1.0), float)

    def test_outside_interval(self, round_geo):
        with pytest.raises(DomainError):
            hbar(round_geo, 0.1)

    def test_closed_interval(self, round_geo):
        ends = np.array([round_geo.t_minus, round_geo.t_plus])
        np.testing.assert_allclose(hbar(round_geo, ends), [2.0 * np.sqrt(3.0), -2.0 * np.sqrt(3.0)], atol=1e-12)
        with pytest.raises(DomainError):
            hbar(round_geo, round_geo.t_plus + 1e-6)

    def test_conical_tip_is_infinite(self):
        geo = build_geometry("cone", {"a": 0.8})
        assert hbar(geo, 0.0) == np.inf
        assert hbar(geo, 0.5) == pytest.approx(4.0)


class TestScalarCurvature:
    """Closed-form R of the background."""

    def test_round_is_six_on_lattice(self, round_geo):
        t = round_geo.warp.samples(100)
        tt, ss = np.meshgrid(t, np.linspace(0.0, 1.0, 100), indexing="ij")
        R = background_scalar_curvature(round_geo, tt, RHO0 * ss)
        assert np.max(np.abs(R - 6.0)) < 1e-8

    def test_product_with_round_cross(self):
        geo = build_geometry("product")
        assert background_scalar_curvature(geo, 0.5, 0.3) == pytest.approx(2.0)

    def test_point_outside_m(self, round_geo):
        with pytest.raises(DomainError):
            background_scalar_curvature(round_geo, 1.0, RHO0 + 0.1)
        with pytest.raises(DomainError):
            background_scalar_curvature(round_geo, round_geo.t_minus, 0.1)


class TestPrescribedAngle:
    """cos gammabar = -psi rho' / sqrt(1 + psi^2 rho'^2)."""

    def test_constant_profile_is_right_angle(self, round_geo):
        assert prescribed_angle(round_geo, 1.0) == pytest.approx(np.pi / 2)

    def test_linear_profile(self):
        geo = build_geometry("round", profile="linear", profile_params={"rho0": 0.5, "rho1": 0.2})
        t = 1.2
        u = np.sin(t) * 0.2
        assert prescribed_angle_cos(geo, t) == pytest.approx(-u / np.sqrt(1.0 + u**2))
        assert 0.0 < prescribed_angle(geo, t) < np.pi


class TestConformalCoordinate:
    """s(t) = integral of 1/psi."""

    def test_product_is_translation(self):
        geo = build_geometry("product", {"t_minus": 0.0, "t_plus": 2.0})
        assert conformal_coordinate(geo, 1.5) == pytest.approx(1.5, abs=1e-10)

    def test_round(self, round_geo):
        t = 2.0
        expected = np.log(np.tan(t / 2)) - np.log(np.tan(round_geo.t_minus / 2))
        assert conformal_coordinate(round_geo, t) == pytest.approx(expected, abs=1e-10)

    def test_conical_tip_diverges(self):
        geo = build_geometry("cone", {"a": 0.5})
        assert conformal_coordinate(geo, 0.0) == -np.inf
        assert conformal_coordinate(geo, 0.5) == pytest.approx(0.0, abs=1e-12)


class TestSideBoundary:
    """Side boundary curvatures in the hatted and background metrics."""

    def test_hatted_mean_of_constant_profile(self, round_geo):
        assert hatted_boundary_mean_curvature(round_geo, 1.0) == pytest.approx(1.0 / np.tan(RHO0))

    def test_background_mean_of_constant_profile(self, round_geo):
        t = np.array([0.8, 1.5, 2.2])
        np.testing.assert_allclose(
            background_boundary_mean_curvature(round_geo, t), 1.0 / (np.tan(RHO0) * np.sin(t)), atol=1e-12
        )

    def test_constant_profile_is_convex_not_strict(self, round_geo):
        report = boundary_convexity(round_geo)
        assert report.convex
        assert not report.strictly_convex
        assert not boundary_convexity(round_geo, strict=True).ok

    def test_wide_cylinder_is_not_convex(self):
        geo = build_geometry("round", profile_params={"rho0": 2.0})
        assert not boundary_convexity(geo).convex


class TestValidation:
    """Type invariants of the background."""

    def test_round_passes(self, round_geo):
        assert validate_background(round_geo) == []

    def test_gaussian_passes(self):
        assert validate_background(build_geometry("gaussian")) == []

    def test_product_is_not_log_concave(self):
        assert "log_concavity" in validate_background(build_geometry("product"))

    def test_strict_convexity_flag(self, round_geo):
        assert "boundary_convexity" in validate_background(round_geo, strict_convexity=True)

    def test_spline_warp(self):
        t = np.linspace(0.4, 2.6, 40)
        geo = build_geometry("spline", {"t": t.tolist(), "psi": np.sin(t).tolist()})
        assert geo.t_minus == pytest.approx(0.4)
        assert hbar(geo, 1.0) == pytest.approx(2.0 / np.tan(1.0), abs=1e-3)

    def test_spline_without_samples(self):
        with pytest.raises(ConfigurationError, match="'t' and 'psi'"):
            build_geometry("spline", {"t": [0.0, 1.0, 2.0, 3.0]})

    def test_empty_interval(self):
        with pytest.raises(ConfigurationError, match="empty warp interval"):
            build_geometry("product", {"t_minus": 1.0, "t_plus": 1.0})
