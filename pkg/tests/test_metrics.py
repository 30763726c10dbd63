"""Closed-form curvature of the metric family against the finite-difference oracle."""

import numpy as np
import pytest

from capillary_lab import presets
from capillary_lab.curvature_oracle import oracle_ricci, oracle_scalar_curvature
from capillary_lab.metrics import (
    PerturbedMetric,
    ricci_normal_field,
    scalar_curvature_field,
    side_boundary_curvatures,
)
from capillary_lab.presets import ScalarFn

RHO0 = np.pi / 3
POINTS = [(0.8, 0.3), (1.4, 0.9), (2.1, 0.5)]


def conformal(geo, name, eps=0.05, params=None):
    return PerturbedMetric.conformal(geo, presets.perturbation_field(name, params), eps)


class TestConstruction:
    """Validation of the metric kinds."""

    def test_unknown_kind(self, round_geo):
        with pytest.raises(ValueError, match="unknown metric kind"):
            PerturbedMetric("torsion", round_geo)

    def test_conformal_needs_field(self, round_geo):
        with pytest.raises(ValueError):
            PerturbedMetric("conformal", round_geo)

    def test_labels(self, round_geo):
        assert round_geo.metric().label() == "background"
        assert "t_squared" in conformal(round_geo, "t_squared").label()


class TestComparisonEigenvalues:
    """g - gbar in a gbar-orthonormal frame."""

    def test_background_is_zero(self, round_geo):
        assert np.all(round_geo.metric().comparison_eigenvalues(1.0, 0.5) == 0.0)

    def test_conformal(self, round_geo):
        eig = conformal(round_geo, "t_squared", 0.1).comparison_eigenvalues(1.0, 0.5)
        np.testing.assert_allclose(eig, np.exp(0.2) - 1.0)

    def test_warp_replacement(self, round_geo):
        metric = PerturbedMetric.warp_replacement(round_geo, ScalarFn.from_expr("2*sin(t)"))
        np.testing.assert_allclose(metric.comparison_eigenvalues(1.0, 0.5), [0.0, 3.0, 3.0])


class TestScalarCurvature:
    """R_g from the conformal change formula and the warped formula."""

    def test_round_background(self, round_geo):
        assert float(scalar_curvature_field(round_geo.metric(), 1.0, 0.4)) == pytest.approx(6.0)

    def test_hatted_is_twice_cross_curvature(self, round_geo):
        metric = round_geo.hatted_metric()
        assert float(scalar_curvature_field(metric, 1.0, 0.4)) == pytest.approx(2.0)
        assert oracle_scalar_curvature(metric, 1.0, 0.4) == pytest.approx(2.0, abs=1e-4)

    @pytest.mark.parametrize("name", ["t_squared", "cos_r", "t_r_squared", "cosh_r"])
    def test_conformal_matches_oracle(self, round_geo, name):
        metric = conformal(round_geo, name)
        for t, r in POINTS:
            closed = float(scalar_curvature_field(metric, t, r))
            assert closed == pytest.approx(oracle_scalar_curvature(metric, t, r), abs=1e-4)

    def test_zero_perturbation_is_background(self, round_geo):
        metric = conformal(round_geo, "zero")
        assert float(scalar_curvature_field(metric, 1.0, 0.4)) == pytest.approx(6.0, abs=1e-12)


class TestRicciNormal:
    """Ric(N, N) for unit vectors in the (t, r) plane."""

    @pytest.mark.parametrize("name", ["t_squared", "t_r_squared"])
    def test_vertical_direction(self, round_geo, name):
        metric = conformal(round_geo, name)
        t, r = 1.1, 0.6
        fl = metric.fields(t, r)
        closed = float(ricci_normal_field(metric, t, r, 1.0 / fl.A, 0.0))
        ric, g = oracle_ricci(metric, t, r)
        assert closed == pytest.approx(ric[0, 0] / g[0, 0], abs=1e-4)

    def test_radial_direction(self, round_geo):
        metric = conformal(round_geo, "cos_r")
        t, r = 1.3, 0.7
        fl = metric.fields(t, r)
        closed = float(ricci_normal_field(metric, t, r, 0.0, 1.0 / fl.B))
        ric, g = oracle_ricci(metric, t, r)
        assert closed == pytest.approx(ric[1, 1] / g[1, 1], abs=1e-4)

    def test_round_vertical_is_two(self, round_geo):
        assert float(ricci_normal_field(round_geo.metric(), 1.0, 0.4, 1.0, 0.0)) == pytest.approx(2.0)


class TestSideBoundaryCurvatures:
    """Cylinder r = rho0 in the round background."""

    def test_constant_profile(self, round_geo):
        t = np.array([0.9, 1.6])
        side = side_boundary_curvatures(round_geo.metric(), t)
        np.testing.assert_allclose(side.meridian, 0.0, atol=1e-14)
        np.testing.assert_allclose(side.rotational, 1.0 / (np.tan(RHO0) * np.sin(t)), atol=1e-13)
        np.testing.assert_allclose(side.mean, side.rotational)
