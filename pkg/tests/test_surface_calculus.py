import numpy as np
import pytest

from capillary_lab import presets
from capillary_lab.errors import DomainError, GeometryError
from capillary_lab.grid import RadialGrid
from capillary_lab.metrics import PerturbedMetric
from capillary_lab.surface_calculus import (
    RadialSurface,
    boundary_radius,
    contact_angle,
    convergence_order,
    graph_geometry,
    graph_surface,
    induced_geometry,
    level_surface,
    mean_curvature,
    scalar_curvature,
    side_boundary_mean_curvature,
)

RHO0 = np.pi / 3


class TestRadialSurface:
    """Construction and admissibility of axisymmetric graphs."""

    def test_wrong_length(self, round_geo):
        with pytest.raises(ValueError):
            RadialSurface(RadialGrid(8), np.ones(5), 1.0)

    def test_nonpositive_radius(self):
        with pytest.raises(GeometryError):
            RadialSurface(RadialGrid(8), np.ones(9), 0.0)

    def test_level_surface_is_admissible(self, round_geo, grid):
        surface = level_surface(round_geo, 1.2, grid)
        surface.validate(round_geo)
        assert surface.r_b == pytest.approx(RHO0)

    def test_touching_cap_is_rejected(self, round_geo, grid):
        surface = level_surface(round_geo, round_geo.t_plus, grid)
        with pytest.raises(GeometryError, match="cap"):
            surface.validate(round_geo)

    def test_boundary_off_side_is_rejected(self, round_geo, grid):
        surface = RadialSurface(grid, np.full(grid.n + 1, 1.2), 0.5)
        with pytest.raises(GeometryError, match="boundary off"):
            surface.validate(round_geo)

    def test_graph_boundary_radius(self, round_geo, grid):
        surface = graph_surface(round_geo, lambda r: 1.2 + 0.02 * np.cos(r), grid)
        surface.validate(round_geo)
        assert surface.r_b == pytest.approx(RHO0, abs=1e-12)

    def test_linear_profile_boundary_radius(self, grid):
        from capillary_lab.warped_geometry import build_geometry

        geo = build_geometry("round", profile="linear", profile_params={"rho0": 0.5, "rho1": 0.2})
        r_b = boundary_radius(lambda r: 1.0 + 0.05 * np.cos(r), geo)
        assert r_b == pytest.approx(0.5 + 0.2 * (1.0 + 0.05 * np.cos(r_b)), abs=1e-12)


class TestMeanCurvature:
    """H = div N of level sets and graphs."""

    @pytest.mark.parametrize("t0", [0.8, 1.2, np.pi / 2, 2.3])
    def test_level_sets_match_hbar(self, round_geo, round_metric, grid, t0):
        H = mean_curvature(level_surface(round_geo, t0, grid), round_metric)
        np.testing.assert_allclose(H, 2.0 / np.tan(t0), atol=1e-12)

    def test_level_sets_meet_cylinder_orthogonally(self, round_geo, round_metric, grid):
        assert contact_angle(level_surface(round_geo, 1.0, grid), round_metric) == pytest.approx(np.pi / 2)

    def test_conformal_level_set(self, round_geo, grid):
        eps = 0.05
        metric = PerturbedMetric.conformal(round_geo, presets.perturbation_field("t_squared"), eps)
        t0 = 1.1
        H = mean_curvature(level_surface(round_geo, t0, grid), metric)
        expected = 2.0 * (1.0 / np.tan(t0) + 2.0 * eps * t0) * np.exp(-eps * t0**2)
        np.testing.assert_allclose(H, expected, atol=1e-12)

    def test_unit_normal(self, round_geo, round_metric, grid):
        surface = graph_surface(round_geo, lambda r: 1.2 + 0.05 * np.cos(r), grid)
        geom = graph_geometry(surface, round_metric)
        fl = geom.fields
        norm = (fl.A * geom.n_t) ** 2 + (fl.B * geom.n_r) ** 2
        np.testing.assert_allclose(norm, 1.0, atol=1e-12)
        assert np.all(geom.n_t > 0)


class TestInducedGeometry:
    """Gauss curvature and the Gauss-Bonnet defect of the disk."""

    def test_level_set_is_spherical_cap(self, round_geo, round_metric):
        t0 = 1.2
        report = induced_geometry(level_surface(round_geo, t0, RadialGrid(64)), round_metric)
        np.testing.assert_allclose(report.gauss, 1.0 / np.sin(t0) ** 2, atol=1e-6)
        assert report.kappa == pytest.approx(1.0 / (np.tan(RHO0) * np.sin(t0)))
        assert report.gb_defect < 1e-6
        assert report.area == pytest.approx(2 * np.pi * np.sin(t0) ** 2 * (1 - np.cos(RHO0)), rel=1e-6)

    def test_gauss_bonnet_converges(self, round_geo, round_metric):
        def w(r):
            return 1.3 + 0.03 * np.cos(r) - 0.02 * np.cos(2 * r)

        ns = [16, 32, 64]
        defects = [induced_geometry(graph_surface(round_geo, w, RadialGrid(n)), round_metric).gb_defect for n in ns]
        assert defects[-1] < 1e-6
        if defects[0] > 1e-10:
            assert convergence_order([1.0 / n for n in ns], defects) >= 2.0

    def test_rows_match_columns(self, round_geo, round_metric, grid):
        report = induced_geometry(level_surface(round_geo, 1.2, grid), round_metric)
        rows = report.rows()
        assert len(rows) == grid.n + 1
        assert all(len(row) == len(report.CSV_COLUMNS) for row in rows)


class TestAmbientQueries:
    """Point queries of R_g and the side boundary mean curvature."""

    def test_scalar_curvature(self, round_metric):
        assert scalar_curvature(round_metric, 1.0, 0.5) == pytest.approx(6.0)

    def test_scalar_curvature_outside(self, round_metric):
        with pytest.raises(DomainError):
            scalar_curvature(round_metric, 1.0, 1.5)

    def test_side_boundary_mean_curvature(self, round_metric):
        assert side_boundary_mean_curvature(round_metric, 1.0) == pytest.approx(1.0 / (np.tan(RHO0) * np.sin(1.0)))

    def test_convergence_order(self):
        assert convergence_order([0.1, 0.05, 0.025], [1e-2, 2.5e-3, 6.25e-4]) == pytest.approx(2.0)
