import numpy as np
import pytest

from capillary_lab import capillary_functional, presets
from capillary_lab.capillary_functional import (
    criticality_residuals,
    energy,
    first_variation,
    laplacian_matrix,
    ricci_normal,
    ricci_normal_rewritten,
    robin_coefficient,
    second_variation,
    stability_operators,
    stability_potential,
)
from capillary_lab.errors import AssemblyError, CapillaryLabError, PreconditionError
from capillary_lab.grid import RadialGrid
from capillary_lab.metrics import PerturbedMetric
from capillary_lab.surface_calculus import graph_geometry, graph_surface, level_surface
from capillary_lab.warped_geometry import build_geometry


@pytest.fixture(scope="module")
def conformal_metric(round_geo):
    return PerturbedMetric.conformal(round_geo, presets.perturbation_field("t_squared"), 0.1)


class TestEnergy:
    """Capillary energy and its first variation."""

    def test_level_sets_are_critical(self, round_geo, round_metric, grid):
        h_res, a_res = criticality_residuals(level_surface(round_geo, 1.2, grid), round_metric, round_geo)
        assert h_res < 1e-10
        assert a_res < 1e-10

    def test_first_variation_vanishes_on_level_sets(self, round_geo, round_metric, grid):
        surface = level_surface(round_geo, 1.2, grid)
        assert abs(first_variation(surface, round_metric, round_geo, 1.0)) < 1e-10

    def test_first_variation_matches_energy_difference(self, round_geo, conformal_metric):
        grid = RadialGrid(64)
        t0, h = 1.2, 1e-4
        plus = energy(level_surface(round_geo, t0 + h, grid), conformal_metric, round_geo).total
        minus = energy(level_surface(round_geo, t0 - h, grid), conformal_metric, round_geo).total
        surface = level_surface(round_geo, t0, grid)
        speed = conformal_metric.fields(surface.w, surface.r).A
        predicted = first_variation(surface, conformal_metric, round_geo, speed)
        assert (plus - minus) / (2 * h) == pytest.approx(predicted, rel=1e-6, abs=1e-8)

    def test_product_slab_has_no_bulk(self, grid):
        geo = build_geometry("product")
        breakdown = energy(level_surface(geo, 0.5, grid), geo.metric(), geo)
        assert breakdown.bulk_term == pytest.approx(0.0, abs=1e-14)
        assert breakdown.wetting_term == pytest.approx(0.0, abs=1e-14)
        assert breakdown.total == pytest.approx(2 * np.pi * (1 - np.cos(np.pi / 3)), rel=1e-6)


class TestRicciNormal:
    """Ric(N, N) directly and through the traced Gauss equation."""

    def test_round_level_set(self, round_geo, round_metric):
        surface = level_surface(round_geo, 1.2, RadialGrid(64))
        np.testing.assert_allclose(ricci_normal(surface, round_metric), 2.0, atol=1e-12)
        np.testing.assert_allclose(ricci_normal_rewritten(surface, round_metric), 2.0, atol=1e-6)


class TestStabilityOperators:
    """Jacobi operator, Robin coefficient and index form."""

    def test_potential_vanishes_on_level_sets(self, round_geo, round_metric, grid):
        V = stability_potential(level_surface(round_geo, 1.2, grid), round_metric, round_geo)
        assert np.max(np.abs(V)) < 1e-10

    def test_robin_forms_agree_on_critical_surface(self, round_geo, round_metric, grid):
        direct, rewritten = robin_coefficient(level_surface(round_geo, 1.2, grid), round_metric, round_geo)
        assert direct == pytest.approx(0.0, abs=1e-12)
        assert rewritten == pytest.approx(direct, abs=1e-10)

    def test_robin_rejects_near_tangent_angle(self, grid):
        geo = build_geometry(
            "product",
            cross="scaled_round",
            cross_params={"k": 0.01},
            profile="linear",
            profile_params={"rho0": 1.0, "rho1": 40.0},
        )
        surface = level_surface(geo, 0.5, grid)
        with pytest.raises(PreconditionError, match="tangency"):
            robin_coefficient(surface, geo.metric(), geo)

    def test_laplacian_of_first_spherical_harmonic(self):
        geo = build_geometry("product")
        surface = level_surface(geo, 0.5, RadialGrid(64))
        lap = laplacian_matrix(surface, graph_geometry(surface, geo.metric()))
        f = np.cos(surface.r)
        np.testing.assert_allclose(lap @ f, -2.0 * f, atol=1e-4)
        np.testing.assert_allclose(lap @ np.ones_like(f), 0.0, atol=1e-10)

    def test_index_form_is_symmetric(self, round_geo, round_metric, grid):
        ops = stability_operators(level_surface(round_geo, 1.2, grid), round_metric, round_geo)
        np.testing.assert_allclose(ops.Q, ops.Q.T)

    def test_symmetry_guard_raises_assembly_error(self, round_geo, round_metric, grid, monkeypatch):
        monkeypatch.setattr(capillary_functional, "SYMMETRY_TOL", -1.0)
        with pytest.raises(AssemblyError, match="not symmetric") as info:
            stability_operators(level_surface(round_geo, 1.2, grid), round_metric, round_geo)
        assert isinstance(info.value, CapillaryLabError)

    def test_constants_are_in_the_kernel(self, round_geo, round_metric, grid):
        surface = level_surface(round_geo, 1.2, grid)
        assert abs(second_variation(surface, round_metric, round_geo, np.ones(grid.n + 1))) < 1e-10

    def test_weak_and_strong_forms_agree(self, round_geo, round_metric):
        surface = level_surface(round_geo, 1.2, RadialGrid(64))
        ops = stability_operators(surface, round_metric, round_geo)
        f = np.cos(surface.r)
        assert ops.quadratic_form(f) == pytest.approx(ops.direct_form(f), rel=1e-3)

    def test_potential_shift_moves_diagonal(self, round_geo, round_metric, grid):
        surface = level_surface(round_geo, 1.2, grid)
        base = stability_operators(surface, round_metric, round_geo)
        shifted = stability_operators(surface, round_metric, round_geo, potential_shift=1.0)
        np.testing.assert_allclose(shifted.potential, base.potential - 1.0)

    def test_second_variation_needs_critical_surface(self, round_geo, round_metric, grid):
        surface = graph_surface(round_geo, lambda r: 1.2 + 0.05 * np.cos(r), grid)
        with pytest.raises(PreconditionError, match="not critical"):
            second_variation(surface, round_metric, round_geo, np.ones(grid.n + 1))
