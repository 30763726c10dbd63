import numpy as np
import pytest

from capillary_lab import presets
from capillary_lab.errors import PreconditionError
from capillary_lab.grid import RadialGrid
from capillary_lab.metrics import PerturbedMetric
from capillary_lab.rigidity_verifier import (
    comparisons,
    crucial_estimate,
    falsification_corpus,
    infinitesimal_rigidity_audit,
    ko_yao_check,
    stability_spectrum,
)
from capillary_lab.surface_calculus import graph_surface, level_surface
from capillary_lab.warped_geometry import build_geometry

NON_LEVEL_MODES = {
    "cos": np.cos,
    "cos2": lambda r: np.cos(2.0 * r),
    "quadratic": np.square,
    "cubic": lambda r: r**3,
}

CONVEX_PROFILES = [
    ("round", np.pi / 3),
    ("round", np.pi / 4),
    ("round", 1.2),
    ("gaussian", 1.0),
    ("cosh", 0.8),
]


def tangents(count=100):
    angles = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


class TestCrucialEstimate:
    """Lower bound integral of separating surfaces."""

    @pytest.mark.parametrize("t0", [1.0, 1.2, np.pi / 2, 2.0])
    def test_level_sets_are_sharp(self, round_geo, round_metric, t0):
        lhs, excess = crucial_estimate(level_surface(round_geo, t0, RadialGrid(64)), round_metric, round_geo)
        assert lhs == pytest.approx(2.0 * np.pi, abs=1e-6)
        assert abs(excess) < 1e-6

    @pytest.mark.parametrize("amplitude", [0.05, 0.1])
    @pytest.mark.parametrize("mode", sorted(NON_LEVEL_MODES))
    @pytest.mark.parametrize("t0", [1.2, np.pi / 2, 1.9])
    def test_non_level_graphs_have_positive_excess(self, round_geo, round_metric, t0, mode, amplitude):
        f = NON_LEVEL_MODES[mode]
        surface = graph_surface(round_geo, lambda r: t0 + amplitude * f(r), RadialGrid(64))
        _, excess = crucial_estimate(surface, round_metric, round_geo)
        assert excess > 1e-4

    @pytest.mark.parametrize("rho1", [-0.2, 0.2, 0.4])
    @pytest.mark.parametrize("t0", [1.2, np.pi / 2])
    def test_sloped_side_boundary(self, t0, rho1):
        geo = build_geometry("round", profile="linear", profile_params={"rho0": 0.9, "rho1": rho1})
        metric = geo.metric()
        lhs, excess = crucial_estimate(level_surface(geo, t0, RadialGrid(64)), metric, geo)
        assert lhs == pytest.approx(2.0 * np.pi, abs=1e-6)
        assert abs(excess) < 1e-6
        surface = graph_surface(geo, lambda r: t0 + 0.05 * np.cos(r), RadialGrid(64))
        _, excess = crucial_estimate(surface, metric, geo)
        assert excess > -1e-6

    def test_needs_metric_comparison(self, round_geo):
        metric = PerturbedMetric.conformal(round_geo, presets.perturbation_field("constant", {"c": 1.0}), -0.1)
        with pytest.raises(PreconditionError, match="g >= gbar"):
            crucial_estimate(level_surface(round_geo, 1.2, RadialGrid(16)), metric, round_geo)


class TestBoundaryInequality:
    """Pointwise inequality on convex side boundaries."""

    @pytest.mark.parametrize("warp,rho0", CONVEX_PROFILES)
    def test_nonnegative_margins(self, warp, rho0):
        geo = build_geometry(warp, profile_params={"rho0": rho0})
        t = geo.warp.samples(100)
        for tangent in tangents():
            assert np.min(ko_yao_check(t, geo, tangent)) >= -1e-10

    def test_rejects_nonconvex_boundary(self):
        geo = build_geometry("round", profile_params={"rho0": 2.0})
        with pytest.raises(PreconditionError, match="not convex"):
            ko_yao_check(geo.warp.samples(10), geo, [1.0, 0.0])

    def test_rejects_zero_tangent(self, round_geo):
        with pytest.raises(ValueError):
            ko_yao_check(round_geo.warp.samples(10), round_geo, [0.0, 0.0])


class TestComparisons:
    """g >= gbar, R_g >= R_gbar, boundary mean curvature and cap conditions."""

    def test_background_passes(self, round_geo, round_metric):
        report = comparisons(round_metric, round_geo, lattice=50)
        assert report.all_ok
        assert report.metric_margin == 0.0
        assert abs(report.scalar_margin) < 1e-12
        assert abs(report.boundary_margin) < 1e-12

    def test_t_squared_lowers_scalar_curvature(self, round_geo):
        metric = PerturbedMetric.conformal(round_geo, presets.perturbation_field("t_squared"), 0.01)
        report = comparisons(metric, round_geo, lattice=50)
        assert report.metric_ok
        assert "scalar" in report.failing
        assert not report.all_ok

    def test_report_dict(self, round_geo, round_metric):
        data = comparisons(round_metric, round_geo, lattice=20).to_dict()
        assert data["failing"] == []
        assert set(data["cap_conditions"]) >= {"upper_mean", "lower_mean", "upper_angle", "lower_angle"}


class TestSpectrum:
    """First eigenpair of the stability operator."""

    def test_level_set_is_neutral(self, round_geo, round_metric):
        result = stability_spectrum(level_surface(round_geo, 1.2, RadialGrid(32)), round_metric, round_geo)
        assert abs(result.mu) < 1e-4
        assert np.max(np.abs(result.eigenfunction - 1.0)) < 1e-6
        assert abs(result.quadratic_value) < 1e-8
        assert result.eigenvalues[1] > result.eigenvalues[0]

    def test_potential_shift_moves_spectrum(self, round_geo, round_metric):
        surface = level_surface(round_geo, 1.2, RadialGrid(32))
        result = stability_spectrum(surface, round_metric, round_geo, potential_shift=0.5)
        assert result.mu == pytest.approx(0.5, abs=1e-4)

    def test_needs_critical_surface(self, round_geo, round_metric):
        surface = graph_surface(round_geo, lambda r: 1.2 + 0.05 * np.cos(r), RadialGrid(32))
        with pytest.raises(PreconditionError, match="not critical"):
            stability_spectrum(surface, round_metric, round_geo)


class TestRigidityAudit:
    """Equality signature of background level sets."""

    def test_level_set_passes(self, round_geo, round_metric):
        audit = infinitesimal_rigidity_audit(level_surface(round_geo, 1.2, RadialGrid(64)), round_metric, round_geo)
        assert audit.all_ok, audit.deviations

    def test_graph_fails_level_flag(self, round_geo, round_metric):
        surface = graph_surface(round_geo, lambda r: 1.2 + 0.05 * np.cos(r), RadialGrid(32))
        audit = infinitesimal_rigidity_audit(surface, round_metric, round_geo)
        assert not audit.flags["level"]
        assert not audit.all_ok


class TestFalsificationCorpus:
    """Every nonzero corpus perturbation violates some comparison."""

    def test_default_corpus_is_caught(self, round_geo):
        rows = falsification_corpus(round_geo, lattice=50)
        assert len(rows) == len(presets.DEFAULT_CORPUS)
        for row in rows:
            assert row["nonzero"]
            assert row["failing"], row["name"]
            assert not row["unexpected"]

    def test_zero_perturbation_passes(self, round_geo):
        rows = falsification_corpus(round_geo, [{"name": "zero", "perturbation": "zero", "eps": 0.01}], lattice=50)
        assert rows == [
            {
                "name": "zero",
                "nonzero": False,
                "failing": [],
                "unexpected": False,
                "report": rows[0]["report"],
            }
        ]
