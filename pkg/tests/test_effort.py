"""Effort accumulation, overlap correction, track utilities, ensembles."""

import numpy as np
import pytest

from effortud.effort import (
    DailyEffortCDF,
    EffortEnsemble,
    EffortField,
    bin_track_effort,
    combine_effort,
    daily_fraction,
    mc_effort_ensemble,
    overlap_corrected_effort,
    path_integral_effort,
    read_daily_cdf_json,
    regularize_track,
    scale_effort,
    trip_grouped_effort,
    write_daily_cdf_json,
)
from effortud.errors import GridMismatchError, OutOfDomainError
from effortud.geometry import StudyRegion, build_grid
from effortud.movement import Trajectory

REGION = StudyRegion(0.0, 100.0, 0.0, 100.0)


def static_track(x, y, n_steps, dt=1.0):
    return Trajectory(positions=np.tile([float(x), float(y)], (n_steps, 1)), dt=dt)


def brute_force_effort(tracks, grid, radius, mode):
    """Independent per-step recount over every cell center."""
    X, Y = grid.center_arrays()
    acc = np.zeros((grid.ny, grid.nx))
    for t in tracks:
        for x, y in t.positions:
            d = np.hypot(X - x, Y - y)
            if mode == "indicator":
                acc += (d <= radius).astype(float)
            else:
                acc += np.clip(1.0 - d / radius, 0.0, 1.0)
    return acc * tracks[0].dt


class TestPathIntegralEffort:
    def test_contained_static_observer(self):
        g = build_grid(REGION, 100, 100)
        tr = static_track(50.5, 50.5, 10)  # exactly at a cell center
        f = path_integral_effort([tr], g, 0.4, mode="indicator")
        assert f.values[50, 50] == pytest.approx(10.0)
        assert f.values.sum() == pytest.approx(10.0)

    def test_additivity_of_disjoint_observers(self):
        g = build_grid(REGION, 100, 100)
        a = static_track(20.0, 20.0, 10)
        b = static_track(80.0, 80.0, 10)
        fa = path_integral_effort([a], g, 10.0, mode="detection")
        fb = path_integral_effort([b], g, 10.0, mode="detection")
        fab = path_integral_effort([a, b], g, 10.0, mode="detection")
        assert np.allclose(fab.values, fa.values + fb.values, rtol=1e-12)

    @pytest.mark.parametrize("mode", ["indicator", "detection"])
    def test_against_brute_force(self, mode):
        g = build_grid(REGION, 40, 40)
        rng = np.random.default_rng(19)
        tracks = [
            Trajectory(positions=rng.uniform(5, 95, size=(30, 2)), dt=1.0)
            for _ in range(2)
        ]
        fast = path_integral_effort(tracks, g, 10.0, mode=mode)
        slow = brute_force_effort(tracks, g, 10.0, mode)
        assert np.allclose(fast.values, slow, rtol=1e-10, atol=1e-12)

    def test_dt_scaling(self):
        g = build_grid(REGION, 20, 20)
        tr = static_track(50.0, 50.0, 4, dt=0.25)
        f = path_integral_effort([tr], g, 10.0, mode="indicator")
        f1 = path_integral_effort([static_track(50.0, 50.0, 4, dt=1.0)], g, 10.0, "indicator")
        assert np.allclose(f.values, 0.25 * f1.values)

    def test_empty_tracks(self):
        g = build_grid(REGION, 10, 10)
        f = path_integral_effort([], g, 10.0)
        assert np.all(f.values == 0.0)

    def test_bad_range(self):
        g = build_grid(REGION, 10, 10)
        with pytest.raises(ValueError):
            path_integral_effort([static_track(5, 5, 1)], g, 0.0)

    def test_position_outside_region(self):
        g = build_grid(REGION, 10, 10)
        tr = Trajectory(positions=np.array([[50.0, 101.0]]), dt=1.0)
        with pytest.raises(OutOfDomainError):
            path_integral_effort([tr], g, 10.0)


class TestOverlapCorrectedEffort:
    def test_two_half_probability_observers(self):
        # each observer sits 5 units west of the probed center: p = 0.5
        g = build_grid(REGION, 100, 100)
        t1 = static_track(45.5, 50.5, 1)
        t2 = static_track(45.5, 50.5, 1)
        f = overlap_corrected_effort([t1, t2], g, 10.0)
        assert f.values[50, 50] == pytest.approx(1.0 - 0.5 * 0.5, rel=1e-12)

    def test_single_observer_equals_plain_detection(self):
        g = build_grid(REGION, 50, 50)
        rng = np.random.default_rng(23)
        tr = Trajectory(positions=rng.uniform(10, 90, size=(25, 2)), dt=1.0)
        plain = path_integral_effort([tr], g, 10.0, mode="detection")
        corr = overlap_corrected_effort([tr], g, 10.0)
        assert np.allclose(corr.values, plain.values, rtol=1e-9, atol=1e-12)

    def test_twenty_colocated_observers(self):
        # p = 0.1 per observer at 9 units: joint coverage 1 - 0.9^20
        g = build_grid(REGION, 100, 100)
        tracks = [static_track(41.5, 50.5, 1) for _ in range(20)]
        f = overlap_corrected_effort(tracks, g, 10.0)
        assert f.values[50, 50] == pytest.approx(0.8784233454094307, rel=1e-10)

    def test_never_exceeds_plain_sum(self):
        g = build_grid(REGION, 40, 40)
        rng = np.random.default_rng(29)
        tracks = [
            Trajectory(positions=rng.uniform(20, 80, size=(15, 2)), dt=1.0)
            for _ in range(4)
        ]
        plain = path_integral_effort(tracks, g, 15.0, mode="detection")
        corr = overlap_corrected_effort(tracks, g, 15.0)
        assert np.all(corr.values <= plain.values + 1e-9)

    def test_equality_when_coverage_disjoint(self):
        g = build_grid(REGION, 100, 100)
        tracks = [static_track(20.0, 20.0, 3), static_track(80.0, 80.0, 3)]
        plain = path_integral_effort(tracks, g, 10.0, mode="detection")
        corr = overlap_corrected_effort(tracks, g, 10.0)
        assert np.allclose(corr.values, plain.values, rtol=1e-9, atol=1e-12)


class TestTripGroupedEffort:
    def test_sums_over_trips(self):
        g = build_grid(REGION, 30, 30)
        rng = np.random.default_rng(31)
        trips = {
            k: [Trajectory(positions=rng.uniform(10, 90, size=(10, 2)), dt=1.0)]
            for k in range(3)
        }
        total = trip_grouped_effort(trips, g, 10.0, mode="detection")
        parts = [
            path_integral_effort(tracks, g, 10.0, mode="detection")
            for tracks in trips.values()
        ]
        assert np.allclose(total.values, sum(p.values for p in parts), rtol=1e-12)

    def test_overlap_applied_within_trip(self):
        g = build_grid(REGION, 100, 100)
        trips = {0: [static_track(45.5, 50.5, 1), static_track(45.5, 50.5, 1)]}
        f = trip_grouped_effort(trips, g, 10.0, mode="detection", overlap=True)
        assert f.values[50, 50] == pytest.approx(0.75, rel=1e-12)


class TestRegularizeTrack:
    def test_linear_interpolation(self):
        tr = regularize_track([0.0, 60.0], [[0.0, 0.0], [60.0, 0.0]], 30.0)
        assert np.allclose(tr.positions, [[0, 0], [30, 0], [60, 0]])

    def test_single_fix_rejected(self):
        with pytest.raises(ValueError):
            regularize_track([0.0], [[0.0, 0.0]], 30.0)

    def test_irregular_fix_count(self):
        # ~15 s cadence over 10 minutes resampled at 30 s -> 21 points
        rng = np.random.default_rng(3)
        times = np.cumsum(rng.uniform(10.0, 20.0, size=60))
        times = (times - times[0]) * (600.0 / (times[-1] - times[0]))
        pos = np.column_stack((np.linspace(0, 50, 60), np.linspace(0, 20, 60)))
        tr = regularize_track(times, pos, 30.0)
        assert len(tr) == 21

    def test_endpoints_preserved(self):
        times = [0.0, 45.0, 90.0]
        pos = [[0.0, 0.0], [10.0, 5.0], [30.0, 10.0]]
        tr = regularize_track(times, pos, 30.0)
        assert tr.positions[0] == pytest.approx([0.0, 0.0])
        assert tr.positions[-1] == pytest.approx([30.0, 10.0])

    def test_nonincreasing_times_rejected(self):
        with pytest.raises(ValueError):
            regularize_track([0.0, 0.0], [[0, 0], [1, 1]], 30.0)


class TestBinTrackEffort:
    def test_counts_times_dt(self):
        g = build_grid(REGION, 10, 10)
        tr = static_track(15.0, 15.0, 10, dt=1.0 / 120.0)
        f = bin_track_effort(tr, g, units="boat-hours")
        assert f.values[1, 1] == pytest.approx(1.0 / 12.0)
        assert f.units == "boat-hours"

    def test_empty_track(self):
        g = build_grid(REGION, 10, 10)
        f = bin_track_effort(Trajectory(positions=np.empty((0, 2)), dt=1.0), g)
        assert np.all(f.values == 0.0)

    def test_uniform_scatter_poisson_bounds(self):
        g = build_grid(REGION, 10, 10)
        rng = np.random.default_rng(17)
        tr = Trajectory(positions=rng.uniform(0, 100, size=(10000, 2)), dt=1.0)
        f = bin_track_effort(tr, g)
        expect = 100.0  # 1e4 points over 100 cells
        sigma = np.sqrt(expect)
        assert np.all(np.abs(f.values - expect) <= 5 * sigma)


class TestDailyEffort:
    def _uniform_cdf(self):
        return DailyEffortCDF((0.0, 9.0), (0.0, 1.0))

    def test_anchors(self):
        cdf = self._uniform_cdf()
        assert daily_fraction(cdf, 0.0) == 0.0
        assert daily_fraction(cdf, 9.0) == 1.0
        assert daily_fraction(cdf, 3.0) == pytest.approx(1.0 / 3.0)

    def test_monotone(self):
        cdf = DailyEffortCDF((0.0, 2.0, 5.0, 9.0), (0.0, 0.1, 0.8, 1.0))
        taus = np.linspace(0, 9, 50)
        vals = daily_fraction(cdf, taus)
        assert np.all(np.diff(vals) >= 0)

    def test_domain_checked(self):
        with pytest.raises(OutOfDomainError):
            daily_fraction(self._uniform_cdf(), 9.5)
        with pytest.raises(OutOfDomainError):
            daily_fraction(self._uniform_cdf(), -0.1)

    def test_validation(self):
        with pytest.raises(ValueError):
            DailyEffortCDF((0.0, 9.0), (0.0, 0.9))  # does not reach 1
        with pytest.raises(ValueError):
            DailyEffortCDF((1.0, 9.0), (0.0, 1.0))  # first knot not (0, 0)
        with pytest.raises(ValueError):
            DailyEffortCDF((0.0, 4.0, 9.0), (0.0, 0.8, 0.5))  # decreasing

    def test_json_round_trip(self, tmp_path):
        cdf = DailyEffortCDF((0.0, 2.0, 9.0), (0.0, 0.25, 1.0))
        p = tmp_path / "cdf.json"
        write_daily_cdf_json(cdf, p)
        back = read_daily_cdf_json(p)
        assert back == cdf


class TestScaleCombine:
    def _field(self, value=1.0):
        g = build_grid(REGION, 5, 5)
        return EffortField(g, np.full((5, 5), value))

    def test_scale_zero_and_identity(self):
        f = self._field(2.0)
        assert np.all(scale_effort(f, 0.0).values == 0.0)
        assert np.array_equal(scale_effort(f, 1.0).values, f.values)

    def test_scale_integral(self):
        g = build_grid(REGION, 5, 5)
        base = EffortField(g, np.full((5, 5), 100.0 / (25 * g.cell_area)))
        scaled = scale_effort(base, 15.5)
        assert scaled.values.sum() * g.cell_area == pytest.approx(1550.0)

    def test_negative_scale_rejected(self):
        with pytest.raises(ValueError):
            scale_effort(self._field(), -1.0)

    def test_combine(self):
        f = self._field(3.0)
        z = self._field(0.0)
        assert np.array_equal(combine_effort([f, z]).values, f.values)
        assert np.array_equal(combine_effort([f, f]).values, 2 * f.values)

    def test_combine_elementwise(self):
        g = build_grid(REGION, 4, 4)
        rng = np.random.default_rng(5)
        fields = [EffortField(g, rng.uniform(size=(4, 4))) for _ in range(3)]
        out = combine_effort(fields)
        expect = fields[0].values + fields[1].values + fields[2].values
        assert np.allclose(out.values, expect, rtol=1e-15)

    def test_combine_grid_mismatch(self):
        a = self._field()
        g2 = build_grid(REGION, 6, 6)
        b = EffortField(g2, np.zeros((6, 6)))
        with pytest.raises(GridMismatchError):
            combine_effort([a, b])


class TestEnsembles:
    def _sampler(self, rng):
        g = build_grid(REGION, 3, 3)
        return EffortField(g, rng.uniform(size=(3, 3)))

    def test_single_member(self):
        ens = mc_effort_ensemble(self._sampler, 1, np.random.default_rng(0))
        assert ens.n_members == 1

    def test_thousand_members(self):
        ens = mc_effort_ensemble(self._sampler, 1000, np.random.default_rng(1))
        assert ens.n_members == 1000

    def test_deterministic_under_seed(self):
        a = mc_effort_ensemble(self._sampler, 5, np.random.default_rng(3))
        b = mc_effort_ensemble(self._sampler, 5, np.random.default_rng(3))
        for ma, mb in zip(a.members, b.members):
            assert np.array_equal(ma.values, mb.values)

    def test_degenerate_sampler(self):
        g = build_grid(REGION, 3, 3)
        fixed = EffortField(g, np.ones((3, 3)))
        ens = mc_effort_ensemble(lambda rng: fixed.copy(), 4, np.random.default_rng(0))
        assert all(np.array_equal(m.values, fixed.values) for m in ens.members)
        assert np.all(ens.sd_field().values == 0.0)

    def test_mean_field(self):
        g = build_grid(REGION, 2, 2)
        a = EffortField(g, np.zeros((2, 2)))
        b = EffortField(g, np.full((2, 2), 2.0))
        ens = EffortEnsemble([a, b])
        assert np.all(ens.mean_field().values == 1.0)
