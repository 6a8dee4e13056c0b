"""Speed histograms, steady detection, tail fits, and barrier checks."""

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.optimize import brentq

from gkin.engine import Ensemble
from gkin.errors import InvalidParameterError, NumericalError
from gkin.observables import ObservableSeries
from gkin.tail_analysis import (
    BarrierParams,
    SpeedHistogram,
    ball_volume,
    barrier_coefficient,
    barrier_rate,
    calibrate_lower_bound,
    detect_steady,
    first_speed_moment,
    fit_tail,
    laplacian_rate,
    maxwellian_density,
    overpopulation_ratio,
    verify_barrier_inequality,
    verify_lower_bound,
)


def synthetic_histogram(profile, v_max=8.0, n_bins=128, amplitude=1e7,
                        thermal=1.0, n_dim=3):
    """Histogram whose binned density follows ``profile`` up to rounding."""
    edges = np.linspace(0.0, v_max, n_bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    shells = np.diff(ball_volume(edges, n_dim))
    counts = np.rint(amplitude * profile(centers) * shells).astype(np.int64)
    return SpeedHistogram(edges=edges, n_dim=n_dim, rho0=1.0,
                          thermal_speed=thermal, counts=counts)


# ---------------------------------------------------------------------------
# histogram bookkeeping

def test_ball_volume_known_values():
    assert ball_volume(2.0, 3) == pytest.approx(4.0 / 3.0 * np.pi * 8.0)
    assert ball_volume(1.5, 2) == pytest.approx(np.pi * 2.25)
    assert ball_volume(0.0, 5) == 0.0


class TestSpeedHistogram:
    @given(n=st.integers(min_value=1, max_value=400),
           v_max=st.floats(min_value=0.5, max_value=4.0),
           seed=st.integers(min_value=0, max_value=10_000),
           rho0=st.floats(min_value=0.1, max_value=8.0))
    @settings(max_examples=100, deadline=None)
    def test_total_mass_is_rho0(self, n, v_max, seed, rho0):
        """Mass conservation: counts + overflow always account for rho0."""
        rng = np.random.default_rng(seed)
        vel = rng.standard_normal((n, 3))
        hist = SpeedHistogram(edges=np.linspace(0.0, v_max, 33), n_dim=3,
                              rho0=rho0, thermal_speed=1.0)
        hist.accumulate(vel)
        assert hist.mass() == pytest.approx(rho0, rel=1e-12)
        assert hist.total_samples == n
        # densities integrate back to the non-overflow mass
        binned = float(np.sum(hist.density * hist.shell_volumes))
        assert binned == pytest.approx(rho0 - hist.overflow * hist.weight,
                                       rel=1e-10, abs=1e-12)

    def test_accumulate_multiple_snapshots(self):
        rng = np.random.default_rng(0)
        hist = SpeedHistogram(edges=np.linspace(0.0, 5.0, 65), n_dim=3,
                              rho0=2.0, thermal_speed=1.0)
        for _ in range(4):
            hist.accumulate(rng.standard_normal((500, 3)))
        assert hist.total_samples == 2000
        assert hist.mass() == pytest.approx(2.0, rel=1e-12)

    def test_from_velocities_covers_all_samples(self):
        rng = np.random.default_rng(1)
        vel = rng.standard_normal((5000, 3))
        hist = SpeedHistogram.from_velocities(vel, 1.0, 1.0)
        assert hist.overflow == 0
        assert int(hist.counts.sum()) == 5000

    def test_rel_err_infinite_on_empty_bins(self):
        hist = SpeedHistogram(edges=np.linspace(0.0, 1.0, 5), n_dim=3,
                              rho0=1.0, thermal_speed=1.0,
                              counts=np.array([100, 0, 4, 0]))
        assert np.isinf(hist.rel_err[1])
        assert hist.rel_err[0] == pytest.approx(0.1)

    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            SpeedHistogram(edges=np.array([1.0]), n_dim=3, rho0=1.0,
                           thermal_speed=1.0)
        with pytest.raises(InvalidParameterError):
            SpeedHistogram(edges=np.array([0.0, -1.0]), n_dim=3, rho0=1.0,
                           thermal_speed=1.0)
        with pytest.raises(InvalidParameterError):
            SpeedHistogram(edges=np.linspace(0, 1, 5), n_dim=3, rho0=-1.0,
                           thermal_speed=1.0)
        hist = SpeedHistogram(edges=np.linspace(0, 1, 5), n_dim=3, rho0=1.0,
                              thermal_speed=1.0)
        with pytest.raises(InvalidParameterError):
            hist.accumulate(np.zeros((10, 2)))


# ---------------------------------------------------------------------------
# steady-state detection

def _series_from_y2_d3(times, y2, d3):
    out = ObservableSeries()
    out.times = list(times)
    out.moments[2] = list(y2)
    out.d3 = list(d3)
    return out


class TestDetectSteady:
    def test_constant_series_is_steady_immediately(self):
        t = np.arange(0.0, 10.0, 0.25)
        s = _series_from_y2_d3(t, np.full(t.size, 7.0), np.full(t.size, 64.0))
        det = detect_steady(s, window=2.0)
        assert det
        assert det.time == pytest.approx(2.0)

    def test_relaxing_series_reports_crossover(self):
        t = np.arange(0.0, 40.0, 0.25)
        y2 = 7.0 + 5.0 * np.exp(-t)
        s = _series_from_y2_d3(t, y2, 64.0 * np.ones(t.size))
        det = detect_steady(s, window=2.0, tol=0.01)
        assert det
        # relative window change of exp(-t) drops below 1% around t ~ 6
        assert 2.0 < det.time < 12.0

    def test_growing_series_never_steady(self):
        t = np.arange(0.0, 20.0, 0.5)
        s = _series_from_y2_d3(t, 1.0 + t, 10.0 + t)
        det = detect_steady(s, window=2.0)
        assert not det
        assert det.time is None
        assert "drifting" in det.diagnostic

    def test_short_series_rejected(self):
        t = np.arange(0.0, 3.0, 0.5)
        s = _series_from_y2_d3(t, np.ones(t.size), np.ones(t.size))
        with pytest.raises(InvalidParameterError):
            detect_steady(s, window=2.0)

    def test_invalid_window_rejected(self):
        t = np.arange(0.0, 10.0, 0.5)
        s = _series_from_y2_d3(t, np.ones(t.size), np.ones(t.size))
        with pytest.raises(InvalidParameterError):
            detect_steady(s, window=0.0)


# ---------------------------------------------------------------------------
# tail exponent fits

class TestFitTail:
    def test_noiseless_stretched_exponential_recovered(self):
        a = 1.0
        hist = synthetic_histogram(lambda s: np.exp(-a * s**1.5))
        fit = fit_tail(hist)
        assert fit.exponent == pytest.approx(1.5, abs=0.011)
        assert fit.scale == pytest.approx(a, rel=1e-2)
        assert fit.residual < 1e-2
        assert fit.residual_p15 < fit.residual_p20

    def test_noiseless_gaussian_recovered(self):
        hist = synthetic_histogram(lambda s: np.exp(-0.5 * s**2), v_max=6.0)
        fit = fit_tail(hist)
        assert fit.exponent == pytest.approx(2.0, abs=0.011)
        assert fit.scale == pytest.approx(0.5, rel=1e-2)
        assert fit.residual_p20 < fit.residual_p15

    def test_sampled_stretched_exponential(self):
        rng = np.random.default_rng(1)
        n = 2_000_000
        # |v| with density ~ s^2 exp(-s^(3/2)): s = z^(2/3), z ~ Gamma(2, 1)
        z = rng.gamma(2.0, 1.0, n)
        s = z ** (2.0 / 3.0)
        e = rng.standard_normal((n, 3))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        vel = s[:, None] * e
        v_th = float(np.sqrt(np.mean(s * s) / 3.0))
        hist = SpeedHistogram.from_velocities(vel, 1.0, v_th)
        fit = fit_tail(hist)
        assert fit.exponent == pytest.approx(1.5, abs=0.1)
        assert fit.scale == pytest.approx(1.0, abs=0.1)
        assert fit.residual_p15 < fit.residual_p20

    def test_scale_equivariance_under_velocity_rescaling(self):
        """v -> eta v maps (p, a) to (p, a eta^-p) and nothing else."""
        rng = np.random.default_rng(4)
        n = 400_000
        z = rng.gamma(2.0, 1.0, n)
        s = z ** (2.0 / 3.0)
        e = rng.standard_normal((n, 3))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        vel = s[:, None] * e
        v_th = float(np.sqrt(np.mean(s * s) / 3.0))
        eta = 2.5
        base = fit_tail(SpeedHistogram.from_velocities(vel, 1.0, v_th))
        scaled = fit_tail(SpeedHistogram.from_velocities(
            eta * vel, 1.0, eta * v_th))
        assert scaled.exponent == pytest.approx(base.exponent, abs=0.011)
        assert scaled.scale == pytest.approx(
            base.scale * eta ** (-base.exponent), rel=1e-6)

    def test_too_few_tail_bins_raises(self):
        rng = np.random.default_rng(2)
        vel = 0.1 * rng.standard_normal((2000, 3))
        hist = SpeedHistogram.from_velocities(vel, 1.0, 10.0)
        with pytest.raises(NumericalError, match="tail fit unavailable"):
            fit_tail(hist)


def test_overpopulation_ratio_flags_heavy_tail():
    temperature = 1.0
    heavy = synthetic_histogram(lambda s: np.exp(-s**1.5))
    ratio, ratio_err = overpopulation_ratio(heavy, temperature)
    centers = heavy.centers
    resolved = heavy.rel_err < 0.2
    tail = resolved & (centers > 3.0)
    assert np.all(np.diff(ratio[tail]) > -4.0 * (ratio_err[tail][1:]
                                                 + ratio_err[tail][:-1]))
    assert ratio[tail][-1] > 10.0 * ratio[tail][0]


def test_maxwellian_density_normalization():
    # integrate over shells: recovers rho0
    edges = np.linspace(0.0, 12.0, 2001)
    centers = 0.5 * (edges[:-1] + edges[1:])
    shells = np.diff(ball_volume(edges, 3))
    total = float(np.sum(maxwellian_density(centers, 2.0, 1.3, 3) * shells))
    assert total == pytest.approx(2.0, rel=1e-4)


# ---------------------------------------------------------------------------
# barrier function machinery

class TestBarrierCoefficient:
    def test_root_satisfies_quadratic(self):
        for (rho0, rho1, r, n_dim) in [(1.0, 1.0, 1.0, 3), (2.0, 0.5, 1.7, 2),
                                       (0.3, 4.0, 0.6, 3)]:
            a = barrier_coefficient(rho0, rho1, r, n_dim)
            residual = 2.25 * r * a * a \
                - 0.75 * (2 * n_dim - 1) / np.sqrt(r) * a - (rho0 * r + rho1)
            # either the exact root, or the side-condition floor kicked in
            assert residual > -1e-10 or a == pytest.approx(
                np.sqrt(4.0 * rho0 / 9.0))

    def test_reference_value(self):
        # frozen from an independent root-finder evaluation
        assert barrier_coefficient(1.0, 1.0, 1.0, 3) == pytest.approx(
            2.0916391, abs=5e-7)

    def test_matches_brentq_oracle(self):
        rho0, rho1, r, n_dim = 1.3, 0.7, 2.1, 3

        def g(a):
            return 2.25 * r * a * a \
                - 0.75 * (2 * n_dim - 1) / np.sqrt(r) * a - (rho0 * r + rho1)

        oracle = brentq(g, 1e-9, 1e3, xtol=1e-13)
        assert barrier_coefficient(rho0, rho1, r, n_dim) == pytest.approx(
            oracle, rel=1e-10)

    def test_monotone_in_background_mass(self):
        a1 = barrier_coefficient(0.5, 1.0, 1.0, 3)
        a2 = barrier_coefficient(1.5, 1.0, 1.0, 3)
        a3 = barrier_coefficient(1.5, 2.0, 1.0, 3)
        assert a2 > a1
        assert a3 > a2

    def test_large_radius_limit_hits_side_condition(self):
        # rho1 and the gradient term become negligible: a -> sqrt(4 rho0/9)
        a = barrier_coefficient(1.0, 0.0, 1e8, 3)
        assert a == pytest.approx(2.0 / 3.0, rel=1e-3)

    def test_invalid_arguments(self):
        with pytest.raises(InvalidParameterError):
            barrier_coefficient(0.0, 1.0, 1.0, 3)
        with pytest.raises(InvalidParameterError):
            barrier_coefficient(1.0, -0.1, 1.0, 3)


@given(a=st.floats(min_value=0.2, max_value=3.0),
       s=st.floats(min_value=0.3, max_value=8.0),
       n_dim=st.sampled_from([2, 3, 4]))
@settings(max_examples=150, deadline=None)
def test_laplacian_rate_matches_radial_finite_differences(a, s, n_dim):
    """Dual route: closed form vs the radial Laplacian of exp(-a s^(3/2))."""
    assume(a * s**1.5 < 30.0)       # keep the barrier within FD precision
    h = 1e-5 * s

    def barrier(x):
        return np.exp(-a * x**1.5)

    d1 = (barrier(s + h) - barrier(s - h)) / (2.0 * h)
    d2 = (barrier(s + h) - 2.0 * barrier(s) + barrier(s - h)) / h**2
    fd = (d2 + (n_dim - 1) / s * d1) / barrier(s)
    # the reference route amplifies rounding by 1/h^2 (the closed form can
    # be an exact zero, e.g. a=1, s=1, n_dim=2, while fd carries that noise)
    fd_noise = 8.0 * np.finfo(float).eps / h**2
    assert laplacian_rate(s, a, n_dim) == pytest.approx(
        fd, rel=1e-4, abs=max(1e-6, fd_noise))


class TestBarrierParams:
    def test_side_condition_enforced(self):
        BarrierParams(K=1.0, a=1.0, r=1.0, rho0=2.0, rho1=0.0)
        with pytest.raises(InvalidParameterError):
            BarrierParams(K=1.0, a=0.5, r=1.0, rho0=2.0, rho1=0.0)
        with pytest.raises(InvalidParameterError):
            BarrierParams(K=-1.0, a=1.0, r=1.0, rho0=1.0, rho1=0.0)

    def test_value_decreasing(self):
        b = BarrierParams(K=3.0, a=1.0, r=1.0, rho0=1.0, rho1=0.5)
        s = np.linspace(0.5, 6.0, 20)
        assert np.all(np.diff(b.value(s)) < 0.0)
        assert b.value(0.0) == 3.0


class TestVerifyBarrier:
    def test_point_mass_background_scalar_identity(self):
        """All particles at rest: the convolution is exactly rho0 |v|."""
        ens = Ensemble(np.zeros((500, 3)), rho0=1.0)
        a = barrier_coefficient(1.0, 0.0, 1.0, 3)
        grid = np.linspace(1.1, 9.0, 40)
        report = verify_barrier_inequality(ens, a, K=1.0, r=1.0, grid=grid)
        assert report.passed
        expected = laplacian_rate(grid, a, 3) - 1.0 * grid
        assert np.allclose(report.margins, expected, atol=1e-12)

    def test_below_threshold_coefficient_fails(self):
        # the deficit window sits just outside r, so resolve that region
        ens = Ensemble(np.zeros((500, 3)), rho0=1.0)
        a_min = barrier_coefficient(1.0, 0.0, 1.0, 3)
        report = verify_barrier_inequality(ens, 0.95 * a_min, K=1.0, r=1.0,
                                           grid=np.linspace(1.005, 9.0, 400))
        assert not report.passed
        assert report.worst_margin < 0.0
        assert report.witness_speed < 1.1

    def test_maxwellian_background_passes_at_recipe_coefficient(self):
        rng = np.random.default_rng(8)
        ens = Ensemble(rng.standard_normal((20_000, 3)), rho0=1.0)
        rho1 = first_speed_moment(ens)
        a = barrier_coefficient(1.0, rho1, 1.0, 3)
        report = verify_barrier_inequality(ens, a, K=1.0, r=1.0)
        assert report.passed, report.to_dict()

    def test_grid_inside_radius_rejected(self):
        ens = Ensemble(np.zeros((10, 3)), rho0=1.0)
        with pytest.raises(InvalidParameterError):
            verify_barrier_inequality(ens, 2.0, K=1.0, r=1.0,
                                      grid=np.array([0.5, 2.0]))


def test_barrier_rate_recipe():
    assert barrier_rate(2.0, 1.0, 0.8, 3) == pytest.approx(9.0 + 1.8)
    # decay budget grows with every ingredient
    assert barrier_rate(2.1, 1.0, 0.8, 3) > barrier_rate(2.0, 1.0, 0.8, 3)
    assert barrier_rate(2.0, 1.2, 0.8, 3) > barrier_rate(2.0, 1.0, 0.8, 3)


# ---------------------------------------------------------------------------
# pointwise lower bound

class TestLowerBound:
    def _maxwellian_hist(self, n=400_000, seed=3):
        rng = np.random.default_rng(seed)
        vel = rng.standard_normal((n, 3))
        return SpeedHistogram.from_velocities(vel, 1.0, 1.0)

    def test_calibration_contract(self):
        hist = self._maxwellian_hist()
        K, c0, v0, r0 = calibrate_lower_bound(hist, a=1.0)
        assert r0 == hist.thermal_speed
        assert K == pytest.approx(c0 * np.exp(-v0**1.5))
        dens = hist.density
        resolved = hist.rel_err < 0.2
        assert c0 <= dens[resolved].max()
        assert c0 > 0.0

    def test_maxwellian_passes_with_generous_stretch(self):
        # floor exp(-2a s^1.5) with a = 2 decays much faster than exp(-s^2/2)
        # over the resolved window, so the calibrated bound holds
        hist = self._maxwellian_hist()
        K, *_ = calibrate_lower_bound(hist, a=2.0)
        report = verify_lower_bound(hist, K, a=2.0)
        assert report.status == "pass"
        assert report.passed
        assert report.n_checked > 0

    def test_oversized_prefactor_fails_with_witness(self):
        hist = self._maxwellian_hist()
        report = verify_lower_bound(hist, K=1e6, a=0.1)
        assert report.status == "fail"
        assert not report.passed
        assert report.worst_margin < 0.0
        assert np.isfinite(report.witness_speed)

    def test_unresolved_histogram_is_inconclusive(self):
        hist = SpeedHistogram(edges=np.linspace(0.0, 2.0, 9), n_dim=3,
                              rho0=1.0, thermal_speed=1.0,
                              counts=np.full(8, 9))       # rel err 1/3
        report = verify_lower_bound(hist, K=1.0, a=1.0)
        assert report.status == "inconclusive"
        assert report.n_checked == 0

    def test_invalid_parameters(self):
        hist = self._maxwellian_hist(n=1000)
        with pytest.raises(InvalidParameterError):
            verify_lower_bound(hist, K=0.0, a=1.0)
        with pytest.raises(InvalidParameterError):
            verify_lower_bound(hist, K=1.0, a=-1.0)


def test_first_speed_moment():
    vel = np.array([[3.0, 0.0, 0.0], [0.0, 4.0, 0.0]])
    ens = Ensemble(vel, rho0=2.0)
    assert first_speed_moment(ens) == pytest.approx(2.0 * 3.5)
