"""Particle engine: initial data, splitting steps, trajectories, ledgers."""

import math

import numpy as np
import pytest

from gkin.cross_section import epsilon_n
from gkin.errors import InvalidParameterError, NumericalError
from gkin.engine import (
    Ensemble,
    InitSpec,
    KernelSpec,
    SimConfig,
    Simulator,
    collision_step,
    diffusion_step,
    init_ensemble,
    run,
)
from gkin.kinematics import CollisionParams
from gkin.observables import kinetic_energy, momentum


def small_cfg(**overrides):
    base = dict(alpha=0.5, mu=1.0, rho0=1.0, n_particles=5_000, t_end=1.0,
                seed=1, d3_pairs=10_000, output_interval=0.25,
                track_entropy=False)
    base.update(overrides)
    return SimConfig(**base)


# ---------------------------------------------------------------------------
# containers

class TestEnsemble:
    def test_particle_weight(self):
        ens = Ensemble(np.zeros((50, 3)), rho0=2.0)
        assert ens.particle_weight == pytest.approx(0.04)
        assert ens.n_particles == 50
        assert ens.dimension == 3

    def test_copy_is_independent(self):
        ens = Ensemble(np.ones((4, 2)), rho0=1.0, time=3.0)
        dup = ens.copy()
        dup.velocities[0, 0] = 99.0
        dup.time = 5.0
        assert ens.velocities[0, 0] == 1.0
        assert ens.time == 3.0

    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            Ensemble(np.zeros(5))               # not (n, d)
        with pytest.raises(InvalidParameterError):
            Ensemble(np.zeros((5, 3)), rho0=0.0)


class TestKernelSpec:
    def test_hard_sphere_rate(self):
        k = KernelSpec("hard_sphere")
        assert k.rate(3.5) == 3.5
        assert k.rate_bound(10.0) == 10.0

    def test_truncated_rate(self):
        k = KernelSpec("truncated", floor=0.5, cap=4.0)
        s = np.array([0.0, 2.0, 10.0])
        assert np.allclose(k.rate(s), [0.5, 2.5, 4.5])
        assert k.rate_bound(100.0) == 4.5

    def test_disabled_kernel(self):
        assert KernelSpec("none").rate(7.0) == 0.0

    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            KernelSpec("soft_sphere")
        with pytest.raises(InvalidParameterError):
            KernelSpec("truncated", floor=-1.0)
        with pytest.raises(InvalidParameterError):
            KernelSpec("truncated", cap=0.0)


# ---------------------------------------------------------------------------
# initial data

class TestInitEnsemble:
    def test_maxwellian_moments(self):
        rng = np.random.default_rng(0)
        ens = init_ensemble(InitSpec("maxwellian", temperature=2.0),
                            100_000, 3, 1.0, rng)
        msq = np.sum(ens.velocities**2, axis=1)
        se = float(np.std(msq, ddof=1)) / math.sqrt(msq.size)
        assert abs(float(np.mean(msq)) - 6.0) < 3.0 * se
        # centered: total momentum is exactly zero
        assert np.allclose(ens.velocities.mean(axis=0), 0.0, atol=1e-14)

    def test_uniform_ball_second_moment(self):
        rng = np.random.default_rng(1)
        radius, n_dim = 2.0, 3
        ens = init_ensemble(InitSpec("uniform_ball", radius=radius,
                                     center=False), 100_000, n_dim, 1.0, rng)
        speeds = np.linalg.norm(ens.velocities, axis=1)
        assert float(speeds.max()) <= radius
        msq = speeds**2
        target = n_dim * radius**2 / (n_dim + 2)
        se = float(np.std(msq, ddof=1)) / math.sqrt(msq.size)
        assert abs(float(np.mean(msq)) - target) < 3.0 * se

    def test_two_delta_exact(self):
        rng = np.random.default_rng(2)
        ens = init_ensemble(InitSpec("two_delta"), 10, 3, 1.0, rng)
        assert np.allclose(ens.velocities[:5], [1.0, 0.0, 0.0])
        assert np.allclose(ens.velocities[5:], [-1.0, 0.0, 0.0])
        assert kinetic_energy(ens) == pytest.approx(1.0)
        with pytest.raises(InvalidParameterError):
            init_ensemble(InitSpec("two_delta"), 11, 3, 1.0, rng)
        with pytest.raises(InvalidParameterError):
            init_ensemble(InitSpec("two_delta", point_a=(1.0, 0.0)), 10, 3,
                          1.0, rng)

    def test_pareto_tail_survival_exponent(self):
        rng = np.random.default_rng(3)
        idx = 4.5
        ens = init_ensemble(InitSpec("pareto_tail", tail_index=idx,
                                     center=False), 500_000, 3, 1.0, rng)
        speeds = np.linalg.norm(ens.velocities, axis=1)
        assert float(speeds.min()) >= 1.0
        # P(|v| > s) = s^-idx for the raw draw
        for s in (2.0, 4.0):
            frac = float(np.mean(speeds > s))
            expect = s ** (-idx)
            se = math.sqrt(expect * (1 - expect) / speeds.size)
            assert abs(frac - expect) < 4.0 * se

    def test_center_flag(self):
        rng = np.random.default_rng(4)
        ens = init_ensemble(InitSpec("maxwellian", center=False),
                            10_000, 3, 1.0, rng)
        assert np.linalg.norm(ens.velocities.mean(axis=0)) > 1e-4

    def test_validation(self):
        rng = np.random.default_rng(0)
        with pytest.raises(InvalidParameterError):
            InitSpec("banana")
        with pytest.raises(InvalidParameterError):
            InitSpec("maxwellian", temperature=0.0)
        with pytest.raises(InvalidParameterError):
            InitSpec("pareto_tail", tail_index=0.5)
        with pytest.raises(InvalidParameterError):
            init_ensemble(InitSpec(), 1, 3, 1.0, rng)


# ---------------------------------------------------------------------------
# split steps

class TestDiffusionStep:
    def test_zero_mu_and_zero_dt_are_identity(self):
        ens = Ensemble(np.arange(12.0).reshape(4, 3), rho0=1.0)
        rng = np.random.default_rng(0)
        out = diffusion_step(ens, mu=0.0, dt=0.5, rng=rng)
        assert np.array_equal(out.velocities, ens.velocities)
        assert out.time == 0.5
        out = diffusion_step(ens, mu=1.0, dt=0.0, rng=rng)
        assert np.array_equal(out.velocities, ens.velocities)

    def test_variance_growth_rate(self):
        """Each component gains variance 2 mu dt."""
        mu, dt = 0.7, 0.3
        ens = Ensemble(np.zeros((200_000, 3)), rho0=1.0)
        out = diffusion_step(ens, mu, dt, np.random.default_rng(5))
        msq = np.sum(out.velocities**2, axis=1)
        se = float(np.std(msq, ddof=1)) / math.sqrt(msq.size)
        assert abs(float(np.mean(msq)) - 3 * 2 * mu * dt) < 3.0 * se

    def test_momentum_drift_variance(self):
        """Total momentum performs a random walk with rate 2 mu rho0^2/N."""
        mu, dt, rho0, n = 0.8, 0.2, 1.3, 500
        reps = 200
        drifts = np.empty(reps)
        for k in range(reps):
            ens = Ensemble(np.zeros((n, 3)), rho0=rho0)
            out = diffusion_step(ens, mu, dt, np.random.default_rng(k))
            drifts[k] = momentum(out)[0]
        measured = float(np.var(drifts, ddof=1))
        expected = 2.0 * mu * dt * rho0**2 / n
        # sample variance of a Gaussian: relative sd sqrt(2/(reps-1))
        assert abs(measured / expected - 1.0) < 4.0 * math.sqrt(2.0 / (reps - 1))

    def test_negative_dt_rejected(self):
        ens = Ensemble(np.zeros((4, 3)))
        with pytest.raises(InvalidParameterError):
            diffusion_step(ens, 1.0, -0.1, np.random.default_rng(0))


class TestCollisionStep:
    def _gas(self, n=20_000, seed=0, temperature=1.0):
        rng = np.random.default_rng(seed)
        return Ensemble(math.sqrt(temperature) * rng.standard_normal((n, 3)),
                        rho0=1.0)

    def test_zero_dt_no_candidates(self):
        ens = self._gas(1000)
        out, stats = collision_step(ens, CollisionParams(0.5), KernelSpec(),
                                    0.0, np.random.default_rng(1))
        assert stats.candidates == 0
        assert np.array_equal(out.velocities, ens.velocities)

    def test_disabled_kernel_is_identity(self):
        ens = self._gas(1000)
        out, stats = collision_step(ens, CollisionParams(0.5),
                                    KernelSpec("none"), 0.5,
                                    np.random.default_rng(1))
        assert stats.accepted == 0
        assert np.array_equal(out.velocities, ens.velocities)

    def test_momentum_conserved_exactly(self):
        ens = self._gas()
        out, stats = collision_step(ens, CollisionParams(0.3), KernelSpec(),
                                    0.05, np.random.default_rng(2))
        assert stats.accepted > 100
        drift = np.abs(out.velocities.sum(axis=0) - ens.velocities.sum(axis=0))
        assert np.all(drift < 1e-10)

    def test_energy_ledger_matches_measured_change(self):
        """The per-event formula sum reproduces the measured energy drop."""
        ens = self._gas()
        out, stats = collision_step(ens, CollisionParams(0.5), KernelSpec(),
                                    0.05, np.random.default_rng(3))
        measured = kinetic_energy(out) - kinetic_energy(ens)
        ledger = ens.particle_weight * stats.energy_change
        assert measured == pytest.approx(ledger, abs=1e-12 * max(
            1.0, kinetic_energy(ens)))
        assert measured < 0.0

    def test_elastic_energy_drift_tiny(self):
        """alpha = 1: relative drift below 1e-10 per 10^4 collisions."""
        ens = self._gas()
        rng = np.random.default_rng(4)
        params = CollisionParams(1.0)
        total = 0
        current = ens
        while total < 20_000:
            current, stats = collision_step(current, params, KernelSpec(),
                                            0.05, rng)
            total += stats.accepted
        drift = abs(kinetic_energy(current) / kinetic_energy(ens) - 1.0)
        assert drift < 1e-10 * (total / 10_000)

    def test_acceptance_bounded_by_candidates(self):
        ens = self._gas(5_000)
        _, stats = collision_step(ens, CollisionParams(0.5), KernelSpec(),
                                  0.1, np.random.default_rng(5))
        assert 0 < stats.accepted <= stats.candidates
        assert stats.majorant > 0.0

    def test_dissipation_rate_against_d3(self):
        """Mean energy-loss rate = (eps_N (1-alpha^2)/4) D3 within 4 sigma."""
        from gkin.observables import dissipation_functional

        alpha = 0.5
        ens = self._gas(50_000, seed=6)
        d3, d3_err = dissipation_functional(ens, 200_000,
                                            np.random.default_rng(0))
        k1 = epsilon_n(3) * (1.0 - alpha**2) / 4.0
        dt = 0.02
        reps = 8
        rates = []
        rng = np.random.default_rng(7)
        for _ in range(reps):
            out, _ = collision_step(ens, CollisionParams(alpha), KernelSpec(),
                                    dt, rng)
            rates.append(-(kinetic_energy(out) - kinetic_energy(ens)) / dt)
        mean_rate = float(np.mean(rates))
        se = float(np.std(rates, ddof=1)) / math.sqrt(reps)
        tol = 4.0 * math.sqrt(se**2 + (k1 * d3_err) ** 2)
        assert abs(mean_rate - k1 * d3) < tol


# ---------------------------------------------------------------------------
# full trajectories

class TestSimulator:
    def test_records_initial_row_and_cadence(self):
        res = run(small_cfg(t_end=1.0, output_interval=0.25))
        t = res.series.t
        assert t[0] == 0.0
        assert len(t) >= 5
        spacing = np.diff(t)
        assert np.allclose(spacing, spacing[0], rtol=1e-6)
        assert res.ensemble.time >= 1.0 - 1e-9

    def test_same_seed_bitwise_reproducible(self):
        a = run(small_cfg(seed=42))
        b = run(small_cfg(seed=42))
        assert np.array_equal(a.ensemble.velocities, b.ensemble.velocities)
        assert a.series.d3 == b.series.d3
        assert a.series.moments[2] == b.series.moments[2]
        assert a.total_collisions == b.total_collisions

    def test_different_seed_differs(self):
        a = run(small_cfg(seed=1))
        b = run(small_cfg(seed=2))
        assert not np.array_equal(a.ensemble.velocities,
                                  b.ensemble.velocities)

    def test_energy_budget_closes(self):
        """E(t) - E(0) equals injected minus dissipated at every tick."""
        res = run(small_cfg(n_particles=10_000, t_end=2.0, seed=9))
        s = res.series
        energy = s.energy
        for k in range(len(s)):
            balance = s.energy_injected[k] - s.energy_dissipated[k]
            assert energy[k] - energy[0] == pytest.approx(
                balance, abs=1e-8 * max(1.0, abs(energy[k])))

    def test_momentum_conserved_without_bath(self):
        res = run(small_cfg(mu=0.0, n_particles=10_000, t_end=1.0))
        p_end = momentum(res.ensemble)
        assert np.all(np.abs(p_end) < 1e-10)

    def test_diffusion_only_heating_rate(self):
        """Without collisions energy grows at exactly 2 N mu rho0."""
        mu, rho0 = 0.5, 2.0
        res = run(small_cfg(mu=mu, rho0=rho0, n_particles=50_000, t_end=2.0,
                            kernel=KernelSpec("none"), seed=12))
        s = res.series
        slope = np.polyfit(s.t, s.energy, 1)[0]
        assert slope == pytest.approx(2 * 3 * mu * rho0, rel=0.02)

    def test_cooling_energy_decreases(self):
        res = run(small_cfg(mu=0.0, n_particles=20_000, t_end=2.0, seed=4))
        energy = res.series.energy
        assert np.all(np.diff(energy) < 0.0)
        assert np.all(res.series.d3_arr > 0.0)

    def test_second_moment_differential_inequality(self):
        """dY2/dt + k1 D3 never exceeds the bath input 2 N mu rho0."""
        cfg = small_cfg(n_particles=40_000, t_end=4.0, seed=8,
                        output_interval=0.2)
        res = run(cfg)
        s = res.series
        k1 = epsilon_n(3) * (1.0 - cfg.alpha**2) / 4.0
        dt = np.diff(s.t)
        lhs = np.diff(s.y(2)) / dt + k1 * 0.5 * (s.d3_arr[1:]
                                                 + s.d3_arr[:-1])
        bound = 2 * 3 * cfg.mu * cfg.rho0
        mean = float(np.mean(lhs))
        se = float(np.std(lhs, ddof=1)) / math.sqrt(lhs.size)
        assert mean <= bound + 4.0 * se

    def test_moment_propagation_bounded_at_steady_state(self):
        res = run(small_cfg(n_particles=20_000, t_end=12.0, seed=3))
        s = res.series
        late = s.t >= 6.0
        for order in (2, 3, 4, 6):
            trace = s.y(order)[late]
            assert np.all(np.isfinite(trace))
            assert float(trace.max()) <= 3.0 * float(np.median(trace))

    def test_moment_appearance_from_heavy_tail(self):
        """A polynomial tail regularizes: the top particle's share of Y6
        collapses once the bath-plus-collision dynamics act."""
        spec = InitSpec("pareto_tail", tail_index=4.5, scale=1.0)
        rng = np.random.default_rng(77)
        ens0 = init_ensemble(spec, 20_000, 3, 1.0, rng)

        def top_share(ens):
            b6 = (1.0 + np.sum(ens.velocities**2, axis=1)) ** 3
            return float(b6.max() / b6.sum())

        share0 = top_share(ens0)
        cfg = small_cfg(n_particles=20_000, t_end=1.0, seed=12, init=spec,
                        output_interval=0.1)
        res = run(cfg, ensemble=ens0)
        y6 = res.series.y(6)
        assert np.all(np.isfinite(y6))
        late = y6[res.series.t >= 0.5]
        changes = np.abs(np.diff(late) / late[:-1])
        assert np.all(changes < 0.3)
        assert top_share(res.ensemble) < share0 / 10.0

    def test_supplied_ensemble_not_mutated(self):
        rng = np.random.default_rng(0)
        ens = Ensemble(rng.standard_normal((5_000, 3)), rho0=1.0)
        snapshot = ens.velocities.copy()
        run(small_cfg(t_end=0.5), ensemble=ens)
        assert np.array_equal(ens.velocities, snapshot)
        assert ens.time == 0.0

    def test_auto_dt_reasonable(self):
        sim = Simulator(small_cfg())
        assert 0.0 < sim.dt <= sim.cfg.output_interval
        # about 0.05 expected collisions per particle per step
        res = run(small_cfg(t_end=1.0))
        per_step = res.total_collisions * 2 / res.config.n_particles \
            / (1.0 / res.dt)
        assert 0.005 < per_step < 0.5

    def test_oversized_dt_rejected_at_startup(self):
        with pytest.raises(InvalidParameterError, match="expected collisions"):
            Simulator(small_cfg(dt=0.5, n_particles=20_000))

    def test_mismatched_ensemble_rejected(self):
        ens = Ensemble(np.zeros((10, 3)))
        with pytest.raises(InvalidParameterError):
            Simulator(small_cfg(n_particles=5_000), ensemble=ens)

    def test_nonfinite_velocity_aborts_with_context(self):
        cfg = small_cfg(n_particles=100, mu=0.0, kernel=KernelSpec("none"),
                        dt=0.25, output_interval=0.25, d3_pairs=10_000)
        sim = Simulator(cfg)
        sim.ensemble.velocities[0, 0] = np.inf
        with pytest.raises(NumericalError) as excinfo:
            sim.step()          # tick boundary triggers the health check
        assert "ensemble" in excinfo.value.context

    def test_config_validation(self):
        with pytest.raises(InvalidParameterError):
            small_cfg(alpha=0.0)
        with pytest.raises(InvalidParameterError):
            small_cfg(alpha=1.2)
        with pytest.raises(InvalidParameterError):
            small_cfg(mu=-1.0)
        with pytest.raises(InvalidParameterError):
            small_cfg(n_particles=1)
        with pytest.raises(InvalidParameterError):
            small_cfg(t_end=-1.0)
        with pytest.raises(InvalidParameterError):
            small_cfg(dt=0.0)
        with pytest.raises(InvalidParameterError):
            small_cfg(output_interval=0.0)
        with pytest.raises(InvalidParameterError):
            small_cfg(d3_pairs=100)
