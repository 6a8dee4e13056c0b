"""Stochastic particle evolution for a heated inelastic hard-sphere gas.

The velocity distribution is represented by ``n_particles`` equally
weighted samples carrying total mass ``rho0``.  Each time step applies,
in this order (first-order operator splitting):

  1. heat-bath diffusion: independent Gaussian kicks of variance
     ``2 * mu * dt`` per velocity component;
  2. binary collisions: each unordered pair {i, j} collides at rate
     ``(rho0 / n_particles) * R(|v_i - v_j|)`` where R(s) = s for the
     hard-sphere kernel, or ``floor + min(s, cap)`` for the bounded
     variant.  Realized by majorant rejection: a Poisson number of
     candidate pairs is drawn against an upper bound on R, each candidate
     accepted with probability R / R_bound, and accepted pairs scatter
     with the angular law from :mod:`gkin.cross_section`.

The relative-speed majorant starts at six times the thermal relative
speed, is raised 1.5x (and the event kept, flagged) whenever a candidate
exceeds it, and is re-estimated only at observable-output ticks, so the
candidate intensity within an interval is fixed.

All randomness flows from one 64-bit master seed through spawned child
streams (initialization / dynamics / observable subsampling), giving
bitwise-reproducible single-threaded runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt
from typing import Optional

import numpy as np

from . import observables
from ._collide import (N_STATS, RATE_HARD_SPHERE, RATE_TRUNCATED,
                       STAT_ACCEPTED, STAT_ENERGY_LOSS, STAT_MAX_SPEED,
                       STAT_VIOLATIONS, STAT_WORST_SPEED, process_candidates)
from .cross_section import AngularKernel
from .errors import InvalidParameterError, NumericalError
from .kinematics import CollisionParams

MAJORANT_INIT_FACTOR = 6.0      # initial bound = 6x rms relative speed
MAJORANT_RAISE_FACTOR = 1.5     # growth on a flagged violation
TARGET_COLL_PER_STEP = 0.05     # auto-dt aims here; hard startup cap is 0.5


# ---------------------------------------------------------------------------
# ensemble and configuration types

@dataclass
class Ensemble:
    """Equal-weight particle representation of the velocity distribution."""

    velocities: np.ndarray              # (n_particles, dimension) float64
    rho0: float = 1.0
    time: float = 0.0

    def __post_init__(self):
        self.velocities = np.ascontiguousarray(self.velocities, dtype=float)
        if self.velocities.ndim != 2:
            raise InvalidParameterError("velocities must be a 2-d array")
        if self.n_particles < 2:
            raise InvalidParameterError("need at least 2 particles")
        if self.dimension < 2:
            raise InvalidParameterError("dimension must be >= 2")
        if self.rho0 <= 0:
            raise InvalidParameterError("rho0 must be positive")

    @property
    def n_particles(self) -> int:
        return self.velocities.shape[0]

    @property
    def dimension(self) -> int:
        return self.velocities.shape[1]

    @property
    def particle_weight(self) -> float:
        """Mass carried by each sample: rho0 / n_particles."""
        return self.rho0 / self.n_particles

    def copy(self) -> "Ensemble":
        return Ensemble(self.velocities.copy(), self.rho0, self.time)


@dataclass(frozen=True)
class KernelSpec:
    """Collision rate kernel R(s) as a function of relative speed s.

    variant 'hard_sphere': R(s) = s (unbounded).
    variant 'truncated':   R(s) = floor + min(s, cap), bounded by floor+cap.
    variant 'none':        collisions disabled (diffusion-only runs).
    """

    variant: str = "hard_sphere"
    floor: float = 0.0
    cap: float = 20.0

    def __post_init__(self):
        if self.variant not in ("hard_sphere", "truncated", "none"):
            raise InvalidParameterError(
                f"unknown kernel variant {self.variant!r}")
        if self.variant == "truncated":
            if self.floor < 0:
                raise InvalidParameterError("rate floor must be >= 0")
            if self.cap <= 0:
                raise InvalidParameterError("rate cap must be > 0")

    def rate(self, speed):
        """Vectorized R(s)."""
        s = np.asarray(speed, dtype=float)
        if self.variant == "hard_sphere":
            out = s.copy()
        elif self.variant == "truncated":
            out = self.floor + np.minimum(s, self.cap)
        else:
            out = np.zeros_like(s)
        return out if out.ndim else float(out)

    def rate_bound(self, speed_bound: float) -> float:
        """Upper bound on R over relative speeds up to speed_bound."""
        return float(self.rate(speed_bound))


@dataclass(frozen=True)
class InitSpec:
    """Initial velocity distribution.

    kinds: maxwellian (isotropic Gaussian, per-component variance
    ``temperature``), uniform_ball (uniform in the ball of ``radius``),
    two_delta (half the particles at ``point_a``, half at ``point_b``),
    pareto_tail (isotropic with speed ~ scale * U^(-1/tail_index); survival
    exponent tail_index, so moments of order >= tail_index diverge).
    """

    kind: str = "maxwellian"
    temperature: float = 1.0
    radius: float = 1.0
    point_a: tuple = (1.0, 0.0, 0.0)
    point_b: tuple = (-1.0, 0.0, 0.0)
    tail_index: float = 4.5
    scale: float = 1.0
    center: bool = True     # remove the empirical mean (zero total momentum)

    def __post_init__(self):
        if self.kind not in ("maxwellian", "uniform_ball", "two_delta",
                             "pareto_tail"):
            raise InvalidParameterError(f"unknown init kind {self.kind!r}")
        if self.kind == "maxwellian" and self.temperature <= 0:
            raise InvalidParameterError("temperature must be positive")
        if self.kind == "uniform_ball" and self.radius <= 0:
            raise InvalidParameterError("radius must be positive")
        if self.kind == "pareto_tail":
            if self.tail_index <= 1:
                raise InvalidParameterError("tail_index must exceed 1")
            if self.scale <= 0:
                raise InvalidParameterError("scale must be positive")


@dataclass(frozen=True)
class SimConfig:
    """Full run description; everything needed to reproduce a trajectory."""

    dimension: int = 3
    alpha: float = 0.5
    mu: float = 1.0
    rho0: float = 1.0
    n_particles: int = 100_000
    dt: Optional[float] = None          # None -> auto from collision rate
    t_end: float = 10.0
    seed: int = 1
    kernel: KernelSpec = field(default_factory=KernelSpec)
    init: InitSpec = field(default_factory=InitSpec)
    output_interval: float = 0.25
    d3_pairs: int = 100_000             # pair subsample for D3 estimates
    track_entropy: bool = True

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise InvalidParameterError(
                f"alpha must lie in (0,1], got {self.alpha}")
        if self.mu < 0:
            raise InvalidParameterError("mu must be >= 0")
        if self.rho0 <= 0:
            raise InvalidParameterError("rho0 must be positive")
        if self.n_particles < 2:
            raise InvalidParameterError("n_particles must be >= 2")
        if self.dimension < 2:
            raise InvalidParameterError("dimension must be >= 2")
        if self.dt is not None and self.dt <= 0:
            raise InvalidParameterError("dt must be positive")
        if self.t_end < 0:
            raise InvalidParameterError("t_end must be >= 0")
        if not (0 <= self.seed < 2**64):
            raise InvalidParameterError("seed must be a 64-bit unsigned int")
        if self.output_interval <= 0:
            raise InvalidParameterError("output_interval must be positive")
        if self.d3_pairs < 10_000:
            raise InvalidParameterError("d3_pairs must be >= 10000")


@dataclass
class CollisionStats:
    """Bookkeeping for one collision substep."""

    candidates: int = 0
    accepted: int = 0
    majorant_violations: int = 0
    max_rel_speed: float = 0.0
    energy_change: float = 0.0          # per-event formula sum, unweighted
    majorant: float = 0.0               # relative-speed bound in force


# ---------------------------------------------------------------------------
# initial data

def init_ensemble(spec: InitSpec, n_particles: int, dimension: int,
                  rho0: float, rng: np.random.Generator) -> Ensemble:
    """Draw an initial ensemble with the requested distribution.

    Unless ``spec.center`` is false, the empirical mean is subtracted so the
    total momentum starts at exactly zero.
    """
    if n_particles < 2:
        raise InvalidParameterError("n_particles must be >= 2")
    n, d = n_particles, dimension
    if spec.kind == "maxwellian":
        vel = sqrt(spec.temperature) * rng.standard_normal((n, d))
    elif spec.kind == "uniform_ball":
        direction = rng.standard_normal((n, d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = spec.radius * rng.random(n) ** (1.0 / d)
        vel = radius[:, None] * direction
    elif spec.kind == "two_delta":
        if n % 2:
            raise InvalidParameterError(
                "two_delta init needs an even particle count")
        a = np.asarray(spec.point_a, dtype=float)
        b = np.asarray(spec.point_b, dtype=float)
        if a.shape != (d,) or b.shape != (d,):
            raise InvalidParameterError(
                f"two_delta points must have dimension {d}")
        vel = np.empty((n, d))
        vel[: n // 2] = a
        vel[n // 2:] = b
    else:   # pareto_tail
        direction = rng.standard_normal((n, d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        speed = spec.scale * rng.random(n) ** (-1.0 / spec.tail_index)
        vel = speed[:, None] * direction
    if spec.center:
        vel -= vel.mean(axis=0)
    return Ensemble(vel, rho0=rho0, time=0.0)


# ---------------------------------------------------------------------------
# single-step operations (copying public API)

def diffusion_step(ens: Ensemble, mu: float, dt: float,
                   rng: np.random.Generator) -> Ensemble:
    """Heat-bath kick: add N(0, 2*mu*dt) to every velocity component."""
    if dt < 0:
        raise InvalidParameterError("dt must be >= 0")
    out = ens.copy()
    if mu > 0 and dt > 0:
        out.velocities += sqrt(2.0 * mu * dt) * \
            rng.standard_normal(out.velocities.shape)
    out.time = ens.time + dt
    return out


def collision_step(ens: Ensemble, params: CollisionParams, kernel: KernelSpec,
                   dt: float, rng: np.random.Generator,
                   majorant: Optional[float] = None):
    """One collision substep on a copy; returns (ensemble, CollisionStats)."""
    out = ens.copy()
    table = AngularKernel(ens.dimension).inverse_table()
    if majorant is None:
        majorant = MAJORANT_INIT_FACTOR * _rms_relative_speed(out.velocities)
    stats, _ = _collide_in_place(out.velocities, out.rho0, params, kernel,
                                 dt, majorant, table, rng)
    out.time = ens.time + dt
    return out, stats


def _rms_relative_speed(vel: np.ndarray) -> float:
    """sqrt(E|v_i - v_j|^2) over independent pairs = sqrt(2 Var-total)."""
    centered = vel - vel.mean(axis=0)
    msq = float(np.mean(np.sum(centered * centered, axis=1)))
    return sqrt(max(2.0 * msq, 1e-300))


def _collide_in_place(vel, rho0, params, kernel, dt, majorant, inv_table, rng):
    """Shared collision core; mutates vel, returns (stats, new_majorant)."""
    n_p = vel.shape[0]
    n_dim = vel.shape[1]
    r_bound = kernel.rate_bound(majorant)
    stats = CollisionStats(majorant=majorant)
    if kernel.variant == "none" or dt == 0.0 or r_bound <= 0.0:
        return stats, majorant
    lam = 0.5 * (n_p - 1) * rho0 * r_bound * dt
    n_cand = int(rng.poisson(lam))
    stats.candidates = n_cand
    if n_cand == 0:
        return stats, majorant

    pick_a = rng.random(n_cand)
    pick_b = rng.random(n_cand)
    u_accept = rng.random(n_cand)
    u_angle = rng.random(n_cand)
    normals = rng.standard_normal((n_cand, n_dim))

    out = np.zeros(N_STATS)
    variant = RATE_HARD_SPHERE if kernel.variant == "hard_sphere" \
        else RATE_TRUNCATED
    loss_coeff = 0.25 * (1.0 - params.alpha**2)
    process_candidates(vel, pick_a, pick_b, u_accept, u_angle, normals,
                       inv_table, params.beta, loss_coeff, variant,
                       kernel.floor, kernel.cap, r_bound,
                       np.empty(n_dim), np.empty(n_dim), out)

    stats.accepted = int(out[STAT_ACCEPTED])
    stats.majorant_violations = int(out[STAT_VIOLATIONS])
    stats.max_rel_speed = float(out[STAT_MAX_SPEED])
    stats.energy_change = float(out[STAT_ENERGY_LOSS])
    new_majorant = majorant
    if stats.majorant_violations:
        new_majorant = max(majorant,
                           MAJORANT_RAISE_FACTOR * float(out[STAT_WORST_SPEED]))
    return stats, new_majorant


# ---------------------------------------------------------------------------
# full simulation

@dataclass
class RunResult:
    series: "observables.ObservableSeries"
    ensemble: Ensemble
    config: SimConfig
    dt: float
    total_candidates: int
    total_collisions: int
    total_violations: int


class Simulator:
    """Steppable simulation state.

    ``Simulator(cfg)`` builds the initial ensemble and records the t=0
    observable row; ``advance_to(t)`` steps forward, recording a row every
    ``cfg.output_interval`` of simulated time (the majorant is re-estimated
    at those ticks).  ``result()`` packages the series recorded so far.
    ``tick_callback`` (if set) is invoked as ``cb(sim)`` after each
    recorded row — used for online steady-state detection and histogram
    accumulation without storing full snapshots.
    """

    def __init__(self, cfg: SimConfig, ensemble: Optional[Ensemble] = None,
                 tick_callback=None):
        self.cfg = cfg
        self.params = CollisionParams(cfg.alpha, cfg.dimension)
        self.tick_callback = tick_callback

        seq = np.random.SeedSequence(cfg.seed)
        init_ss, engine_ss, obs_ss = seq.spawn(3)
        rng_init = np.random.Generator(np.random.PCG64(init_ss))
        self.rng_engine = np.random.Generator(np.random.PCG64(engine_ss))
        self.rng_obs = np.random.Generator(np.random.PCG64(obs_ss))

        if ensemble is None:
            ensemble = init_ensemble(cfg.init, cfg.n_particles,
                                     cfg.dimension, cfg.rho0, rng_init)
        else:
            if (ensemble.n_particles != cfg.n_particles
                    or ensemble.dimension != cfg.dimension):
                raise InvalidParameterError(
                    "supplied ensemble does not match the configuration")
            ensemble = ensemble.copy()      # never mutate the caller's state
        self.ensemble = ensemble
        self.inv_table = AngularKernel(cfg.dimension).inverse_table()

        # expected-collision-rate estimate from an initial pair subsample
        rate_est = self._mean_pair_rate()
        self.dt = cfg.dt if cfg.dt is not None else (
            TARGET_COLL_PER_STEP / max(cfg.rho0 * rate_est, 1e-12))
        self.dt = min(self.dt, cfg.output_interval)
        expected = cfg.rho0 * rate_est * self.dt
        if expected >= 0.5:
            raise InvalidParameterError(
                f"dt={self.dt:g} gives {expected:.2f} expected collisions "
                "per particle per step (limit 0.5); reduce dt")
        self.majorant = MAJORANT_INIT_FACTOR * \
            _rms_relative_speed(self.ensemble.velocities)

        self.out_every = max(1, round(cfg.output_interval / self.dt))
        self.step_count = 0
        self.total_candidates = 0
        self.total_collisions = 0
        self.total_violations = 0
        self._interval_candidates = 0
        self._interval_accepted = 0
        self._interval_max_speed = 0.0
        # cumulative energy ledgers (mass-weighted)
        self.energy_injected = 0.0
        self.energy_dissipated = 0.0

        self.series = observables.ObservableSeries(dimension=cfg.dimension)
        self._record()

    # -- helpers ---------------------------------------------------------

    def _mean_pair_rate(self) -> float:
        vel = self.ensemble.velocities
        n = vel.shape[0]
        m = min(4 * 4096, n * (n - 1) // 2)
        rng = np.random.default_rng(0x5EED)     # estimate only; not dynamics
        i = rng.integers(0, n, m)
        j = rng.integers(0, n - 1, m)
        j += (j >= i)
        speeds = np.linalg.norm(vel[i] - vel[j], axis=1)
        rate = self.cfg.kernel.rate(speeds)
        return float(np.mean(rate)) if np.ndim(rate) else float(rate)

    def _record(self):
        ens = self.ensemble
        if not np.all(np.isfinite(ens.velocities)):
            raise NumericalError(
                f"non-finite velocity at t={ens.time:g}", ensemble=ens.copy())
        cand = self._interval_candidates
        acc = self._interval_accepted
        self.series.append_row(
            ens, rng=self.rng_obs, n_pairs=self.cfg.d3_pairs,
            n_coll=self.total_collisions,
            accept_rate=(acc / cand) if cand else 0.0,
            majorant=self.majorant,
            energy_injected=self.energy_injected,
            energy_dissipated=self.energy_dissipated,
            with_entropy=self.cfg.track_entropy)
        self._interval_candidates = 0
        self._interval_accepted = 0
        # majorant may be re-estimated (and lowered) at tick boundaries only
        proposal = MAJORANT_INIT_FACTOR * _rms_relative_speed(ens.velocities)
        self.majorant = max(proposal, 1.1 * self._interval_max_speed)
        self._interval_max_speed = 0.0
        if self.tick_callback is not None:
            self.tick_callback(self)

    # -- stepping --------------------------------------------------------

    def step(self):
        cfg = self.cfg
        ens = self.ensemble
        vel = ens.velocities

        if cfg.mu > 0:
            before = float(np.einsum("ij,ij->", vel, vel))
            vel += sqrt(2.0 * cfg.mu * self.dt) * \
                self.rng_engine.standard_normal(vel.shape)
            after = float(np.einsum("ij,ij->", vel, vel))
            self.energy_injected += ens.particle_weight * (after - before)

        stats, self.majorant = _collide_in_place(
            vel, ens.rho0, self.params, cfg.kernel, self.dt, self.majorant,
            self.inv_table, self.rng_engine)
        # stats.energy_change is signed (negative for alpha < 1); the ledger
        # stores dissipation as a positive total
        self.energy_dissipated -= ens.particle_weight * stats.energy_change
        self.total_candidates += stats.candidates
        self.total_collisions += stats.accepted
        self.total_violations += stats.majorant_violations
        self._interval_candidates += stats.candidates
        self._interval_accepted += stats.accepted
        self._interval_max_speed = max(self._interval_max_speed,
                                       stats.max_rel_speed)

        self.step_count += 1
        ens.time += self.dt
        if self.step_count % self.out_every == 0:
            self._record()

    def advance_to(self, t_target: float):
        while self.ensemble.time < t_target - 1e-9:
            self.step()

    def result(self) -> RunResult:
        return RunResult(series=self.series, ensemble=self.ensemble,
                         config=self.cfg, dt=self.dt,
                         total_candidates=self.total_candidates,
                         total_collisions=self.total_collisions,
                         total_violations=self.total_violations)


def run(cfg: SimConfig, ensemble: Optional[Ensemble] = None,
        tick_callback=None) -> RunResult:
    """Simulate from t=0 to cfg.t_end and return the observable series."""
    sim = Simulator(cfg, ensemble=ensemble, tick_callback=tick_callback)
    sim.advance_to(cfg.t_end)
    return sim.result()
