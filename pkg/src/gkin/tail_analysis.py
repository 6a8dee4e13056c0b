"""Steady-state detection, radial density estimation, and tail verification.

The cooled-and-heated ensemble settles into a steady state whose
high-speed tail is stretched-exponential, exp(-a |v|^(3/2)), rather than
Gaussian.  This module provides the statistical side of that claim:

* ``SpeedHistogram`` turns velocity snapshots into an isotropic density
  estimate with per-bin Poisson errors;
* ``detect_steady`` finds the time after which low-order observables stop
  drifting;
* ``fit_tail`` measures the stretch exponent by grid search over p with a
  linear least-squares fit of log density against |v|^p;
* ``barrier_coefficient`` / ``verify_barrier_inequality`` check the
  supersolution property of the comparison function K exp(-a |v|^(3/2))
  against the measured loss-term convolution;
* ``verify_lower_bound`` checks the resulting pointwise floor
  f >= K exp(-2a |v|^(3/2)) on statistically resolvable bins.

All verification routines return small report objects rather than raising
on physics failures, so callers can render witnesses; genuinely unusable
input (too little data, bad grids) raises instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma as _gamma_fn
from math import pi, sqrt

import numpy as np

from .errors import InvalidParameterError, NumericalError
from .observables import ObservableSeries

DEFAULT_BINS = 128
FIT_MIN_COUNTS = 100
FIT_MIN_BINS = 8
FIT_WINDOW_THERMAL = 2.5
RESOLVED_REL_ERR = 0.20
P_GRID = np.arange(100, 251) / 100.0


def ball_volume(radius, n_dim: int):
    """Volume of the n_dim-ball, vectorized in radius."""
    radius = np.asarray(radius, dtype=float)
    c = pi ** (n_dim / 2.0) / _gamma_fn(n_dim / 2.0 + 1.0)
    out = c * radius**n_dim
    return out if out.ndim else float(out)


@dataclass
class SpeedHistogram:
    """Fixed-edge speed histogram accumulated over ensemble snapshots.

    ``weight`` is mass-per-count, chosen so that the total histogram mass
    (including overflow beyond the last edge) is exactly rho0.  The
    density estimate divides bin mass by the velocity-space shell volume,
    giving an isotropic estimate of the one-particle density f(|v|).
    """

    edges: np.ndarray
    n_dim: int
    rho0: float
    thermal_speed: float
    counts: np.ndarray = field(default=None)
    overflow: int = 0
    total_samples: int = 0

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        if self.edges.ndim != 1 or self.edges.size < 2:
            raise InvalidParameterError("edges must be a 1-d array, size >= 2")
        if np.any(np.diff(self.edges) <= 0) or self.edges[0] < 0:
            raise InvalidParameterError(
                "edges must be nonnegative and strictly increasing")
        if self.rho0 <= 0 or self.thermal_speed <= 0:
            raise InvalidParameterError(
                "rho0 and thermal_speed must be positive")
        if self.counts is None:
            self.counts = np.zeros(self.edges.size - 1, dtype=np.int64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.size != self.edges.size - 1:
                raise InvalidParameterError("counts/edges size mismatch")
            if self.total_samples == 0:
                self.total_samples = int(self.counts.sum()) + self.overflow

    @classmethod
    def from_velocities(cls, velocities, rho0: float, thermal_speed: float,
                        n_bins: int = DEFAULT_BINS, v_max: float = None):
        """Build from one snapshot; edges span [0, v_max] (default: data max)."""
        velocities = np.asarray(velocities, dtype=float)
        speeds = np.linalg.norm(velocities, axis=1)
        if v_max is None:
            v_max = float(speeds.max()) * (1.0 + 1e-12)
        hist = cls(edges=np.linspace(0.0, v_max, n_bins + 1),
                   n_dim=velocities.shape[1], rho0=rho0,
                   thermal_speed=thermal_speed)
        hist.accumulate(velocities)
        return hist

    def accumulate(self, velocities):
        """Add a snapshot; speeds beyond the last edge count as overflow."""
        velocities = np.asarray(velocities, dtype=float)
        if velocities.ndim != 2 or velocities.shape[1] != self.n_dim:
            raise InvalidParameterError(
                f"expected (n, {self.n_dim}) velocities")
        speeds = np.linalg.norm(velocities, axis=1)
        idx = np.searchsorted(self.edges, speeds, side="right") - 1
        inside = idx < self.counts.size
        np.add.at(self.counts, idx[inside], 1)
        self.overflow += int(np.sum(~inside))
        self.total_samples += speeds.size

    # -- derived quantities ----------------------------------------------

    @property
    def weight(self) -> float:
        if self.total_samples == 0:
            raise NumericalError("histogram holds no samples")
        return self.rho0 / self.total_samples

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def edges_thermal(self) -> np.ndarray:
        return self.edges / self.thermal_speed

    @property
    def shell_volumes(self) -> np.ndarray:
        vols = ball_volume(self.edges, self.n_dim)
        return np.diff(vols)

    @property
    def density(self) -> np.ndarray:
        return self.counts * self.weight / self.shell_volumes

    @property
    def density_err(self) -> np.ndarray:
        return np.sqrt(self.counts) * self.weight / self.shell_volumes

    @property
    def rel_err(self) -> np.ndarray:
        out = np.full(self.counts.size, np.inf)
        nz = self.counts > 0
        out[nz] = 1.0 / np.sqrt(self.counts[nz])
        return out

    def mass(self) -> float:
        """Total histogram mass including overflow: always rho0."""
        return (int(self.counts.sum()) + self.overflow) * self.weight


# ---------------------------------------------------------------------------
# steady-state detection

@dataclass
class SteadyDetection:
    """Outcome of drift detection: ``time`` is None while still drifting."""

    time: float
    diagnostic: str

    def __bool__(self):
        return self.time is not None


def detect_steady(series: ObservableSeries, window: float,
                  tol: float = 0.01) -> SteadyDetection:
    """Earliest window boundary after which Y2 and D3 stop drifting.

    Consecutive windows of length ``window`` are compared through their
    means; the state counts as steady from the first window such that
    every later window-to-window relative change of both the bracket
    second moment and the cubic dissipation functional stays below tol.
    """
    if window <= 0 or tol <= 0:
        raise InvalidParameterError("window and tol must be positive")
    times = series.t
    if times.size < 2 or times[-1] - times[0] < 2.0 * window:
        raise InvalidParameterError("series must cover at least two windows")
    y2 = series.y(2)
    d3 = series.d3_arr
    t0 = times[0]
    n_win = int(np.floor((times[-1] - t0) / window))
    means = []
    for k in range(n_win):
        m = (times >= t0 + k * window) & (times < t0 + (k + 1) * window)
        if not np.any(m):
            raise NumericalError("empty observation window; output too sparse")
        means.append((float(y2[m].mean()), float(d3[m].mean())))
    changes = []
    for k in range(1, n_win):
        prev, cur = means[k - 1], means[k]
        changes.append(max(abs(cur[0] - prev[0]) / max(abs(prev[0]), 1e-300),
                           abs(cur[1] - prev[1]) / max(abs(prev[1]), 1e-300)))
    stable = [c < tol for c in changes]
    for k, flag in enumerate(stable):
        if flag and all(stable[k:]):
            return SteadyDetection(
                time=t0 + (k + 1) * window,
                diagnostic=f"stable from window {k + 1}/{n_win - 1}: "
                           f"max change {max(changes[k:]):.2e} < {tol:g}")
    return SteadyDetection(
        time=None,
        diagnostic=f"still drifting after {n_win} windows: last change "
                   f"{changes[-1]:.2e} >= {tol:g}")


# ---------------------------------------------------------------------------
# tail fitting

@dataclass
class TailFit:
    """Stretched-exponential fit log f = log c - a |v|^p over a speed window."""

    exponent: float
    scale: float
    prefactor: float
    window: tuple
    residual: float
    residual_p15: float
    residual_p20: float
    n_bins: int

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "scale": self.scale,
                "prefactor": self.prefactor,
                "window": [self.window[0], self.window[1]],
                "residual": self.residual,
                "residual_p15": self.residual_p15,
                "residual_p20": self.residual_p20, "n_bins": self.n_bins}


def _tail_window_mask(hist: SpeedHistogram, lo_thermal: float,
                      min_counts: int) -> np.ndarray:
    centers = hist.centers
    eligible = (centers >= lo_thermal * hist.thermal_speed) \
        & (hist.counts >= min_counts)
    if not np.any(eligible):
        return eligible
    last = np.max(np.nonzero(eligible)[0])
    eligible &= np.arange(centers.size) <= last
    return eligible


def fit_tail(hist: SpeedHistogram, lo_thermal: float = FIT_WINDOW_THERMAL,
             min_counts: int = FIT_MIN_COUNTS,
             p_grid: np.ndarray = P_GRID) -> TailFit:
    """Grid-search the stretch exponent on the populated tail window.

    For each candidate exponent p the log density over the window
    [lo_thermal * v_th, last bin with min_counts] is fit linearly against
    (1, |v|^p); the returned fit minimizes the residual 2-norm.  Raises
    when fewer than FIT_MIN_BINS bins qualify.
    """
    mask = _tail_window_mask(hist, lo_thermal, min_counts)
    if int(mask.sum()) < FIT_MIN_BINS:
        raise NumericalError(
            f"tail fit unavailable: only {int(mask.sum())} qualifying bins "
            f"(need >= {FIT_MIN_BINS}) beyond {lo_thermal:g} thermal speeds")
    s = hist.centers[mask]
    logf = np.log(hist.density[mask])

    residuals = np.empty(p_grid.size)
    coeffs = np.empty((p_grid.size, 2))
    for i, p in enumerate(p_grid):
        design = np.column_stack([np.ones_like(s), s**p])
        sol, res, _, _ = np.linalg.lstsq(design, logf, rcond=None)
        coeffs[i] = sol
        residuals[i] = sqrt(float(res[0])) if res.size else 0.0
    best = int(np.argmin(residuals))

    def _res_at(p: float) -> float:
        i = int(np.argmin(np.abs(p_grid - p)))
        return float(residuals[i])

    return TailFit(exponent=float(p_grid[best]),
                   scale=float(-coeffs[best, 1]),
                   prefactor=float(np.exp(coeffs[best, 0])),
                   window=(float(s[0]), float(s[-1])),
                   residual=float(residuals[best]),
                   residual_p15=_res_at(1.5), residual_p20=_res_at(2.0),
                   n_bins=int(mask.sum()))


def maxwellian_density(speed, rho0: float, temperature: float, n_dim: int):
    """Isotropic Gaussian velocity-space density with mass rho0 and given T."""
    speed = np.asarray(speed, dtype=float)
    norm = rho0 / (2.0 * pi * temperature) ** (n_dim / 2.0)
    out = norm * np.exp(-speed**2 / (2.0 * temperature))
    return out if out.ndim else float(out)


def overpopulation_ratio(hist: SpeedHistogram, temperature: float):
    """Per-bin ratio of measured density to the matched Maxwellian.

    Returns (ratio, ratio_err) arrays; a tail that is overpopulated makes
    the ratio increase with speed over the resolvable tail window.
    """
    ref = maxwellian_density(hist.centers, hist.rho0, temperature,
                             hist.n_dim)
    ratio = hist.density / ref
    err = hist.density_err / ref
    return ratio, err


# ---------------------------------------------------------------------------
# barrier functions

@dataclass(frozen=True)
class BarrierParams:
    """Comparison function K exp(-a |v|^(3/2)) outside radius r.

    rho0 and rho1 are the mass and first speed moment of the background
    state the barrier is compared against; the side condition
    (9/4) a^2 >= rho0 keeps the barrier dominant at large speed.
    """

    K: float
    a: float
    r: float
    rho0: float
    rho1: float

    def __post_init__(self):
        if min(self.K, self.a, self.r, self.rho0) <= 0 or self.rho1 < 0:
            raise InvalidParameterError("barrier parameters must be positive")
        if 2.25 * self.a**2 < self.rho0 * (1.0 - 1e-12):
            raise InvalidParameterError(
                f"side condition violated: (9/4)a^2 = {2.25 * self.a ** 2:g}"
                f" < rho0 = {self.rho0:g}")

    def value(self, speed):
        speed = np.asarray(speed, dtype=float)
        out = self.K * np.exp(-self.a * speed**1.5)
        return out if out.ndim else float(out)


def barrier_coefficient(rho0: float, rho1: float, r: float,
                        n_dim: int) -> float:
    """Smallest valid stretch coefficient for the barrier outside radius r.

    Positive root of (9r/4) a^2 - (3(2N-1)/(4 sqrt(r))) a - (rho0 r + rho1),
    raised if necessary to sqrt(4 rho0 / 9) so the side condition holds.
    """
    if rho0 <= 0 or rho1 < 0 or r <= 0:
        raise InvalidParameterError("rho0, r must be positive; rho1 >= 0")
    qa = 2.25 * r
    qb = -0.75 * (2 * n_dim - 1) / sqrt(r)
    qc = -(rho0 * r + rho1)
    root = (-qb + sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa)
    return max(root, sqrt(4.0 * rho0 / 9.0))


def laplacian_rate(speed, a: float, n_dim: int):
    """Laplacian of exp(-a |v|^(3/2)) divided by the function itself."""
    speed = np.asarray(speed, dtype=float)
    out = 2.25 * a * a * speed \
        - 0.75 * a * (2 * n_dim - 1) / np.sqrt(speed)
    return out if out.ndim else float(out)


@dataclass
class BarrierReport:
    """Pointwise supersolution check results on a radial grid."""

    passed: bool
    n_nodes: int
    worst_margin: float
    witness_speed: float
    margins: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "n_nodes": self.n_nodes,
                "worst_margin": self.worst_margin,
                "witness_speed": self.witness_speed}


def verify_barrier_inequality(ensemble, a: float, K: float, r: float,
                              grid=None, z_score: float = 4.0,
                              n_nodes: int = 32) -> BarrierReport:
    """Check Laplacian(h) >= h * (g conv |.|) on a radial grid, h = barrier.

    The convolution against the empirical background g is the exact
    weighted sum over particles; its sampling error enters as a z_score
    standard-error allowance.  Grid nodes must lie strictly beyond r.
    """
    vel = ensemble.velocities
    n_dim = ensemble.dimension
    if grid is None:
        temperature = float(np.mean(np.sum(
            (vel - vel.mean(axis=0)) ** 2, axis=1))) / n_dim
        hi = 10.0 * sqrt(temperature)
        if hi <= r:
            raise InvalidParameterError("grid range collapses: r too large")
        grid = np.linspace(r + (hi - r) / n_nodes, hi, n_nodes)
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= r):
        raise InvalidParameterError("grid nodes must satisfy |v| > r")

    margins = np.empty(grid.size)
    for k, s in enumerate(grid):
        point = np.zeros(n_dim)
        point[0] = s
        dist = np.linalg.norm(vel - point, axis=1)
        conv = ensemble.rho0 * float(dist.mean())
        conv_se = ensemble.rho0 * float(dist.std(ddof=1)) / sqrt(dist.size) \
            if dist.size > 1 else 0.0
        margins[k] = laplacian_rate(s, a, n_dim) - conv + z_score * conv_se
    worst = int(np.argmin(margins))
    return BarrierReport(passed=bool(np.all(margins >= 0.0)),
                         n_nodes=grid.size,
                         worst_margin=float(margins[worst]),
                         witness_speed=float(grid[worst]),
                         margins=margins)


def barrier_rate(a: float, rho0: float, rho1: float, n_dim: int) -> float:
    """Decay-rate budget b for the time-dependent floor exp(-b t) * barrier."""
    return 1.5 * n_dim * a + rho0 + rho1


# ---------------------------------------------------------------------------
# pointwise lower bound

@dataclass
class LowerBoundReport:
    """Result of the pointwise floor check; status in pass/fail/inconclusive."""

    status: str
    n_checked: int
    worst_margin: float
    witness_speed: float

    @property
    def passed(self):
        return self.status == "pass"

    def to_dict(self) -> dict:
        return {"status": self.status, "n_checked": self.n_checked,
                "worst_margin": self.worst_margin,
                "witness_speed": self.witness_speed}


def calibrate_lower_bound(hist: SpeedHistogram, a: float,
                          r0: float = None):
    """Floor prefactor from the densest region of the histogram.

    Finds the densest bin (center v0), takes c0 as the smallest resolvable
    density within radius r0 of it (default one thermal speed), and returns
    (K, c0, v0, r0) with K = c0 * exp(-a v0^(3/2)).
    """
    if r0 is None:
        r0 = hist.thermal_speed
    density = hist.density
    resolved = hist.rel_err < RESOLVED_REL_ERR
    if not np.any(resolved):
        raise NumericalError("no statistically resolved bins to calibrate on")
    centers = hist.centers
    dens_resolved = np.where(resolved, density, -np.inf)
    i0 = int(np.argmax(dens_resolved))
    v0 = float(centers[i0])
    near = resolved & (np.abs(centers - v0) <= r0)
    c0 = float(density[near].min())
    return c0 * float(np.exp(-a * v0**1.5)), c0, v0, float(r0)


def verify_lower_bound(hist: SpeedHistogram, K: float,
                       a: float) -> LowerBoundReport:
    """Check density >= K exp(-2a |v|^(3/2)) on resolvable bins.

    Bins with Poisson relative error above RESOLVED_REL_ERR are skipped;
    if none qualify the report is inconclusive.
    """
    if K <= 0 or a <= 0:
        raise InvalidParameterError("K and a must be positive")
    resolved = hist.rel_err < RESOLVED_REL_ERR
    if not np.any(resolved):
        return LowerBoundReport("inconclusive", 0, np.nan, np.nan)
    s = hist.centers[resolved]
    floor = K * np.exp(-2.0 * a * s**1.5)
    margins = hist.density[resolved] - floor
    worst = int(np.argmin(margins))
    status = "pass" if np.all(margins >= 0.0) else "fail"
    return LowerBoundReport(status, int(resolved.sum()),
                            float(margins[worst]), float(s[worst]))


def first_speed_moment(ensemble) -> float:
    """rho1 = mass-weighted mean speed of an ensemble."""
    speeds = np.linalg.norm(ensemble.velocities, axis=1)
    return ensemble.rho0 * float(speeds.mean())
