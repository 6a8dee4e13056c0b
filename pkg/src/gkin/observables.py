"""Moment, dissipation, and entropy diagnostics on particle ensembles.

Moments are tracked in the bracket weight <v> = sqrt(1 + |v|^2):

    Y_s = (rho0 / n) * sum_i <v_i>^s,

so Y_0 is the total mass and Y_2 = rho0 + kinetic energy.  The
dissipation statistic

    D3 = rho0^2 (1 - 1/n) * mean |v_i - v_j|^3   (ordered pairs, i != j)

is the empirical-measure value of the double integral of f f_* |v-v_*|^3,
estimated from a uniform pair subsample; the (1 - 1/n) factor accounts
for the excluded diagonal and makes the collision energy balance exact at
finite particle number.

The entropy estimate is histogram-based (Freedman-Diaconis widths per
axis, window clipped to +-8 thermal speeds, sparse bin counting) and is a
diagnostic, not the exact H-functional; dimensions above three fall back
to a radial estimator that assumes isotropy.

Standard errors on mean-type statistics use the jackknife, which for a
plain mean reduces to std(x, ddof=1)/sqrt(n); that closed form is used
directly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import gamma as _gamma_fn
from math import log, pi, sqrt

import numpy as np

from .errors import InvalidParameterError, NumericalError

#: time-series CSV schema, fixed column order
CSV_COLUMNS = ["t", "Y0", "px", "py", "pz", "Y2", "Y3", "Y4", "Y6",
               "D3", "D3_err", "entropy", "n_coll", "accept_rate", "majorant"]

#: bracket-moment orders tracked by default
MOMENT_ORDERS = (0, 1, 2, 3, 4, 6)

ENTROPY_CLIP_THERMAL = 8.0      # histogram window half-width in thermal speeds


def _mean_and_se(x: np.ndarray):
    n = x.size
    m = float(np.mean(x))
    if n < 2:
        return m, float("inf")
    return m, float(np.std(x, ddof=1) / sqrt(n))


def moment(ens, s: float):
    """Bracket moment Y_s with jackknife standard error."""
    if s < 0:
        raise InvalidParameterError("moment order must be >= 0")
    if s == 0:
        return ens.rho0, 0.0
    msq = np.sum(ens.velocities * ens.velocities, axis=1)
    x = (1.0 + msq) ** (s / 2.0)
    m, se = _mean_and_se(x)
    return ens.rho0 * m, ens.rho0 * se


def speed_moment(ens, s: float):
    """Plain speed moment: integral of f |v|^s, with standard error."""
    if s < 0:
        raise InvalidParameterError("moment order must be >= 0")
    speeds = np.linalg.norm(ens.velocities, axis=1)
    m, se = _mean_and_se(speeds ** s)
    return ens.rho0 * m, ens.rho0 * se


def momentum(ens) -> np.ndarray:
    """Total momentum vector (mass-weighted)."""
    return ens.particle_weight * ens.velocities.sum(axis=0)


def kinetic_energy(ens) -> float:
    """Total kinetic energy: integral of f |v|^2."""
    return ens.particle_weight * float(
        np.sum(ens.velocities * ens.velocities))


def temperature(ens) -> float:
    """Variance-based temperature: central <|v|^2> per dimension."""
    centered = ens.velocities - ens.velocities.mean(axis=0)
    return float(np.mean(np.sum(centered * centered, axis=1))) / ens.dimension


def dissipation_functional(ens, n_pairs: int, rng: np.random.Generator):
    """Estimate D3 from a uniform subsample of ordered particle pairs."""
    if ens.n_particles < 2:
        raise InvalidParameterError("need at least 2 particles")
    if n_pairs < 10_000:
        raise InvalidParameterError("n_pairs must be >= 10000")
    n = ens.n_particles
    i = rng.integers(0, n, n_pairs)
    j = rng.integers(0, n - 1, n_pairs)
    j += (j >= i)
    diff = ens.velocities[i] - ens.velocities[j]
    x = np.sum(diff * diff, axis=1) ** 1.5
    factor = ens.rho0**2 * (1.0 - 1.0 / n)
    m, se = _mean_and_se(x)
    return factor * m, factor * se


# ---------------------------------------------------------------------------
# entropy diagnostic

def _ball_volume(n_dim: int, radius) -> float:
    return pi ** (n_dim / 2.0) / _gamma_fn(n_dim / 2.0 + 1.0) * radius**n_dim


def _fd_width(x: np.ndarray) -> float:
    q75, q25 = np.percentile(x, [75.0, 25.0])
    width = 2.0 * (q75 - q25) * x.size ** (-1.0 / 3.0)
    if width <= 0.0:
        # degenerate axis (e.g. point masses); fall back to std-based width
        width = 3.5 * float(np.std(x)) * x.size ** (-1.0 / 3.0)
    return width


def entropy_estimate(ens, clip_thermal: float = ENTROPY_CLIP_THERMAL) -> float:
    """Histogram estimate of the integral of f log f.

    Decreases when the distribution spreads; shifts by -N log(eta) rho0
    under the rescaling v -> eta v (up to binning error).
    """
    vel = ens.velocities
    if vel.shape[0] == 0:
        raise InvalidParameterError("empty ensemble")
    if ens.dimension > 3:
        return _entropy_radial(ens, clip_thermal)
    v_th = sqrt(max(temperature(ens), 1e-300))
    center = vel.mean(axis=0)
    lo = center - clip_thermal * v_th
    hi = center + clip_thermal * v_th

    widths = np.empty(ens.dimension)
    sizes = np.empty(ens.dimension, dtype=np.int64)
    for d in range(ens.dimension):
        w = _fd_width(vel[:, d])
        if w <= 0.0:
            raise NumericalError("entropy undefined: degenerate ensemble")
        sizes[d] = max(1, int(np.ceil((hi[d] - lo[d]) / w)))
        widths[d] = (hi[d] - lo[d]) / sizes[d]

    idx = np.floor((vel - lo) / widths).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < sizes), axis=1)
    idx = idx[inside]
    # sparse flat keys; a dense array over all bins would not fit in memory
    key = idx[:, 0]
    for d in range(1, ens.dimension):
        key = key * sizes[d] + idx[:, d]
    _, counts = np.unique(key, return_counts=True)

    mass = counts * ens.particle_weight
    vol = float(np.prod(widths))
    return float(np.sum(mass * np.log(mass))) - float(mass.sum()) * log(vol)


def _entropy_radial(ens, clip_thermal: float) -> float:
    """Isotropic fallback: 1-d histogram in |v| with shell volumes."""
    speeds = np.linalg.norm(ens.velocities - ens.velocities.mean(axis=0),
                            axis=1)
    v_th = sqrt(max(temperature(ens), 1e-300))
    w = _fd_width(speeds)
    if w <= 0.0:
        raise NumericalError("entropy undefined: degenerate ensemble")
    hi = clip_thermal * v_th
    n_bins = max(1, int(np.ceil(hi / w)))
    counts, edges = np.histogram(speeds, bins=n_bins, range=(0.0, hi))
    shells = _ball_volume(ens.dimension, edges[1:]) \
        - _ball_volume(ens.dimension, edges[:-1])
    occupied = counts > 0
    mass = counts[occupied] * ens.particle_weight
    dens = mass / shells[occupied]
    return float(np.sum(mass * np.log(dens)))


# ---------------------------------------------------------------------------
# time series

@dataclass
class ObservableSeries:
    """Row-per-output-tick record of a simulation trajectory.

    ``n_coll`` is the cumulative accepted-collision count; ``accept_rate``
    is acceptances/candidates over the preceding interval; ``majorant`` is
    the relative-speed bound in force.  ``energy_injected`` and
    ``energy_dissipated`` are cumulative ledgers (measured diffusion
    energy and per-event formula losses) used by the budget-closure
    checks; they are not part of the CSV schema.
    """

    dimension: int = 3
    times: list = field(default_factory=list)
    moments: dict = field(default_factory=lambda: {s: [] for s in
                                                   MOMENT_ORDERS})
    moment_errs: dict = field(default_factory=lambda: {s: [] for s in
                                                       MOMENT_ORDERS})
    momentum: list = field(default_factory=list)
    d3: list = field(default_factory=list)
    d3_err: list = field(default_factory=list)
    entropy: list = field(default_factory=list)
    n_coll: list = field(default_factory=list)
    accept_rate: list = field(default_factory=list)
    majorant: list = field(default_factory=list)
    energy_injected: list = field(default_factory=list)
    energy_dissipated: list = field(default_factory=list)

    def append_row(self, ens, rng, n_pairs, n_coll, accept_rate, majorant,
                   energy_injected=0.0, energy_dissipated=0.0,
                   with_entropy=True):
        self.times.append(ens.time)
        for s in MOMENT_ORDERS:
            val, err = moment(ens, s)
            self.moments[s].append(val)
            self.moment_errs[s].append(err)
        p = momentum(ens)
        p3 = np.zeros(3)
        p3[: min(3, p.size)] = p[:3]
        self.momentum.append(tuple(float(c) for c in p3))
        val, err = dissipation_functional(ens, n_pairs, rng)
        self.d3.append(val)
        self.d3_err.append(err)
        self.entropy.append(entropy_estimate(ens) if with_entropy
                            else float("nan"))
        self.n_coll.append(int(n_coll))
        self.accept_rate.append(float(accept_rate))
        self.majorant.append(float(majorant))
        self.energy_injected.append(float(energy_injected))
        self.energy_dissipated.append(float(energy_dissipated))

    # -- array accessors -------------------------------------------------

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times)

    def y(self, s) -> np.ndarray:
        return np.asarray(self.moments[s])

    def y_err(self, s) -> np.ndarray:
        return np.asarray(self.moment_errs[s])

    @property
    def energy(self) -> np.ndarray:
        """Kinetic energy trace: Y_2 - Y_0."""
        return self.y(2) - self.y(0)

    @property
    def d3_arr(self) -> np.ndarray:
        return np.asarray(self.d3)

    @property
    def d3_err_arr(self) -> np.ndarray:
        return np.asarray(self.d3_err)

    def __len__(self) -> int:
        return len(self.times)

    # -- CSV I/O ---------------------------------------------------------

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for k in range(len(self.times)):
                px, py, pz = self.momentum[k]
                writer.writerow([
                    repr(self.times[k]),
                    repr(self.moments[0][k]), repr(px), repr(py), repr(pz),
                    repr(self.moments[2][k]), repr(self.moments[3][k]),
                    repr(self.moments[4][k]), repr(self.moments[6][k]),
                    repr(self.d3[k]), repr(self.d3_err[k]),
                    repr(self.entropy[k]), self.n_coll[k],
                    repr(self.accept_rate[k]), repr(self.majorant[k]),
                ])

    @classmethod
    def from_csv(cls, path) -> "ObservableSeries":
        out = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != CSV_COLUMNS:
                raise InvalidParameterError(
                    f"unexpected CSV columns in {path}")
            for row in reader:
                rec = dict(zip(CSV_COLUMNS, row))
                out.times.append(float(rec["t"]))
                for s, col in ((0, "Y0"), (2, "Y2"), (3, "Y3"),
                               (4, "Y4"), (6, "Y6")):
                    out.moments[s].append(float(rec[col]))
                    out.moment_errs[s].append(float("nan"))
                out.moments[1].append(float("nan"))
                out.moment_errs[1].append(float("nan"))
                out.momentum.append((float(rec["px"]), float(rec["py"]),
                                     float(rec["pz"])))
                out.d3.append(float(rec["D3"]))
                out.d3_err.append(float(rec["D3_err"]))
                out.entropy.append(float(rec["entropy"]))
                out.n_coll.append(int(rec["n_coll"]))
                out.accept_rate.append(float(rec["accept_rate"]))
                out.majorant.append(float(rec["majorant"]))
                out.energy_injected.append(float("nan"))
                out.energy_dissipated.append(float("nan"))
        return out
