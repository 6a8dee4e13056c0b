"""Angular collision kernel on the unit sphere in N dimensions.

The scattering weight depends only on cos(theta) = nu . sigma, where nu is
the unit relative velocity and sigma the post-collisional direction:

    b(cos_theta) = c_N * ((1 - cos_theta) / 2) ** (-(N - 3) / 2),

with c_N chosen so that b integrates to one over the sphere.  In three
dimensions the weight is the constant 1/(4 pi); for N >= 4 it has an
integrable singularity at cos_theta = 1.  Reducing the surface integral to
the cos_theta marginal cancels the singular factor, leaving the smooth
density

    p(t) dt  propto  (1 + t)^((N-3)/2) dt  on [-1, 1],

which is what both the quadrature routines and the sampler work with.

Sampling uses a cumulative-trapezoid CDF table over ``TABLE_KNOTS`` knots
with linear-interpolation inversion (endpoints clamped to 0 and 1), plus a
uniformly distributed unit vector in the hyperplane orthogonal to nu.
Tables are immutable after construction; callers supply their own
numpy Generator, so sampling is safe from concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma as _gamma_fn
from math import pi

import numpy as np

from .errors import InvalidParameterError

# CDF-table resolution: interpolation error ~ (2/4095)^2 ~ 2e-7 in cos(theta),
# far below Monte Carlo noise at any realistic sample count.
TABLE_KNOTS = 4096

_GAUSS_ORDER = 200       # Gauss-Legendre order for the 1-d marginal quadratures


def sphere_surface_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} embedded in R^n."""
    if n < 1:
        raise InvalidParameterError(f"sphere dimension must be >= 1, got {n}")
    return 2.0 * pi ** (n / 2.0) / _gamma_fn(n / 2.0)


def _marginal_quad(func, n_dim: int) -> float:
    """Integral of func(t) * (1+t)^((N-3)/2) over t in [-1, 1].

    For N = 2 the weight diverges (integrably) at t = -1, so substitute
    x = sqrt((1+t)/2): the integral becomes
    4 * 2^((N-3)/2) * int_0^1 func(2x^2-1) x^(N-2) dx, whose integrand is
    smooth for every N >= 2 and Gauss-Legendre converges spectrally.
    """
    nodes, weights = np.polynomial.legendre.leggauss(_GAUSS_ORDER)
    x = 0.5 * (nodes + 1.0)                 # map to [0, 1]
    vals = func(2.0 * x * x - 1.0) * x ** (n_dim - 2)
    return 4.0 * 2.0 ** ((n_dim - 3) / 2.0) * 0.5 * float(np.sum(weights * vals))


@dataclass(frozen=True)
class AngularKernel:
    """Normalized angular weight for one space dimension N >= 2.

    Construction performs the normalization quadrature and builds the
    inverse-CDF sampling table; instances are immutable afterwards.
    """

    dimension: int
    exponent: float = field(init=False)
    normalization: float = field(init=False)
    _t_grid: np.ndarray = field(init=False, repr=False)
    _cdf: np.ndarray = field(init=False, repr=False)
    _inv_cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.dimension
        if n < 2:
            raise InvalidParameterError(f"dimension must be >= 2, got {n}")
        object.__setattr__(self, "exponent", -(n - 3) / 2.0)

        # Unit angular mass: integrate the unnormalized weight over the
        # sphere by reducing to the cos(theta) marginal.
        raw_mass = sphere_surface_area(n - 1) * 2.0 ** ((n - 3) / 2.0) \
            * _marginal_quad(lambda t: np.ones_like(t), n)
        object.__setattr__(self, "normalization", 1.0 / raw_mass)

        # CDF of cos(theta) by cumulative trapezoid.  Work in the variable
        # x = sqrt((1+t)/2), where the marginal weight is the polynomial
        # x^(N-2): no endpoint singularity for any N, and the resulting
        # t-grid clusters where the density varies fastest.
        x = np.linspace(0.0, 1.0, TABLE_KNOTS)
        t = 2.0 * x * x - 1.0
        integrand = x ** (n - 2)
        cdf = np.concatenate(
            ([0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1])
                              * np.diff(x))))
        cdf /= cdf[-1]
        cdf[0], cdf[-1] = 0.0, 1.0      # clamp endpoints exactly
        t[0], t[-1] = -1.0, 1.0
        object.__setattr__(self, "_t_grid", t)
        object.__setattr__(self, "_cdf", cdf)

        # inverse table, equispaced in probability: the production sampler
        inv = np.interp(np.linspace(0.0, 1.0, TABLE_KNOTS), cdf, t)
        inv[0], inv[-1] = -1.0, 1.0
        inv.flags.writeable = False
        object.__setattr__(self, "_inv_cdf", inv)

    # -- pointwise values -------------------------------------------------

    def value(self, cos_theta):
        """Normalized weight w.r.t. surface measure; may be inf at 1 for N>=4."""
        ct = np.asarray(cos_theta, dtype=float)
        if np.any((ct < -1.0 - 1e-12) | (ct > 1.0 + 1e-12)):
            raise InvalidParameterError("cos_theta must lie in [-1, 1]")
        ct = np.clip(ct, -1.0, 1.0)
        with np.errstate(divide="ignore"):
            out = self.normalization * ((1.0 - ct) / 2.0) ** self.exponent
        return out if out.ndim else float(out)

    def marginal_pdf(self, cos_theta):
        """Probability density of cos(theta) on [-1, 1] (smooth for all N)."""
        ct = np.asarray(cos_theta, dtype=float)
        norm = self.normalization * sphere_surface_area(self.dimension - 1) \
            * 2.0 ** ((self.dimension - 3) / 2.0)
        out = norm * (1.0 + ct) ** ((self.dimension - 3) / 2.0)
        return out if out.ndim else float(out)

    def expect(self, func) -> float:
        """Quadrature of func(cos_theta) against the angular weight."""
        n = self.dimension
        norm = self.normalization * sphere_surface_area(n - 1) \
            * 2.0 ** ((n - 3) / 2.0)
        return norm * _marginal_quad(func, n)

    def cdf(self, cos_theta):
        """Tabulated CDF of cos(theta), linearly interpolated."""
        return np.interp(cos_theta, self._t_grid, self._cdf)

    def inverse_table(self) -> np.ndarray:
        """Read-only inverse-CDF table, equispaced in probability."""
        return self._inv_cdf

    # -- sampling ---------------------------------------------------------

    def sample_cos_theta(self, n_samples: int, rng: np.random.Generator):
        """Draw cos(theta) by linear interpolation of the inverse table."""
        x = rng.random(n_samples) * (TABLE_KNOTS - 1)
        idx = np.minimum(x.astype(np.int64), TABLE_KNOTS - 2)
        frac = x - idx
        return self._inv_cdf[idx] * (1.0 - frac) + self._inv_cdf[idx + 1] * frac

    def sample_sigma(self, nu: np.ndarray, rng: np.random.Generator,
                     n_samples: int | None = None):
        """Draw scattering directions for unit relative velocity nu.

        Returns an (n_samples, N) array, or a single (N,) vector when
        n_samples is None.  Each sigma = t nu + sqrt(1 - t^2) e with t from
        the cos(theta) marginal and e uniform on the unit sphere of the
        hyperplane orthogonal to nu.
        """
        nu = np.asarray(nu, dtype=float)
        if abs(np.linalg.norm(nu) - 1.0) > 1e-9:
            raise InvalidParameterError("nu must be a unit vector")
        single = n_samples is None
        m = 1 if single else int(n_samples)

        t = self.sample_cos_theta(m, rng)
        e = rng.standard_normal((m, self.dimension))
        e -= np.outer(e @ nu, nu)
        norms = np.linalg.norm(e, axis=1)
        bad = norms < 1e-12
        while np.any(bad):                      # zero-measure, but be safe
            k = int(bad.sum())
            fresh = rng.standard_normal((k, self.dimension))
            fresh -= np.outer(fresh @ nu, nu)
            e[bad] = fresh
            norms[bad] = np.linalg.norm(fresh, axis=1)
            bad = norms < 1e-12
        e /= norms[:, None]

        sigma = t[:, None] * nu + np.sqrt(np.maximum(1.0 - t * t, 0.0))[:, None] * e
        return sigma[0] if single else sigma


def kernel_value(cos_theta, n_dim: int):
    """Normalized angular weight at cos_theta for space dimension n_dim."""
    return AngularKernel(n_dim).value(cos_theta)


def epsilon_n(n_dim: int) -> float:
    """Mean of (1 - cos_theta)/2 under the angular weight, by quadrature.

    This is the constant relating the kinetic-energy dissipation rate to
    the cubed-relative-speed moment; it lies in (0, 1) and equals 1/2 in
    three dimensions.
    """
    return AngularKernel(n_dim).expect(lambda t: (1.0 - t) / 2.0)
