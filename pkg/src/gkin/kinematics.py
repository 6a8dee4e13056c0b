"""Inelastic hard-sphere collision kinematics in N dimensions.

Velocities are plain float ndarrays of length N (N >= 2).  A binary
collision with restitution coefficient alpha transforms the relative
velocity u = v - v_star into

    u' = (1 - beta) u + beta |u| sigma,      beta = (1 + alpha) / 2,

where sigma is a unit vector; the center-of-mass velocity w = v + v_star
is unchanged, so momentum is conserved exactly and kinetic energy changes
by -((1 - alpha^2)/2) ((1 - nu.sigma)/2) |u|^2 with nu = u/|u|.

The equivalent impact-direction ("n") form, u' = u - (1+alpha)(u.n)n with
u.n > 0, is related to the sigma form by sigma = nu - 2(nu.n)n and is used
to build inverse collisions: the predecessors of (v, v_star) under a given
n are recovered with the factor gamma = (alpha+1)/(2 alpha) in place of
beta.

All functions are pure and dimension-generic; there is no shared state,
so they may be called freely from concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .tolerances import EXACT_ALGEBRA_TOL


@dataclass(frozen=True)
class CollisionParams:
    """Restitution coefficient and the derived collision constants.

    alpha in (0, 1]; beta = (1+alpha)/2 parametrizes the direct collision,
    gamma = (alpha+1)/(2 alpha) the inverse one.  alpha = 0 is rejected
    because gamma diverges.
    """

    alpha: float
    dimension: int = 3
    beta: float = field(init=False)
    gamma: float = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise InvalidParameterError(
                f"alpha must lie in (0,1], got {self.alpha}")
        if self.dimension < 2:
            raise InvalidParameterError(
                f"dimension must be >= 2, got {self.dimension}")
        object.__setattr__(self, "beta", (1.0 + self.alpha) / 2.0)
        object.__setattr__(self, "gamma", (self.alpha + 1.0) / (2.0 * self.alpha))


def _check_unit(sigma: np.ndarray, tol: float = EXACT_ALGEBRA_TOL) -> None:
    norm = float(np.linalg.norm(sigma))
    if abs(norm - 1.0) > max(tol, 1e-9):
        raise InvalidParameterError(f"sigma must be a unit vector, |sigma|={norm}")


def post_collision(v, v_star, sigma, p: CollisionParams):
    """Post-collisional velocities (v', v'_star) for angular parameter sigma.

    Vectorized: v, v_star, sigma may be (N,) or (M, N) arrays.  For u = 0
    the collision is a no-op (zero-measure event: the rate carries a |u|
    factor).
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    norms = np.linalg.norm(sigma, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise InvalidParameterError("sigma must be a unit vector")

    w = v + v_star
    u = v - v_star
    speed = np.linalg.norm(u, axis=-1, keepdims=True)
    u_prime = (1.0 - p.beta) * u + p.beta * speed * sigma
    # u = 0: u_prime is already 0, so the no-op falls out of the algebra
    return 0.5 * (w + u_prime), 0.5 * (w - u_prime)


def pre_collision(v, v_star, sigma, p: CollisionParams):
    """Pre-collisional velocities: the pair that maps to (v, v_star).

    Same formula as post_collision with gamma in place of beta.  In the
    n-representation this is u - (1 + 1/alpha)(u.n)n, and applying the
    direct collision with the same n recovers (v, v_star).
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    _check_unit(np.atleast_2d(sigma)[0])

    w = v + v_star
    u = v - v_star
    speed = np.linalg.norm(u, axis=-1, keepdims=True)
    u_pre = (1.0 - p.gamma) * u + p.gamma * speed * sigma
    return 0.5 * (w + u_pre), 0.5 * (w - u_pre)


def post_collision_n(v, v_star, n, p: CollisionParams):
    """Direct collision in the impact-direction form u' = u - (1+alpha)(u.n)n."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    n = np.asarray(n, dtype=float)
    u = v - v_star
    un = np.sum(u * n, axis=-1, keepdims=True)
    du = (1.0 + p.alpha) * un * n
    return v - 0.5 * du, v_star + 0.5 * du


def pre_collision_n(v, v_star, n, p: CollisionParams):
    """Inverse collision in the impact-direction form u - (1 + 1/alpha)(u.n)n."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    n = np.asarray(n, dtype=float)
    u = v - v_star
    un = np.sum(u * n, axis=-1, keepdims=True)
    du = (1.0 + 1.0 / p.alpha) * un * n
    return v - 0.5 * du, v_star + 0.5 * du


def energy_loss(v, v_star, sigma, p: CollisionParams):
    """Kinetic energy change |v'|^2 + |v'_star|^2 - |v|^2 - |v_star|^2.

    Always <= 0 for alpha <= 1; vanishes in the elastic limit and for
    sigma = nu (grazing event).
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    u = v - v_star
    speed = np.linalg.norm(u, axis=-1)
    u_dot_sigma = np.sum(u * sigma, axis=-1)
    # (1 - nu.sigma) |u|^2 = |u|^2 - |u| (u.sigma); safe at u = 0
    factor = speed * speed - speed * u_dot_sigma
    return -((1.0 - p.alpha**2) / 4.0) * factor


def sigma_from_n(u, n):
    """Map an impact direction n (u.n > 0) to the angular parameter sigma.

    sigma = nu - 2 (nu.n) n with nu = u/|u|; the same reflection maps back,
    so the conversion is involutive for fixed u.
    """
    u = np.asarray(u, dtype=float)
    n = np.asarray(n, dtype=float)
    speed = np.linalg.norm(u, axis=-1, keepdims=True)
    if np.any(speed == 0.0):
        raise InvalidParameterError("u = 0 has no collision direction")
    nu = u / speed
    nun = np.sum(nu * n, axis=-1, keepdims=True)
    if np.any(nun <= 0.0):
        raise InvalidParameterError("impact direction must satisfy u.n > 0")
    return nu - 2.0 * nun * n


def n_from_sigma(u, sigma):
    """Inverse of sigma_from_n: n is the unit vector along nu - sigma."""
    u = np.asarray(u, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    speed = np.linalg.norm(u, axis=-1, keepdims=True)
    if np.any(speed == 0.0):
        raise InvalidParameterError("u = 0 has no collision direction")
    nu = u / speed
    diff = nu - sigma
    norm = np.linalg.norm(diff, axis=-1, keepdims=True)
    if np.any(norm < 1e-14):
        raise InvalidParameterError("sigma = nu corresponds to a grazing event; "
                                    "n is undefined")
    return diff / norm


def lambda_of_angle(cos_chi, p: CollisionParams):
    """Contraction factor of the relative speed, as a function of cos(chi).

    chi is the angle between u and the direction of u'; the result lies in
    [alpha, 1], reaching 1 for cos_chi = 1 or in the elastic limit.
    """
    c = np.asarray(cos_chi, dtype=float)
    if np.any((c < -1.0 - 1e-12) | (c > 1.0 + 1e-12)):
        raise InvalidParameterError("cos_chi must lie in [-1, 1]")
    c = np.clip(c, -1.0, 1.0)
    b = p.beta
    disc = (1.0 - b) ** 2 * (c * c - 1.0) + b * b
    # disc >= b^2 - (1-b)^2 > 0 for beta in (1/2, 1]; clip guards rounding
    return (1.0 - b) * c + np.sqrt(np.maximum(disc, 0.0))


def event_geometry(v, v_star, sigma, p: CollisionParams):
    """Contraction factor and center-of-mass angle of a collision event.

    Returns (lam, sin2_mu): lam = |beta sigma + (1-beta) nu| is the factor
    by which the relative speed contracts, and sin2_mu = sin^2 of the angle
    between w = v + v_star and the post-collisional relative direction
    omega.  For w = 0 the two outgoing energies are equal, which is what
    sin2_mu = 1 encodes, so that value is returned.
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    u = v - v_star
    w = v + v_star
    speed = np.linalg.norm(u, axis=-1, keepdims=True)
    nu = np.divide(u, speed, out=np.zeros_like(u), where=speed > 0)
    q = p.beta * sigma + (1.0 - p.beta) * nu
    lam = np.linalg.norm(q, axis=-1)
    wnorm = np.linalg.norm(w, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_mu = np.sum(w * q, axis=-1) / (wnorm * lam)
    cos_mu = np.where(wnorm > 0, cos_mu, 0.0)
    cos_mu = np.clip(cos_mu, -1.0, 1.0)
    return lam, 1.0 - cos_mu**2
