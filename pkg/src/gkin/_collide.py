"""Sequential candidate-pair collision kernel.

One call processes the Poisson batch of candidate pairs for a single time
step, strictly in draw order: every candidate sees the velocity state left
by all earlier acceptances, so the jump process is realized exactly and a
fixed random stream gives bitwise-reproducible trajectories.

All randomness is pre-drawn by the caller (pair-pick uniforms, acceptance
uniforms, angle uniforms, normal deviates for the azimuthal direction);
the kernel itself is pure arithmetic.  It is compiled with numba when
available and runs as plain Python otherwise — the two paths execute the
same statements in the same order, so results agree bitwise.
"""

import math

import numpy as np

try:
    from numba import njit
except ImportError:          # pragma: no cover - numba is a hard dep, but
    njit = None              # keep the module importable without it

RATE_HARD_SPHERE = 0
RATE_TRUNCATED = 1

# slots of the stats output vector
STAT_ACCEPTED = 0
STAT_VIOLATIONS = 1
STAT_WORST_SPEED = 2
STAT_MAX_SPEED = 3
STAT_ENERGY_LOSS = 4
N_STATS = 5


def _process_candidates(vel, pick_a, pick_b, u_accept, u_angle, normals,
                        inv_cdf, beta, loss_coeff, rate_variant, rate_floor,
                        speed_cap, rate_bound, u_vec, e_vec, stats):
    """Apply one step's candidate collisions to ``vel`` in place.

    pick_a/pick_b: uniforms converted to an ordered pair (i, j), i != j.
    u_accept: acceptance uniforms against rate(|u|)/rate_bound.
    u_angle: uniforms mapped through the 1-d inverse-CDF table ``inv_cdf``
        (equispaced in probability) to cos(theta).
    normals: per-candidate standard-normal rows; projected orthogonally to
        the relative direction to build the azimuthal part of sigma.
    loss_coeff: (1 - alpha^2)/4; the energy ledger accumulates the
        per-event formula -loss_coeff * |u|^2 * (1 - cos theta).
    u_vec/e_vec: scratch arrays of length N (single-threaded reuse).
    stats: float64[N_STATS] accumulator, see STAT_* slots.
    """
    n_p = vel.shape[0]
    n_dim = vel.shape[1]
    n_cand = pick_a.shape[0]
    knots = inv_cdf.shape[0]

    for k in range(n_cand):
        i = int(pick_a[k] * n_p)
        if i >= n_p:
            i = n_p - 1
        j = int(pick_b[k] * (n_p - 1))
        if j >= n_p - 1:
            j = n_p - 2
        if j >= i:
            j += 1

        s2 = 0.0
        for d in range(n_dim):
            du = vel[i, d] - vel[j, d]
            u_vec[d] = du
            s2 += du * du
        s = math.sqrt(s2)
        if s > stats[STAT_MAX_SPEED]:
            stats[STAT_MAX_SPEED] = s

        if rate_variant == RATE_HARD_SPHERE:
            rate = s
        else:
            rate = rate_floor + (s if s < speed_cap else speed_cap)
        p_acc = rate / rate_bound
        if p_acc > 1.0:
            # stale majorant: accept, flag; caller raises the bound next step
            stats[STAT_VIOLATIONS] += 1.0
            if s > stats[STAT_WORST_SPEED]:
                stats[STAT_WORST_SPEED] = s
        elif u_accept[k] >= p_acc:
            continue
        if s == 0.0:
            continue        # coincident velocities: collision is a no-op

        # cos(theta) via the tabulated inverse CDF (linear interpolation)
        x = u_angle[k] * (knots - 1)
        idx = int(x)
        if idx >= knots - 1:
            idx = knots - 2
        frac = x - idx
        ct = inv_cdf[idx] * (1.0 - frac) + inv_cdf[idx + 1] * frac

        # unit vector orthogonal to u from the projected normal draw
        inv_s = 1.0 / s
        g_dot_nu = 0.0
        for d in range(n_dim):
            g_dot_nu += normals[k, d] * u_vec[d]
        g_dot_nu *= inv_s
        e2 = 0.0
        for d in range(n_dim):
            ed = normals[k, d] - g_dot_nu * u_vec[d] * inv_s
            e_vec[d] = ed
            e2 += ed * ed
        if e2 < 1e-24:
            # normal draw (anti-)parallel to u: zero-probability event;
            # fall back to projecting the axis of smallest |u| component
            dmin = 0
            amin = abs(u_vec[0])
            for d in range(1, n_dim):
                ad = abs(u_vec[d])
                if ad < amin:
                    amin = ad
                    dmin = d
            e2 = 0.0
            for d in range(n_dim):
                ed = -u_vec[dmin] * inv_s * u_vec[d] * inv_s
                if d == dmin:
                    ed += 1.0
                e_vec[d] = ed
                e2 += ed * ed
        inv_e = 1.0 / math.sqrt(e2)

        # sigma = ct * nu + sqrt(1 - ct^2) * e; kick d = (beta/2)(u - s*sigma)
        st = math.sqrt(max(1.0 - ct * ct, 0.0)) * s * inv_e
        half_beta = 0.5 * beta
        for d in range(n_dim):
            kick = half_beta * ((1.0 - ct) * u_vec[d] - st * e_vec[d])
            vel[i, d] -= kick
            vel[j, d] += kick

        stats[STAT_ACCEPTED] += 1.0
        stats[STAT_ENERGY_LOSS] -= loss_coeff * s2 * (1.0 - ct)
    return stats


if njit is not None:
    process_candidates = njit(cache=True)(_process_candidates)
else:                                    # pragma: no cover
    process_candidates = _process_candidates
