"""Command-line entry point.

Subcommands:

    simulate          run a configured trajectory; emit series.csv, a
                      final checkpoint, and a run manifest
    steady            run until the drift detector fires, then accumulate
                      a speed histogram and fit the tail
    checks            the randomized inequality suites, JSON summary
    tailfit           post-process a checkpoint into histogram + tail fit
    rescale-compare   paired runs verifying the similarity scaling of
                      steady temperature and relaxation time

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(including no-steady-state and unusable fit windows), 4 check violation.

All outputs other than manifest.json depend only on the configuration and
master seed, so repeating a command reproduces them bitwise.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time as _time
from math import sqrt

import numpy as np

from . import __version__
from . import tail_analysis as ta
from . import theory_checks as tc
from .checkpoint import load_checkpoint, save_checkpoint
from .config import apply_overrides, default_config, parse_config
from .engine import InitSpec, SimConfig, Simulator
from .errors import (CheckViolationError, ConfigError, InvalidParameterError,
                     NumericalError)
from .observables import temperature as ens_temperature

STEADY_DEFAULT_TMAX = 60.0
STEADY_WINDOW = 5.0
STEADY_TOL = 0.01


# ---------------------------------------------------------------------------
# small helpers

def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ensure_out(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_manifest(out_dir, command, cfg, args, started, outputs) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed if cfg is not None else args.seed,
        "threads": args.threads or 1,
        "config": dataclasses.asdict(cfg) if cfg is not None else None,
        "wall_start": started,
        "wall_end": _time.time(),
        "outputs": {name: _sha256(os.path.join(out_dir, name))
                    for name in outputs},
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)


def _build_config(args) -> SimConfig:
    cfg = parse_config(args.config) if args.config else default_config()
    return apply_overrides(cfg, seed=args.seed, t_end=args.t_end,
                           n_particles=args.particles, alpha=args.alpha,
                           mu=args.mu)


def _apply_threads(args) -> None:
    """Dynamics are sequential regardless; this only sizes numba's pool."""
    if args.threads:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        try:
            import numba
            numba.set_num_threads(args.threads)
        except Exception:
            pass


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    cfg = _build_config(args)
    _apply_threads(args)
    out_dir = _ensure_out(args)
    started = _time.time()
    sim = Simulator(cfg)
    try:
        sim.advance_to(cfg.t_end)
    except NumericalError as exc:
        bad = exc.context.get("ensemble")
        if bad is not None:
            diag = os.path.join(out_dir, "diagnostic.ckpt")
            save_checkpoint(diag, bad, cfg.alpha, cfg.mu, cfg.seed)
            print(f"numerical failure: {exc}; state dumped to {diag}",
                  file=sys.stderr)
        raise
    result = sim.result()
    result.series.to_csv(os.path.join(out_dir, "series.csv"))
    save_checkpoint(os.path.join(out_dir, "final.ckpt"), sim.ensemble,
                    cfg.alpha, cfg.mu, cfg.seed, rng_engine=sim.rng_engine,
                    rng_obs=sim.rng_obs)
    _write_manifest(out_dir, "simulate", cfg, args, started,
                    ["series.csv", "final.ckpt"])
    print(f"simulate: t={sim.ensemble.time:g} in {sim.step_count} steps, "
          f"{result.total_collisions} collisions "
          f"({result.total_violations} majorant flags) -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# steady + histogram + fit

def _histogram_tick(sim, state):
    """Accumulate the current ensemble into the (lazily created) histogram."""
    ens = sim.ensemble
    if state.get("hist") is None:
        temp = ens_temperature(ens)
        speeds = np.linalg.norm(ens.velocities, axis=1)
        state["hist"] = ta.SpeedHistogram(
            edges=np.linspace(0.0, 1.5 * float(speeds.max()),
                              state["bins"] + 1),
            n_dim=ens.dimension, rho0=ens.rho0,
            thermal_speed=sqrt(temp))
    state["hist"].accumulate(ens.velocities)
    state["temps"].append(ens_temperature(ens))


def run_to_steady(cfg: SimConfig, t_max: float, window: float = STEADY_WINDOW,
                  tol: float = STEADY_TOL):
    """Step a simulator until the drift detector fires or t_max is reached.

    Returns (simulator, detection); detection.time is None on timeout.
    """
    sim = Simulator(cfg)
    det = ta.SteadyDetection(time=None, diagnostic="series too short")
    ticks_seen = 1
    while sim.ensemble.time < t_max - 1e-9:
        sim.step()
        if len(sim.series) > ticks_seen:
            ticks_seen = len(sim.series)
            try:
                det = ta.detect_steady(sim.series, window, tol)
            except InvalidParameterError:
                continue
            if det:
                break
    return sim, det


def sample_steady_histogram(sim, n_ticks: int, bins: int):
    """Advance n_ticks output intervals, accumulating a speed histogram."""
    state = {"hist": None, "bins": bins, "temps": []}
    sim.tick_callback = lambda s: _histogram_tick(s, state)
    target = sim.ensemble.time + n_ticks * sim.cfg.output_interval
    sim.advance_to(target)
    sim.tick_callback = None
    if state["hist"] is None:
        raise NumericalError("no output ticks during sampling phase")
    return state["hist"], float(np.mean(state["temps"]))


def _tail_report(hist, ensemble, out_dir):
    """Fit the tail and run the barrier/lower-bound checks; returns payload."""
    payload = {"histogram": {
        "n_bins": int(hist.counts.size),
        "total_samples": int(hist.total_samples),
        "overflow": int(hist.overflow),
        "thermal_speed": hist.thermal_speed,
    }}
    fit_error = None
    try:
        fit = ta.fit_tail(hist)
        payload["tail_fit"] = fit.to_dict()
    except NumericalError as exc:
        fit_error = exc
        payload["tail_fit"] = {"error": str(exc)}

    rho1 = ta.first_speed_moment(ensemble)
    radius = hist.thermal_speed
    a_star = ta.barrier_coefficient(ensemble.rho0, rho1, radius,
                                    ensemble.dimension)
    barrier = ta.verify_barrier_inequality(ensemble, a_star, 1.0, radius)
    floor_k, c0, v0, r0 = ta.calibrate_lower_bound(hist, a_star)
    lower = ta.verify_lower_bound(hist, floor_k, a_star)
    payload["barrier"] = {"a_star": a_star, "rho1": rho1, "radius": radius,
                          "check": barrier.to_dict()}
    payload["lower_bound"] = {"K": floor_k, "c0": c0, "v0": v0, "r0": r0,
                              "check": lower.to_dict()}

    _write_histogram_csv(os.path.join(out_dir, "histogram.csv"), hist)
    return payload, fit_error, barrier, lower


def _write_histogram_csv(path, hist) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("edge_lo,edge_hi,counts,density,density_err\n")
        dens = hist.density
        errs = hist.density_err
        for k in range(hist.counts.size):
            fh.write(f"{hist.edges[k]!r},{hist.edges[k + 1]!r},"
                     f"{hist.counts[k]},{dens[k]!r},{errs[k]!r}\n")


def cmd_steady(args) -> int:
    cfg = _build_config(args)
    _apply_threads(args)
    out_dir = _ensure_out(args)
    started = _time.time()
    if args.t_end is not None:
        t_max = args.t_end
    elif args.config:
        t_max = cfg.t_end
    else:
        t_max = STEADY_DEFAULT_TMAX
    cfg = apply_overrides(cfg, t_end=t_max)

    sim, det = run_to_steady(cfg, t_max, window=args.window)
    if not det:
        sim.result().series.to_csv(os.path.join(out_dir, "series.csv"))
        _write_manifest(out_dir, "steady", cfg, args, started, ["series.csv"])
        kind = "elastic heating" if cfg.alpha == 1.0 else det.diagnostic
        print(f"no steady state by t={t_max:g}: {kind}", file=sys.stderr)
        return 3

    hist, mean_temp = sample_steady_histogram(sim, args.sample_ticks,
                                              args.bins)
    payload, fit_error, barrier, lower = _tail_report(hist, sim.ensemble,
                                                      out_dir)
    payload["steady"] = {"time": det.time, "diagnostic": det.diagnostic,
                         "mean_temperature": mean_temp}
    _write_json(os.path.join(out_dir, "steady.json"), payload)
    sim.result().series.to_csv(os.path.join(out_dir, "series.csv"))
    save_checkpoint(os.path.join(out_dir, "final.ckpt"), sim.ensemble,
                    cfg.alpha, cfg.mu, cfg.seed, rng_engine=sim.rng_engine,
                    rng_obs=sim.rng_obs)
    _write_manifest(out_dir, "steady", cfg, args, started,
                    ["series.csv", "steady.json", "histogram.csv",
                     "final.ckpt"])

    print(f"steady detected at t={det.time:g} ({det.diagnostic})")
    if "exponent" in payload["tail_fit"]:
        f = payload["tail_fit"]
        print(f"tail fit: p={f['exponent']:g} a={f['scale']:.4g} over "
              f"|v| in [{f['window'][0]:.3g}, {f['window'][1]:.3g}] "
              f"({f['n_bins']} bins)")
    print(f"barrier check: {'pass' if barrier.passed else 'FAIL'}; "
          f"lower bound: {lower.status}")
    if fit_error is not None:
        print(str(fit_error), file=sys.stderr)
        return 3
    return 0 if (barrier.passed and lower.status != "fail") else 4


# ---------------------------------------------------------------------------
# checks

def cmd_checks(args) -> int:
    _apply_threads(args)
    out_dir = _ensure_out(args)
    started = _time.time()
    seed = args.seed if args.seed is not None else 0
    reports = tc.run_all_suites(n_samples=args.samples, seed=seed)
    for rep in reports:
        print(rep.summary_line())
    _write_json(os.path.join(out_dir, "checks.json"),
                {"seed": seed, "samples": args.samples,
                 "suites": [rep.to_dict() for rep in reports]})
    _write_manifest(out_dir, "checks", None, args, started, ["checks.json"])
    return 0 if all(rep.passed for rep in reports) else 4


# ---------------------------------------------------------------------------
# tailfit

def cmd_tailfit(args) -> int:
    _apply_threads(args)
    out_dir = _ensure_out(args)
    started = _time.time()
    try:
        data = load_checkpoint(args.checkpoint)
    except (OSError, InvalidParameterError) as exc:
        raise ConfigError(f"cannot load checkpoint: {exc}")
    ens = data.ensemble
    temp = ens_temperature(ens)
    hist = ta.SpeedHistogram.from_velocities(
        ens.velocities, ens.rho0, sqrt(temp), n_bins=args.bins)
    payload, fit_error, barrier, lower = _tail_report(hist, ens, out_dir)
    payload["checkpoint"] = {"path": args.checkpoint,
                             "n_particles": ens.n_particles,
                             "time": ens.time, "temperature": temp}
    _write_json(os.path.join(out_dir, "tailfit.json"), payload)
    _write_manifest(out_dir, "tailfit", None, args, started,
                    ["tailfit.json", "histogram.csv"])
    if "exponent" in payload["tail_fit"]:
        f = payload["tail_fit"]
        print(f"tail fit: p={f['exponent']:g} a={f['scale']:.4g} "
              f"({f['n_bins']} bins)")
    print(f"barrier check: {'pass' if barrier.passed else 'FAIL'}; "
          f"lower bound: {lower.status}")
    if fit_error is not None:
        print(str(fit_error), file=sys.stderr)
        return 3
    return 0 if (barrier.passed and lower.status != "fail") else 4


# ---------------------------------------------------------------------------
# rescale-compare

def similarity_scales(rho0: float, mu: float):
    """(eta, tau): velocity and time contraction mapping to rho0=mu=1."""
    eta = rho0 ** (-1.0 / 3.0) * mu ** (1.0 / 3.0)
    tau = rho0 ** (-2.0 / 3.0) * mu ** (-1.0 / 3.0)
    return eta, tau


def _blocked_mean_se(values: np.ndarray, n_blocks: int = 5):
    """Mean and a block standard error robust to tick autocorrelation."""
    values = np.asarray(values, dtype=float)
    blocks = np.array_split(values, n_blocks)
    means = np.array([b.mean() for b in blocks if b.size])
    return float(values.mean()), \
        float(means.std(ddof=1) / sqrt(means.size)) if means.size > 1 else 0.0


def _half_relaxation(series):
    """Time at which the energy first crosses halfway to its plateau.

    Returns (t_half, sigma) with sigma from the plateau scatter projected
    through the local slope at the crossing.
    """
    t = series.t
    energy = series.energy
    tail = energy[3 * len(energy) // 4:]
    e_inf, _ = _blocked_mean_se(tail)
    e0 = energy[0]
    target = 0.5 * (e0 + e_inf)
    sign = 1.0 if e_inf >= e0 else -1.0
    above = sign * (energy - target) >= 0.0
    idx = np.argmax(above)
    if not above[idx]:
        raise NumericalError("energy never crossed its half-relaxation level")
    if idx == 0:
        return float(t[0]), float(t[1] - t[0])
    t0, t1 = t[idx - 1], t[idx]
    f0, f1 = energy[idx - 1], energy[idx]
    frac = (target - f0) / (f1 - f0)
    slope = (f1 - f0) / (t1 - t0)
    noise = float(tail.std(ddof=1)) if tail.size > 1 else 0.0
    sigma = abs(noise / slope) if slope else float(t1 - t0)
    return float(t0 + frac * (t1 - t0)), max(sigma, 0.5 * float(t1 - t0))


def _steady_temperature(series, dimension: int, rho0: float):
    t_series = series.energy / (rho0 * dimension)
    tail = t_series[3 * len(t_series) // 4:]
    return _blocked_mean_se(tail)


def run_rescale_compare(rho0: float, mu: float, alpha: float = 0.5,
                        n_particles: int = 100_000, seed: int = 1,
                        t_end: float = 30.0, dimension: int = 3):
    """Paired runs: (rho0, mu) vs the normalized (1, 1) reference.

    The scaled run starts from the similarity image of the reference
    initial data, so its whole trajectory should be the reference one with
    velocities scaled by eta and time scaled by tau.
    """
    eta, tau = similarity_scales(rho0, mu)
    base = SimConfig(dimension=dimension, alpha=alpha, mu=1.0, rho0=1.0,
                     n_particles=n_particles, t_end=t_end, seed=seed,
                     init=InitSpec(kind="maxwellian", temperature=1.0),
                     track_entropy=False)
    scaled = SimConfig(dimension=dimension, alpha=alpha, mu=mu, rho0=rho0,
                       n_particles=n_particles, t_end=t_end * tau,
                       seed=seed + 1, output_interval=0.25 * tau,
                       init=InitSpec(kind="maxwellian",
                                     temperature=eta * eta),
                       track_entropy=False)
    sim_b = Simulator(base)
    sim_b.advance_to(base.t_end)
    sim_s = Simulator(scaled)
    sim_s.advance_to(scaled.t_end)

    series_b, series_s = sim_b.series, sim_s.series
    temp_b, se_b = _steady_temperature(series_b, dimension, 1.0)
    temp_s, se_s = _steady_temperature(series_s, dimension, rho0)
    ratio_t = temp_s / temp_b
    sigma_ratio = ratio_t * sqrt((se_b / temp_b) ** 2 + (se_s / temp_s) ** 2)

    th_b, sig_b = _half_relaxation(series_b)
    th_s, sig_s = _half_relaxation(series_s)
    ratio_h = th_s / th_b
    sigma_h = ratio_h * sqrt((sig_b / th_b) ** 2 + (sig_s / th_s) ** 2)

    return {
        "rho0": rho0, "mu": mu, "eta": eta, "tau": tau,
        "temperature": {"base": temp_b, "scaled": temp_s,
                        "ratio": ratio_t, "expected": eta * eta,
                        "sigma": sigma_ratio},
        "half_relaxation": {"base": th_b, "scaled": th_s,
                            "ratio": ratio_h, "expected": tau,
                            "sigma": sigma_h},
    }


def cmd_rescale(args) -> int:
    _apply_threads(args)
    out_dir = _ensure_out(args)
    started = _time.time()
    report = run_rescale_compare(
        rho0=args.rho0, mu=args.mu if args.mu is not None else 1.0,
        alpha=args.alpha if args.alpha is not None else 0.5,
        n_particles=args.particles if args.particles is not None else 100_000,
        seed=args.seed if args.seed is not None else 1,
        t_end=args.t_end if args.t_end is not None else 30.0)
    _write_json(os.path.join(out_dir, "rescale.json"), report)
    _write_manifest(out_dir, "rescale-compare", None, args, started,
                    ["rescale.json"])

    ok = True
    for name, expect_key in (("temperature", "eta^2"),
                             ("half_relaxation", "tau")):
        block = report[name]
        dev = abs(block["ratio"] - block["expected"])
        allowed = 5.0 * block["sigma"] + 0.06 * block["expected"]
        status = "pass" if dev <= allowed else "FAIL"
        ok &= dev <= allowed
        print(f"{name}: ratio {block['ratio']:.4f} vs {expect_key} = "
              f"{block['expected']:.4f} (|dev| {dev:.4f} <= {allowed:.4f})"
              f" {status}")
    return 0 if ok else 4


# ---------------------------------------------------------------------------
# argument parsing

def _common_flags(sub) -> None:
    sub.add_argument("--config", metavar="PATH",
                     help="INI config file (flags override it)")
    sub.add_argument("--seed", type=int, metavar="U64",
                     help="master 64-bit seed")
    sub.add_argument("--threads", type=int, metavar="INT",
                     help="numba pool size (dynamics stay sequential)")
    sub.add_argument("--out", metavar="DIR",
                     help="output directory (default: current)")
    sub.add_argument("--t-end", type=float, metavar="REAL",
                     dest="t_end", help="simulated end time")
    sub.add_argument("--particles", type=int, metavar="INT",
                     help="number of particles")
    sub.add_argument("--alpha", type=float, metavar="REAL",
                     help="restitution coefficient in (0,1]")
    sub.add_argument("--mu", type=float, metavar="REAL",
                     help="heat-bath diffusion coefficient")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gkin",
        description="Heated inelastic hard-sphere gas: particle simulation "
                    "and verification suites")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("simulate", help="run one trajectory")
    _common_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("steady",
                        help="run to steady state, fit the speed tail")
    _common_flags(p)
    p.add_argument("--window", type=float, default=STEADY_WINDOW,
                   help="drift-detection window length (default %(default)s)")
    p.add_argument("--sample-ticks", type=int, default=40,
                   help="post-steady snapshots to accumulate "
                        "(default %(default)s)")
    p.add_argument("--bins", type=int, default=128,
                   help="histogram bins (default %(default)s)")
    p.set_defaults(func=cmd_steady)

    p = subs.add_parser("checks", help="randomized inequality suites")
    _common_flags(p)
    p.add_argument("--samples", type=int, default=100_000,
                   help="samples per suite (default %(default)s)")
    p.set_defaults(func=cmd_checks)

    p = subs.add_parser("tailfit", help="tail fit from a checkpoint")
    _common_flags(p)
    p.add_argument("checkpoint", help="checkpoint file to post-process")
    p.add_argument("--bins", type=int, default=128,
                   help="histogram bins (default %(default)s)")
    p.set_defaults(func=cmd_tailfit)

    p = subs.add_parser("rescale-compare",
                        help="verify similarity scaling against (1,1)")
    _common_flags(p)
    p.add_argument("--rho0", type=float, default=8.0,
                   help="mass of the scaled run (default %(default)s)")
    p.set_defaults(func=cmd_rescale)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InvalidParameterError as exc:
        print(f"invalid parameter: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except CheckViolationError as exc:
        print(f"check violation: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
