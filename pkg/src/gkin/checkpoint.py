"""Bit-exact binary snapshots of an ensemble (plus optional RNG state).

Layout (all little-endian, no alignment padding):

    magic   5 bytes  b"GKIN1"
    version u16
    dim     u32
    n       u64
    alpha, mu, rho0, time   4 x f64
    seed    u64
    has_rng u8       1 if the two stream states below are present
    [2 x PCG64 state: state u128, inc u128, has_uint32 u32, uinteger u32]
    velocities       n * dim * f64, row-major
    crc32   u32      over everything above

Velocities round-trip bitwise; loading verifies magic, version and CRC so
a truncated or corrupted file fails loudly rather than silently.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import Ensemble
from .errors import InvalidParameterError

MAGIC = b"GKIN1"
VERSION = 1
_HEADER = struct.Struct("<5sHIQddddQB")
_RNG_TAIL = struct.Struct("<II")
_CRC = struct.Struct("<I")


@dataclass
class CheckpointData:
    """Everything stored in a checkpoint file."""

    ensemble: Ensemble
    alpha: float
    mu: float
    seed: int
    rng_engine_state: Optional[dict] = None
    rng_obs_state: Optional[dict] = None


def _pack_rng(state: dict) -> bytes:
    inner = state["state"]
    return (int(inner["state"]).to_bytes(16, "little")
            + int(inner["inc"]).to_bytes(16, "little")
            + _RNG_TAIL.pack(int(state["has_uint32"]),
                             int(state["uinteger"])))


def _unpack_rng(raw: bytes) -> dict:
    has_uint32, uinteger = _RNG_TAIL.unpack(raw[32:40])
    return {"bit_generator": "PCG64",
            "state": {"state": int.from_bytes(raw[:16], "little"),
                      "inc": int.from_bytes(raw[16:32], "little")},
            "has_uint32": has_uint32, "uinteger": uinteger}


def save_checkpoint(path, ensemble: Ensemble, alpha: float, mu: float,
                    seed: int, rng_engine: Optional[np.random.Generator] = None,
                    rng_obs: Optional[np.random.Generator] = None) -> None:
    """Write ensemble (and, if both generators are given, their states)."""
    has_rng = rng_engine is not None and rng_obs is not None
    if (rng_engine is None) != (rng_obs is None):
        raise InvalidParameterError(
            "provide both RNG streams or neither")
    header = _HEADER.pack(MAGIC, VERSION, ensemble.dimension,
                          ensemble.n_particles, alpha, mu, ensemble.rho0,
                          ensemble.time, seed, 1 if has_rng else 0)
    chunks = [header]
    if has_rng:
        chunks.append(_pack_rng(rng_engine.bit_generator.state))
        chunks.append(_pack_rng(rng_obs.bit_generator.state))
    vel = np.ascontiguousarray(ensemble.velocities, dtype="<f8")
    chunks.append(vel.tobytes())
    body = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(_CRC.pack(zlib.crc32(body)))


def load_checkpoint(path) -> CheckpointData:
    """Read a checkpoint; raises InvalidParameterError on any corruption."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size + _CRC.size:
        raise InvalidParameterError(f"{path}: file too short")
    body, crc_raw = raw[:-_CRC.size], raw[-_CRC.size:]
    if zlib.crc32(body) != _CRC.unpack(crc_raw)[0]:
        raise InvalidParameterError(f"{path}: checksum mismatch")
    magic, version, dim, n, alpha, mu, rho0, time, seed, has_rng = \
        _HEADER.unpack_from(body)
    if magic != MAGIC:
        raise InvalidParameterError(f"{path}: not a checkpoint file")
    if version != VERSION:
        raise InvalidParameterError(
            f"{path}: unsupported version {version}")
    offset = _HEADER.size
    rng_engine_state = rng_obs_state = None
    if has_rng:
        rng_engine_state = _unpack_rng(body[offset:offset + 40])
        rng_obs_state = _unpack_rng(body[offset + 40:offset + 80])
        offset += 80
    expected = n * dim * 8
    if len(body) - offset != expected:
        raise InvalidParameterError(
            f"{path}: velocity block has {len(body) - offset} bytes, "
            f"expected {expected}")
    vel = np.frombuffer(body, dtype="<f8", count=n * dim,
                        offset=offset).reshape(n, dim).copy()
    ens = Ensemble(vel, rho0=rho0, time=time)
    return CheckpointData(ensemble=ens, alpha=alpha, mu=mu, seed=seed,
                          rng_engine_state=rng_engine_state,
                          rng_obs_state=rng_obs_state)


def restore_generator(state: dict) -> np.random.Generator:
    """Rebuild a PCG64 generator from a stored state dict."""
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)
