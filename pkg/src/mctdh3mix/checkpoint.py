"""Binary checkpoints taken at step boundaries.

Layout (little-endian): magic ``MC3M``, ``u32`` version, grid header
(``u32`` n_points, ``f64`` x_min, ``f64`` x_max, ``u32`` boundary code),
``u32`` species count followed by one ``(u8 axis, u8 fermion flag, u32 N,
u32 M)`` record per species, ``f64`` t, ``f64`` next step size, ``f64``
phase-frame energy, then the coefficient tensor (A fastest) and each
species' orbitals as float64 real/imaginary pairs, and a trailing ``u32``
CRC-32 of everything before it.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .densops import AXES, Mixture
from .eom import SystemState
from .fock import SpeciesSpec, Statistics
from .grid1d import Boundary, Grid

MAGIC = b"MC3M"
VERSION = 1
_BOUNDARY_CODES = {Boundary.HARD_WALL: 0, Boundary.PERIODIC: 1}


class CheckpointError(IOError):
    pass


@dataclass
class Checkpoint:
    grid: Grid
    mixture: Mixture
    state: SystemState
    dt_next: float
    frame_energy: float


def _complex_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<c16").tobytes()


def dumps(cp: Checkpoint) -> bytes:
    g, mix, state = cp.grid, cp.mixture, cp.state
    parts = [MAGIC, struct.pack("<I", VERSION),
             struct.pack("<IddI", g.n_points, g.x_min, g.x_max, _BOUNDARY_CODES[g.boundary])]
    present = mix.present
    parts.append(struct.pack("<I", len(present)))
    for x in present:
        s = mix.spec(x)
        parts.append(struct.pack("<BBII", AXES.index(x), int(s.is_fermion), s.n_particles, s.n_orbitals))
    parts.append(struct.pack("<ddd", state.t, cp.dt_next, cp.frame_energy))
    parts.append(_complex_bytes(state.C.ravel(order="F")))
    for x in present:
        parts.append(_complex_bytes(state.orbitals[x]))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def loads(data: bytes) -> Checkpoint:
    if len(data) < 8 or data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint checksum mismatch")
    offset = 4
    (version,) = struct.unpack_from("<I", body, offset)
    offset += 4
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    n, x_min, x_max, code = struct.unpack_from("<IddI", body, offset)
    offset += struct.calcsize("<IddI")
    boundary = {v: k for k, v in _BOUNDARY_CODES.items()}[code]
    grid = Grid(n, x_min, x_max, boundary)
    (count,) = struct.unpack_from("<I", body, offset)
    offset += 4
    species: list[SpeciesSpec | None] = [None, None, None]
    for _ in range(count):
        axis, fermion, N, M = struct.unpack_from("<BBII", body, offset)
        offset += struct.calcsize("<BBII")
        species[axis] = SpeciesSpec(Statistics.FERMION if fermion else Statistics.BOSON, N, M)
    mix = Mixture(*species)
    t, dt_next, frame_energy = struct.unpack_from("<ddd", body, offset)
    offset += 24

    def take(count: int) -> np.ndarray:
        nonlocal offset
        out = np.frombuffer(body, dtype="<c16", count=count, offset=offset).astype(complex)
        offset += 16 * count
        return out

    C = take(mix.size).reshape(mix.shape, order="F")
    orbitals = {}
    for x in mix.present:
        M = mix.spec(x).n_orbitals
        orbitals[x] = take(M * n).reshape(M, n)
    if offset != len(body):
        raise CheckpointError("checkpoint has trailing data")
    return Checkpoint(grid, mix, SystemState(t, C, orbitals), dt_next, frame_energy)


def save(path: str | Path, cp: Checkpoint) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(cp))
    tmp.replace(path)


def load(path: str | Path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        return loads(data)
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from exc
