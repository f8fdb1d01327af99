"""Combinadic addressing of bosonic permanents and fermionic determinants.

Configurations are stored as occupation vectors for both statistics.  The
fermionic hole list is only a view used by :func:`rank_fermion`.  All public
orbital indices and addresses are 1-based; the vectorised helpers prefixed
with ``_`` work on 0-based arrays.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

INT64_MAX = np.iinfo(np.int64).max


class FockError(ValueError):
    pass


class CapacityError(FockError):
    """Configuration count does not fit into a signed 64-bit integer."""


class InvalidConfigurationError(FockError):
    pass


class AddressError(FockError):
    pass


class Statistics(enum.Enum):
    FERMION = "fermion"
    BOSON = "boson"

    @property
    def sign(self) -> int:
        """+1 for fermions, -1 for bosons (upper/lower sign convention)."""
        return 1 if self is Statistics.FERMION else -1


@dataclass(frozen=True)
class SpeciesSpec:
    statistics: Statistics
    n_particles: int
    n_orbitals: int

    def __post_init__(self):
        if isinstance(self.statistics, str):
            object.__setattr__(self, "statistics", Statistics(self.statistics.lower()))
        if self.n_particles < 1 or self.n_orbitals < 1:
            raise InvalidConfigurationError(
                f"particle and orbital counts must be positive, got N={self.n_particles}, "
                f"M={self.n_orbitals}")
        if self.is_fermion and self.n_particles > self.n_orbitals:
            raise InvalidConfigurationError(
                f"{self.n_particles} fermions do not fit into {self.n_orbitals} orbitals")

    @property
    def is_fermion(self) -> bool:
        return self.statistics is Statistics.FERMION

    @property
    def n_conf(self) -> int:
        return count_configs(self)


@lru_cache(maxsize=None)
def binomial_table(nmax: int) -> np.ndarray:
    """Pascal triangle ``T[n, k] = binomial(n, k)`` for ``0 <= n, k <= nmax``.

    Entries with ``k > n`` are zero.  Raises :class:`CapacityError` if any
    entry overflows int64.
    """
    table = [[0] * (nmax + 1) for _ in range(nmax + 1)]
    for n in range(nmax + 1):
        table[n][0] = 1
        for k in range(1, n + 1):
            value = table[n - 1][k - 1] + table[n - 1][k]
            if value > INT64_MAX:
                raise CapacityError(f"binomial({n}, {k}) exceeds the int64 range")
            table[n][k] = value
    out = np.array(table, dtype=np.int64)
    out.flags.writeable = False
    return out


def _table_for(spec: SpeciesSpec) -> np.ndarray:
    return binomial_table(spec.n_particles + spec.n_orbitals)


def count_configs(spec: SpeciesSpec) -> int:
    """Number of configurations: C(M, N) for fermions, C(N+M-1, N) for bosons."""
    table = _table_for(spec)
    n, m = spec.n_particles, spec.n_orbitals
    if spec.is_fermion:
        return int(table[m, n])
    return int(table[n + m - 1, n])


def rank_boson(occupations: Sequence[int], spec: SpeciesSpec) -> int:
    """Address of a bosonic occupation vector ``(n_1, ..., n_M)``."""
    n = [int(v) for v in occupations]
    N, M = spec.n_particles, spec.n_orbitals
    if len(n) != M or any(v < 0 for v in n) or sum(n) != N:
        raise InvalidConfigurationError(
            f"occupations {tuple(n)} are not a distribution of {N} bosons over {M} orbitals")
    table = _table_for(spec)
    address = 1
    partial = 0
    for k in range(1, M):
        partial += n[k - 1]
        top = N + M - 1 - k - partial
        if top >= M - k:
            address += int(table[top, M - k])
    return address


def rank_fermion(holes: Sequence[int], spec: SpeciesSpec) -> int:
    """Address of a determinant given by its strictly increasing hole positions."""
    i = [int(v) for v in holes]
    N, M = spec.n_particles, spec.n_orbitals
    if len(i) != M - N:
        raise InvalidConfigurationError(f"expected {M - N} holes, got {len(i)}")
    if any(not 1 <= v <= M for v in i) or any(a >= b for a, b in zip(i, i[1:])):
        raise InvalidConfigurationError(f"holes {tuple(i)} must be strictly increasing in 1..{M}")
    table = _table_for(spec)
    address = 1
    for j, hole in enumerate(i, start=1):
        top, bottom = M - hole, M - N + 1 - j
        if top >= bottom:
            address += int(table[top, bottom])
    return address


def holes_from_occupations(occupations: Sequence[int]) -> tuple[int, ...]:
    if any(v not in (0, 1) for v in occupations):
        raise InvalidConfigurationError(f"fermionic occupations must be 0/1, got {tuple(occupations)}")
    return tuple(k for k, v in enumerate(occupations, start=1) if v == 0)


def occupations_from_holes(holes: Sequence[int], n_orbitals: int) -> tuple[int, ...]:
    occ = [1] * n_orbitals
    for h in holes:
        occ[h - 1] = 0
    return tuple(occ)


def rank(occupations: Sequence[int], spec: SpeciesSpec) -> int:
    """Address of an occupation vector for either statistics."""
    if spec.is_fermion:
        occ = tuple(int(v) for v in occupations)
        if len(occ) != spec.n_orbitals or sum(occ) != spec.n_particles:
            raise InvalidConfigurationError(
                f"occupations {occ} are not {spec.n_particles} fermions in {spec.n_orbitals} orbitals")
        return rank_fermion(holes_from_occupations(occ), spec)
    return rank_boson(occupations, spec)


def unrank(address: int, spec: SpeciesSpec) -> tuple[int, ...]:
    """Occupation vector of the configuration with the given 1-based address."""
    n_conf = count_configs(spec)
    if not 1 <= address <= n_conf:
        raise AddressError(f"address {address} outside 1..{n_conf}")
    occ = _unrank_many(np.array([address - 1], dtype=np.int64), spec)[0]
    return tuple(int(v) for v in occ)


def fermion_phase(k: int, q: int, occupations: Sequence[int]) -> int:
    """Sign of ``a_k^dagger a_q`` acting on a determinant (1-based orbitals).

    ``occupations`` is the source configuration: orbital ``q`` must be
    occupied and ``k`` empty.  The sign is ``(-1)**d`` with ``d`` the number
    of fermions strictly between ``k`` and ``q``.
    """
    occ = list(occupations)
    if k == q:
        raise InvalidConfigurationError("fermion_phase needs k != q")
    if occ[q - 1] != 1 or occ[k - 1] != 0:
        raise InvalidConfigurationError(
            f"transfer {q}->{k} is not allowed on {tuple(occ)} (zero amplitude)")
    lo, hi = min(k, q), max(k, q)
    d = sum(occ[lo:hi - 1])
    return -1 if d % 2 else 1


# -- vectorised helpers (0-based orbitals, 0-based addresses) -----------------

def _rank_many(occ: np.ndarray, spec: SpeciesSpec) -> np.ndarray:
    """0-based addresses of a stack of occupation vectors, shape (n, M)."""
    occ = np.asarray(occ, dtype=np.int64)
    N, M = spec.n_particles, spec.n_orbitals
    table = _table_for(spec)
    out = np.zeros(occ.shape[0], dtype=np.int64)
    if spec.is_fermion:
        # holes in increasing order; j-th hole contributes binom(M - i_j, M - N + 1 - j)
        is_hole = occ == 0
        j = np.cumsum(is_hole, axis=1)
        orbital = np.arange(1, M + 1)
        top = np.broadcast_to(M - orbital, occ.shape)
        bottom = M - N + 1 - j
        valid = is_hole & (bottom >= 0) & (top >= 0)
        terms = np.where(valid, table[np.clip(top, 0, None), np.clip(bottom, 0, None)], 0)
        out += terms.sum(axis=1)
    else:
        partial = np.cumsum(occ, axis=1)
        for k in range(1, M):
            top = N + M - 1 - k - partial[:, k - 1]
            out += np.where(top >= 0, table[np.clip(top, 0, None), M - k], 0)
    return out


def _unrank_many(index: np.ndarray, spec: SpeciesSpec) -> np.ndarray:
    """Occupation vectors (n, M) for 0-based addresses by greedy combinadic decoding."""
    index = np.asarray(index, dtype=np.int64)
    N, M = spec.n_particles, spec.n_orbitals
    table = _table_for(spec)
    rem = index.copy()
    count = index.shape[0]
    if spec.is_fermion:
        occ = np.ones((count, M), dtype=np.int64)
        upper = np.full(count, M, dtype=np.int64)  # c_j must be < previous c
        for j in range(1, M - N + 1):
            bottom = M - N + 1 - j
            # largest c < upper with binom(c, bottom) <= rem
            chosen = np.full(count, -1, dtype=np.int64)
            for c in range(M - 1, -1, -1):
                ok = (chosen < 0) & (c < upper) & (table[c, bottom] <= rem)
                chosen[ok] = c
            rem -= table[chosen, bottom]
            upper = chosen
            occ[np.arange(count), M - chosen - 1] = 0
        return occ
    occ = np.zeros((count, M), dtype=np.int64)
    remaining = np.full(count, N, dtype=np.int64)
    for k in range(1, M):
        # smallest n_k with binom(R - n_k + M - 1 - k, M - k) <= rem
        chosen = np.full(count, -1, dtype=np.int64)
        for nk in range(0, N + 1):
            top = remaining - nk + M - 1 - k
            term = np.where(top >= 0, table[np.clip(top, 0, None), M - k], 0)
            ok = (chosen < 0) & (nk <= remaining) & (term <= rem)
            chosen[ok] = nk
        top = remaining - chosen + M - 1 - k
        rem -= np.where(top >= 0, table[np.clip(top, 0, None), M - k], 0)
        occ[:, k - 1] = chosen
        remaining -= chosen
    occ[:, M - 1] = remaining
    return occ


@lru_cache(maxsize=64)
def configurations(spec: SpeciesSpec) -> np.ndarray:
    """All occupation vectors in address order, shape (n_conf, M), read-only."""
    n_conf = count_configs(spec)
    occ = _unrank_many(np.arange(n_conf, dtype=np.int64), spec)
    occ.flags.writeable = False
    return occ
