"""Matrix-free action of density operators on the mixture coefficient tensor.

The coefficient tensor is a complex array of shape ``(n_A, n_B, n_C)``; an
absent species contributes an axis of length one.  Every operator is built
from one-body density operators ``rho_kq = a_k^dagger a_q`` whose action is a
gather over a cached transfer list ``(dest, src, factor)``.  No operator
matrix is ever assembled.

Index conventions (0-based for tables, 1-based for explicit ``k, q`` args):

* one-body table ``O[k, q]`` multiplies ``rho_kq``;
* intra two-body ``W[k, s, q, l]`` multiplies ``rho_kslq = a_k+ a_s+ a_l a_q``;
* intra three-body ``U[k, s, p, q, l, r]`` multiplies
  ``rho_ksprlq = a_k+ a_s+ a_p+ a_r a_l a_q``;
* inter two-body ``W[k, k', q, q']`` multiplies ``rho^X_kq rho^Y_k'q'``;
* pair three-body ``XXY``: ``U[k, k', s, q, q', l]`` multiplies
  ``rho^X_kslq rho^Y_k'q'``; ``XYY``: ``U[k, k', s', q, q', l']`` multiplies
  ``rho^X_kq rho^Y_k's'l'q'``;
* triple ``U[k, k', k'', q, q', q'']`` multiplies
  ``rho^A_kq rho^B_k'q' rho^C_k''q''``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from . import fock
from ._parallel import pmap
from .fock import SpeciesSpec

AXES = ("A", "B", "C")

PAIR_TERMS = ("AAB", "ABB", "AAC", "ACC", "BBC", "BCC")


class ContractError(ValueError):
    """A kernel was called with arguments that violate its contract."""


class MissingTableError(KeyError):
    pass


def axis_index(axis) -> int:
    if isinstance(axis, str):
        try:
            return AXES.index(axis.upper())
        except ValueError:
            raise ContractError(f"unknown species axis {axis!r}") from None
    if axis not in (0, 1, 2):
        raise ContractError(f"unknown species axis {axis!r}")
    return int(axis)


@dataclass(frozen=True)
class Mixture:
    """Up to three species on the fixed axes A, B, C."""

    species: tuple[SpeciesSpec | None, SpeciesSpec | None, SpeciesSpec | None]

    def __init__(self, *species: SpeciesSpec | None):
        if len(species) == 1 and isinstance(species[0], (tuple, list)):
            species = tuple(species[0])
        if not 1 <= len(species) <= 3:
            raise ContractError("a mixture holds one to three species")
        padded = tuple(species) + (None,) * (3 - len(species))
        if all(s is None for s in padded):
            raise ContractError("a mixture needs at least one species")
        object.__setattr__(self, "species", padded)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(1 if s is None else s.n_conf for s in self.species)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def present(self) -> tuple[str, ...]:
        return tuple(name for name, s in zip(AXES, self.species) if s is not None)

    def spec(self, axis) -> SpeciesSpec:
        s = self.species[axis_index(axis)]
        if s is None:
            raise ContractError(f"species {AXES[axis_index(axis)]} is not part of this mixture")
        return s

    def has(self, axis) -> bool:
        return self.species[axis_index(axis)] is not None

    def check(self, C: np.ndarray) -> np.ndarray:
        C = np.asarray(C)
        if C.shape != self.shape:
            raise ContractError(f"coefficient tensor has shape {C.shape}, expected {self.shape}")
        return C


def normalize(C: np.ndarray) -> np.ndarray:
    return C / np.sqrt(np.sum(np.abs(C) ** 2))


# -- one-body density operators ------------------------------------------------

@lru_cache(maxsize=None)
def transfer_list(spec: SpeciesSpec, k: int, q: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cached ``(dest, src, factor)`` for ``rho_kq`` with 0-based orbitals.

    ``C'[dest] = factor * C[src]``; all other destination entries vanish.
    """
    occ = fock.configurations(spec)
    if k == q:
        dest = np.nonzero(occ[:, k] > 0)[0]
        src = dest
        factor = occ[dest, k].astype(float)
    else:
        if spec.is_fermion:
            mask = (occ[:, k] == 1) & (occ[:, q] == 0)
        else:
            mask = occ[:, k] > 0
        dest = np.nonzero(mask)[0]
        src_occ = np.array(occ[dest])
        src_occ[:, k] -= 1
        src_occ[:, q] += 1
        src = fock._rank_many(src_occ, spec)
        if spec.is_fermion:
            lo, hi = min(k, q), max(k, q)
            between = src_occ[:, lo + 1:hi].sum(axis=1)
            factor = np.where(between % 2 == 1, -1.0, 1.0)
        else:
            factor = np.sqrt(occ[dest, k] * (occ[dest, q] + 1.0))
    for arr in (dest, src, factor):
        arr.flags.writeable = False
    return dest, src, factor


def _rho1(mix: Mixture, ax: int, k: int, q: int, C: np.ndarray) -> np.ndarray:
    """rho_kq on axis ``ax`` with 0-based orbitals; leading batch axes allowed."""
    dest, src, factor = transfer_list(mix.species[ax], k, q)
    lead = C.ndim - 3
    out = np.zeros(C.shape, dtype=complex)
    idx = (slice(None),) * (lead + ax)
    shape = [1] * C.ndim
    shape[lead + ax] = factor.size
    out[idx + (dest,)] = np.take(C, src, axis=lead + ax) * factor.reshape(shape)
    return out


def _check_orbital(mix: Mixture, ax: int, *indices: int) -> None:
    M = mix.spec(ax).n_orbitals
    for i in indices:
        if not 1 <= i <= M:
            raise ContractError(f"orbital index {i} outside 1..{M} on axis {AXES[ax]}")


def apply_rho1(mix: Mixture, axis, k: int, q: int, C: np.ndarray) -> np.ndarray:
    """``rho_kq C`` on one species axis (1-based ``k, q``)."""
    ax = axis_index(axis)
    _check_orbital(mix, ax, k, q)
    return _rho1(mix, ax, k - 1, q - 1, mix.check(C))


def _rho1_stack(mix: Mixture, ax: int, C: np.ndarray) -> np.ndarray:
    """All ``rho_kq C`` stacked as ``(M, M, *C.shape)``."""
    M = mix.species[ax].n_orbitals
    pairs = [(k, q) for k in range(M) for q in range(M)]
    results = pmap(lambda kq: _rho1(mix, ax, kq[0], kq[1], C), pairs)
    return np.stack(results).reshape((M, M) + C.shape)


def _rho1_weighted(mix: Mixture, ax: int, V: np.ndarray) -> np.ndarray:
    """``sum_kq rho_kq V[k, q]`` for a stack ``V`` of shape ``(M, M, ...)``."""
    M = mix.species[ax].n_orbitals
    pairs = [(k, q) for k in range(M) for q in range(M) if np.any(V[k, q])]
    out = np.zeros(V.shape[2:], dtype=complex)
    for term in pmap(lambda kq: _rho1(mix, ax, kq[0], kq[1], V[kq[0], kq[1]]), pairs):
        out += term
    return out


def _stack_apply(mix: Mixture, ax: int, S: np.ndarray) -> np.ndarray:
    """``rho_kq S[i]`` for every leading item ``i``: shape ``(M, M, *S.shape)``."""
    M = mix.species[ax].n_orbitals
    pairs = [(k, q) for k in range(M) for q in range(M)]
    results = pmap(lambda kq: _rho1(mix, ax, kq[0], kq[1], S), pairs)
    return np.stack(results).reshape((M, M) + S.shape)


# -- intra-species higher-body operators ---------------------------------------

def apply_rho2_intra(mix: Mixture, axis, k: int, s: int, l: int, q: int, C: np.ndarray) -> np.ndarray:
    """``rho_kslq C = (+-delta_sl rho_kq -+ rho_kl rho_sq) C``; ``rho_sq`` acts first."""
    ax = axis_index(axis)
    _check_orbital(mix, ax, k, s, l, q)
    C = mix.check(C)
    sign = mix.species[ax].statistics.sign
    out = -sign * _rho1(mix, ax, k - 1, l - 1, _rho1(mix, ax, s - 1, q - 1, C))
    if s == l:
        out += sign * _rho1(mix, ax, k - 1, q - 1, C)
    return out


def apply_rho3_intra(mix: Mixture, axis, k: int, s: int, p: int, r: int, l: int, q: int,
                     C: np.ndarray) -> np.ndarray:
    """``rho_ksprlq C`` via ``+-delta_pr rho_kslq - delta_pl rho_ksrq + rho_ksrl rho_pq``.

    In the last product ``rho_pq`` acts on ``C`` first.
    """
    ax = axis_index(axis)
    _check_orbital(mix, ax, k, s, p, r, l, q)
    C = mix.check(C)
    sign = mix.species[ax].statistics.sign
    out = apply_rho2_intra(mix, ax, k, s, r, l, _rho1(mix, ax, p - 1, q - 1, C))
    if p == r:
        out += sign * apply_rho2_intra(mix, ax, k, s, l, q, C)
    if p == l:
        out -= apply_rho2_intra(mix, ax, k, s, r, q, C)
    return out


def apply_rho_inter2(mix: Mixture, axis_x, kx: int, qx: int, axis_y, ky: int, qy: int,
                     C: np.ndarray) -> np.ndarray:
    """``rho^X_kq rho^Y_k'q' C`` for two distinct species (they commute)."""
    ax, ay = axis_index(axis_x), axis_index(axis_y)
    if ax == ay:
        raise ContractError("apply_rho_inter2 needs two distinct species axes")
    _check_orbital(mix, ax, kx, qx)
    _check_orbital(mix, ay, ky, qy)
    return _rho1(mix, ay, ky - 1, qy - 1, _rho1(mix, ax, kx - 1, qx - 1, mix.check(C)))


# -- operators built from integral tables --------------------------------------

def _check_table(table: np.ndarray, shape: Sequence[int], what: str) -> np.ndarray:
    table = np.asarray(table)
    if table.shape != tuple(shape):
        raise ContractError(f"{what} table has shape {table.shape}, expected {tuple(shape)}")
    return table


def apply_one_body_op(mix: Mixture, axis, O: np.ndarray, C: np.ndarray) -> np.ndarray:
    """``sum_kq O_kq rho_kq C``."""
    ax = axis_index(axis)
    M = mix.spec(ax).n_orbitals
    O = _check_table(O, (M, M), "one-body")
    C = mix.check(C)
    V = O[:, :, None, None, None] * C[None, None]
    return _rho1_weighted(mix, ax, V)


def _two_body(mix: Mixture, ax: int, W: np.ndarray, C: np.ndarray, X: np.ndarray | None = None) -> np.ndarray:
    """``sum_{ksql} W_ksql rho_kslq C`` (no 1/2 prefactor); ``X`` is the rho1 stack of C."""
    sign = mix.species[ax].statistics.sign
    if X is None:
        X = _rho1_stack(mix, ax, C)
    diag = np.einsum("ksqs->kq", W)
    V = -sign * np.einsum("ksql,sq...->kl...", W, X)
    V += sign * diag.reshape(diag.shape + (1,) * C.ndim) * C
    return _rho1_weighted(mix, ax, V)


def apply_two_body_op(mix: Mixture, axis, W: np.ndarray, C: np.ndarray) -> np.ndarray:
    """``(1/2) sum W_ksql rho_kslq C``."""
    ax = axis_index(axis)
    M = mix.spec(ax).n_orbitals
    W = _check_table(W, (M,) * 4, "two-body")
    C = mix.check(C)
    if mix.spec(ax).n_particles < 2:
        return np.zeros(C.shape, dtype=complex)
    return 0.5 * _two_body(mix, ax, W, C)


def apply_three_body_op(mix: Mixture, axis, U: np.ndarray, C: np.ndarray) -> np.ndarray:
    """``(1/6) sum U_kspqlr rho_ksprlq C`` through the two-level recursion."""
    ax = axis_index(axis)
    M = mix.spec(ax).n_orbitals
    U = _check_table(U, (M,) * 6, "three-body")
    C = mix.check(C)
    if mix.spec(ax).n_particles < 3:
        return np.zeros(C.shape, dtype=complex)
    sign = mix.species[ax].statistics.sign
    X = _rho1_stack(mix, ax, C)
    # +-delta_pr rho_kslq  ->  W'[k,s,q,l] = sum_p U[k,s,p,q,l,p]
    out = sign * _two_body(mix, ax, np.einsum("kspqlp->ksql", U), C, X)
    # -delta_pl rho_ksrq  ->  W''[k,s,q,r] = sum_p U[k,s,p,q,p,r]
    out -= _two_body(mix, ax, np.einsum("kspqpr->ksqr", U), C, X)
    # rho_ksrl rho_pq: V[k,s,r,l] = sum_pq U[k,s,p,q,l,r] rho_pq C, then rho2_ksrl
    V = np.einsum("kspqlr,pq...->ksrl...", U, X)
    out += _rho2_weighted(mix, ax, V)
    return out / 6.0


def _rho2_weighted(mix: Mixture, ax: int, V: np.ndarray) -> np.ndarray:
    """``sum_{kslq} rho_kslq V[k, s, l, q]`` for a stack of shape ``(M,)*4 + ...``."""
    sign = mix.species[ax].statistics.sign
    M = mix.species[ax].n_orbitals
    # +-delta_sl rho_kq  ->  sum_kq rho_kq sum_s V[k,s,s,q]
    out = sign * _rho1_weighted(mix, ax, np.einsum("kssq...->kq...", V))
    # -+ rho_kl rho_sq
    inner = np.zeros((M, M) + V.shape[4:], dtype=complex)
    for k in range(M):
        for l in range(M):
            inner[k, l] = _rho1_weighted(mix, ax, V[k, :, l, :])
    out -= sign * _rho1_weighted(mix, ax, inner)
    return out


def _inter_two_body(mix: Mixture, ax: int, ay: int, W: np.ndarray, C: np.ndarray,
                    Y: np.ndarray | None = None) -> np.ndarray:
    """``sum W[k,k',q,q'] rho^X_kq rho^Y_k'q' C``; ``Y`` is the Y-axis rho1 stack of C."""
    if Y is None:
        Y = _rho1_stack(mix, ay, C)
    V = np.einsum("kaqb,ab...->kq...", W, Y)
    return _rho1_weighted(mix, ax, V)


def apply_inter_two_body(mix: Mixture, axis_x, axis_y, W: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Inter-species two-body operator ``sum W_kk'qq' rho^X_kq rho^Y_k'q'``."""
    ax, ay = axis_index(axis_x), axis_index(axis_y)
    if ax == ay:
        raise ContractError("inter-species operator needs two distinct axes")
    MX, MY = mix.spec(ax).n_orbitals, mix.spec(ay).n_orbitals
    W = _check_table(W, (MX, MY, MX, MY), "inter-species two-body")
    return _inter_two_body(mix, ax, ay, W, mix.check(C))


def _pair_axes(term: str) -> tuple[int, int, bool]:
    """For ``XXY``/``XYY`` return (paired axis, single axis, paired-first flag)."""
    if len(term) != 3 or term not in PAIR_TERMS:
        raise ContractError(f"unknown pair three-body term {term!r}")
    if term[0] == term[1]:
        return AXES.index(term[0]), AXES.index(term[2]), True
    return AXES.index(term[1]), AXES.index(term[0]), False


def pair_table_to_paired_first(term: str, U: np.ndarray) -> np.ndarray:
    """Rewrite an ``XYY`` table in ``YYX`` order; ``XXY`` tables pass through."""
    _, _, paired_first = _pair_axes(term)
    if paired_first:
        return U
    # U[k, k', s', q, q', l'] -> U'[k', k, s', q', q, l']
    return np.transpose(U, (1, 0, 2, 4, 3, 5))


def pair_table_shape(mix: Mixture, term: str) -> tuple[int, ...]:
    a, b, c = (mix.spec(t).n_orbitals for t in term)
    return (a, c, b, a, c, b) if term[0] == term[1] else (a, b, c, a, b, c)


def apply_inter_three_body_pair(mix: Mixture, term: str, U: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Three-body force between two identical particles and a third distinct one.

    ``term`` is one of ``AAB, ABB, AAC, ACC, BBC, BCC``; the operator is
    ``(1/2) sum U rho^X_kslq rho^Y_k'q'`` (or the ``XYY`` analogue).
    """
    px, sy, _ = _pair_axes(term)
    C = mix.check(C)
    U = _check_table(U, pair_table_shape(mix, term), f"{term} three-body")
    U = pair_table_to_paired_first(term, U)
    if mix.spec(px).n_particles < 2:
        return np.zeros(C.shape, dtype=complex)
    sign = mix.species[px].statistics.sign
    Y = _rho1_stack(mix, sy, C)
    # +-delta_sl rho^X_kq rho^Y_k'q'
    out = sign * _inter_two_body(mix, px, sy, np.einsum("kasqbs->kaqb", U), C, Y)
    # -+ rho^X_kl rho^X_sq rho^Y_k'q'
    S = _stack_apply(mix, px, Y)              # S[s, q, k', q'] = rho^X_sq rho^Y_k'q' C
    V = np.einsum("kasqbl,sqab...->kl...", U, S)
    out -= sign * _rho1_weighted(mix, px, V)
    return 0.5 * out


def apply_inter_three_body_triple(mix: Mixture, U: np.ndarray, C: np.ndarray) -> np.ndarray:
    """``sum U[k,k',k'',q,q',q''] rho^A_kq rho^B_k'q' rho^C_k''q'' C``."""
    C = mix.check(C)
    MA, MB, MC = (mix.spec(a).n_orbitals for a in AXES)
    U = _check_table(U, (MA, MB, MC, MA, MB, MC), "ABC three-body")
    Z = _rho1_stack(mix, 2, C)
    S = _stack_apply(mix, 1, Z)               # S[k', q', k'', q''] = rho^B rho^C C
    V = np.einsum("kabqcd,acbd...->kq...", U, S)
    return _rho1_weighted(mix, 0, V)


# -- Hamiltonian ---------------------------------------------------------------

@dataclass
class IntegralTables:
    """Matrix elements of every Hamiltonian term in the current orbitals.

    ``h``, ``W``, ``U`` are keyed by species letter; ``W_inter`` by ``"AB"``,
    ``"AC"``, ``"BC"``; ``U_pair`` by the six ``XXY``/``XYY`` names;
    ``U_abc`` is the triple table or ``None``.
    """

    h: dict[str, np.ndarray] = field(default_factory=dict)
    W: dict[str, np.ndarray] = field(default_factory=dict)
    U: dict[str, np.ndarray] = field(default_factory=dict)
    W_inter: dict[str, np.ndarray] = field(default_factory=dict)
    U_pair: dict[str, np.ndarray] = field(default_factory=dict)
    U_abc: np.ndarray | None = None
    declared: frozenset[str] = frozenset()

    def terms(self) -> list[str]:
        names = [f"h{x}" for x in self.h] + [f"W{x}" for x in self.W] + [f"U{x}" for x in self.U]
        names += [f"W{x}" for x in self.W_inter] + [f"U{x}" for x in self.U_pair]
        if self.U_abc is not None:
            names.append("UABC")
        return names

    def scaled(self, factor: float) -> "IntegralTables":
        return IntegralTables(
            h={k: factor * v for k, v in self.h.items()},
            W={k: factor * v for k, v in self.W.items()},
            U={k: factor * v for k, v in self.U.items()},
            W_inter={k: factor * v for k, v in self.W_inter.items()},
            U_pair={k: factor * v for k, v in self.U_pair.items()},
            U_abc=None if self.U_abc is None else factor * self.U_abc,
            declared=self.declared)


def _validate_tables(mix: Mixture, tables: IntegralTables) -> None:
    for x in mix.present:
        if x not in tables.h:
            raise MissingTableError(f"one-body table for species {x} is missing")
    for name in tables.declared:
        key = name[1:]
        if name.startswith("W"):
            ok = key in (tables.W if len(key) == 1 else tables.W_inter)
        elif key == "ABC":
            ok = tables.U_abc is not None
        else:
            ok = key in (tables.U if len(key) == 1 else tables.U_pair)
        if not ok:
            raise MissingTableError(f"interaction {name} is declared but its table is missing")
    used = set(tables.h) | set(tables.W) | set(tables.U)
    used |= {c for key in list(tables.W_inter) + list(tables.U_pair) for c in key}
    if tables.U_abc is not None:
        used |= set("ABC")
    for x in used:
        if not mix.has(x):
            raise ContractError(f"table refers to species {x}, which is not in the mixture")


def hamiltonian_terms(mix: Mixture, tables: IntegralTables, C: np.ndarray) -> dict[str, np.ndarray]:
    """Each Hamiltonian contribution applied to ``C``, keyed by term name."""
    _validate_tables(mix, tables)
    C = mix.check(C)
    out: dict[str, np.ndarray] = {}
    for x in mix.present:
        ax = AXES.index(x)
        X = _rho1_stack(mix, ax, C) if x in tables.W else None
        out[f"h{x}"] = _rho1_weighted(mix, ax, tables.h[x][:, :, None, None, None] * C[None, None])
        if x in tables.W:
            out[f"W{x}"] = 0.5 * _two_body(mix, ax, tables.W[x], C, X)
        if x in tables.U:
            out[f"U{x}"] = apply_three_body_op(mix, ax, tables.U[x], C)
    for key, W in tables.W_inter.items():
        out[f"W{key}"] = apply_inter_two_body(mix, key[0], key[1], W, C)
    for key, U in tables.U_pair.items():
        out[f"U{key}"] = apply_inter_three_body_pair(mix, key, U, C)
    if tables.U_abc is not None:
        out["UABC"] = apply_inter_three_body_triple(mix, tables.U_abc, C)
    return out


def apply_hamiltonian(mix: Mixture, tables: IntegralTables, C: np.ndarray) -> np.ndarray:
    """Sum of all intra- and inter-species contributions, accumulated in fixed order."""
    out = np.zeros(mix.shape, dtype=complex)
    for term in hamiltonian_terms(mix, tables, C).values():
        out += term
    return out


def expectation(C: np.ndarray, apply_fn: Callable[[np.ndarray], np.ndarray]) -> complex:
    """``sum_J conj(C_J) (apply_fn(C))_J`` with pairwise (thread-independent) summation."""
    return complex(np.sum(np.conj(C) * apply_fn(C)))


def inner(a: np.ndarray, b: np.ndarray) -> complex:
    return complex(np.sum(np.conj(a) * b))
