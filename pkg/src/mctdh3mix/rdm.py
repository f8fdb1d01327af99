"""Reduced density matrices of the mixture state.

Every element is an expectation value ``<C| op C>`` contracted through the
density-operator kernels.  Products are split across the bra and the ket
using ``rho_kq^dagger = rho_qk`` so that only one- and two-body stacks of the
coefficient tensor are needed.

Index conventions (0-based, matching the integral tables):

* ``rdm1[k, q] = <rho_kq>``;
* ``rdm2[k, s, l, q] = <rho_kslq>`` and ``rdm3[k, s, p, r, l, q] = <rho_ksprlq>``;
* ``inter2[k, k', q, q'] = <rho^X_kq rho^Y_k'q'>``;
* ``XXY[k, k', s, l, q, q'] = <rho^X_kslq rho^Y_k'q'>``;
* ``XYY[k, k', s', l', q, q'] = <rho^X_kq rho^Y_k's'l'q'>``;
* ``ABC[k, k', k'', q, q', q''] = <rho^A_kq rho^B_k'q' rho^C_k''q''>``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .densops import (AXES, PAIR_TERMS, IntegralTables, Mixture, _rho1_stack, _stack_apply,
                      axis_index)


def _braket(bra: np.ndarray, ket: np.ndarray, nb: int, nk: int) -> np.ndarray:
    """``out[i, j] = sum conj(bra[i]) ket[j]`` over the trailing three tensor axes."""
    size = bra.shape[-3] * bra.shape[-2] * bra.shape[-1]
    b = bra.reshape(bra.shape[:nb] + (size,))
    k = ket.reshape(ket.shape[:nk] + (size,))
    return np.tensordot(np.conj(b), k, axes=([nb], [nk]))


def rho2_stack(mix: Mixture, ax: int, C: np.ndarray, X: np.ndarray | None = None) -> np.ndarray:
    """``Y[k, s, l, q] = rho_kslq C`` for all index tuples."""
    sign = mix.species[ax].statistics.sign
    M = mix.species[ax].n_orbitals
    if X is None:
        X = _rho1_stack(mix, ax, C)
    Z = _stack_apply(mix, ax, X)                 # Z[k, l, s, q] = rho_kl rho_sq C
    Y = -sign * np.transpose(Z, (0, 2, 1, 3) + tuple(range(4, Z.ndim)))
    eye = np.eye(M)
    Y += sign * np.einsum("sl,kq...->kslq...", eye, X)
    return Y


def rdm1(mix: Mixture, C: np.ndarray, axis) -> np.ndarray:
    ax = axis_index(axis)
    C = mix.check(C)
    X = _rho1_stack(mix, ax, C)
    return np.tensordot(np.conj(C), X, axes=([0, 1, 2], [2, 3, 4]))


def rdm2_intra(mix: Mixture, C: np.ndarray, axis) -> np.ndarray:
    """``<rho_kslq> = +-delta_sl rho_kq -+ <rho_lk C | rho_sq C>``."""
    ax = axis_index(axis)
    C = mix.check(C)
    sign = mix.species[ax].statistics.sign
    M = mix.species[ax].n_orbitals
    X = _rho1_stack(mix, ax, C)
    r1 = np.tensordot(np.conj(C), X, axes=([0, 1, 2], [2, 3, 4]))
    G = _braket(X, X, 2, 2)                      # G[l, k, s, q]
    out = -sign * np.transpose(G, (1, 2, 0, 3))
    out += sign * np.einsum("sl,kq->kslq", np.eye(M), r1)
    return out


def rdm3_intra(mix: Mixture, C: np.ndarray, axis) -> np.ndarray:
    """``<rho_ksprlq> = +-delta_pr r2_kslq - delta_pl r2_ksrq + <rho_lrsk C | rho_pq C>``."""
    ax = axis_index(axis)
    C = mix.check(C)
    sign = mix.species[ax].statistics.sign
    M = mix.species[ax].n_orbitals
    X = _rho1_stack(mix, ax, C)
    Y = rho2_stack(mix, ax, C, X)
    r2 = np.tensordot(np.conj(C), Y, axes=([0, 1, 2], [4, 5, 6]))
    G = _braket(Y, X, 4, 2)                      # G[l, r, s, k, p, q]
    out = np.transpose(G, (3, 2, 4, 1, 0, 5)).copy()
    eye = np.eye(M)
    out += sign * np.einsum("pr,kslq->ksprlq", eye, r2)
    out -= np.einsum("pl,ksrq->ksprlq", eye, r2)
    return out


def rdm_inter2(mix: Mixture, C: np.ndarray, axis_x, axis_y) -> np.ndarray:
    ax, ay = axis_index(axis_x), axis_index(axis_y)
    C = mix.check(C)
    X = _rho1_stack(mix, ax, C)
    Y = _rho1_stack(mix, ay, C)
    G = _braket(X, Y, 2, 2)                      # G[q, k, k', q']
    return np.transpose(G, (1, 2, 0, 3))


def rdm_inter3_pair(mix: Mixture, C: np.ndarray, term: str) -> np.ndarray:
    """``XXY`` or ``XYY`` three-body inter-species density matrix."""
    if term not in PAIR_TERMS:
        raise ValueError(f"unknown pair term {term!r}")
    C = mix.check(C)
    if term[0] == term[1]:
        px, sy = AXES.index(term[0]), AXES.index(term[2])
        Y2 = rho2_stack(mix, px, C)
        Y1 = _rho1_stack(mix, sy, C)
        G = _braket(Y2, Y1, 4, 2)                # G[q, l, s, k, k', q']
        return np.transpose(G, (3, 4, 2, 1, 0, 5))
    sx, py = AXES.index(term[0]), AXES.index(term[1])
    X1 = _rho1_stack(mix, sx, C)
    Y2 = rho2_stack(mix, py, C)
    G = _braket(X1, Y2, 2, 4)                    # G[q, k, k', s', l', q']
    return np.transpose(G, (1, 2, 3, 4, 0, 5))


def rdm_inter3_triple(mix: Mixture, C: np.ndarray) -> np.ndarray:
    C = mix.check(C)
    XA = _rho1_stack(mix, 0, C)
    S = _stack_apply(mix, 1, _rho1_stack(mix, 2, C))   # S[k', q', k'', q'']
    G = _braket(XA, S, 2, 4)                     # G[q, k, k', q', k'', q'']
    return np.transpose(G, (1, 2, 4, 0, 3, 5))


def natural_occupations(r1: np.ndarray) -> np.ndarray:
    """Eigenvalues of the one-body density matrix, largest first."""
    return np.sort(np.linalg.eigvalsh(0.5 * (r1 + r1.conj().T)))[::-1]


@dataclass
class RdmSet:
    rho1: dict[str, np.ndarray] = field(default_factory=dict)
    rho2: dict[str, np.ndarray] = field(default_factory=dict)
    rho3: dict[str, np.ndarray] = field(default_factory=dict)
    inter2: dict[str, np.ndarray] = field(default_factory=dict)
    pair3: dict[str, np.ndarray] = field(default_factory=dict)
    triple3: np.ndarray | None = None


def compute_rdms(mix: Mixture, C: np.ndarray, needed: IntegralTables | None = None) -> RdmSet:
    """All density matrices, or only those required by the terms in ``needed``."""
    out = RdmSet()
    for x in mix.present:
        out.rho1[x] = rdm1(mix, C, x)
        if needed is None or x in needed.W:
            out.rho2[x] = rdm2_intra(mix, C, x) if mix.spec(x).n_particles >= 2 else \
                np.zeros((mix.spec(x).n_orbitals,) * 4, dtype=complex)
        if needed is None or x in needed.U:
            out.rho3[x] = rdm3_intra(mix, C, x)
    for a, b in combinations(mix.present, 2):
        if needed is None or a + b in needed.W_inter:
            out.inter2[a + b] = rdm_inter2(mix, C, a, b)
    for term in PAIR_TERMS:
        if all(mix.has(c) for c in term) and (needed is None or term in needed.U_pair):
            out.pair3[term] = rdm_inter3_pair(mix, C, term)
    if len(mix.present) == 3 and (needed is None or needed.U_abc is not None):
        out.triple3 = rdm_inter3_triple(mix, C)
    return out


def energy_from_rdms(tables: IntegralTables, rdms: RdmSet) -> complex:
    """``<H>`` assembled from integral tables and density matrices."""
    e = 0j
    for x, h in tables.h.items():
        e += np.sum(h * rdms.rho1[x])
    for x, W in tables.W.items():
        # W[k, s, q, l] pairs with rho2[k, s, l, q]
        e += 0.5 * np.sum(W * np.transpose(rdms.rho2[x], (0, 1, 3, 2)))
    for x, U in tables.U.items():
        # U[k, s, p, q, l, r] pairs with rho3[k, s, p, r, l, q]
        e += np.sum(U * np.transpose(rdms.rho3[x], (0, 1, 2, 5, 4, 3))) / 6.0
    for key, W in tables.W_inter.items():
        e += np.sum(W * rdms.inter2[key])
    for key, U in tables.U_pair.items():
        # table [k, k', s, q, q', l] against density [k, k', s, l, q, q']
        e += 0.5 * np.sum(U * np.transpose(rdms.pair3[key], (0, 1, 2, 4, 5, 3)))
    if tables.U_abc is not None:
        e += np.sum(tables.U_abc * rdms.triple3)
    return complex(e)
