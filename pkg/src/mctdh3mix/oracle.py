"""Independent dense reference for small mixtures.

Nothing here touches the combinadic addressing or the density-operator
recursions.  Configurations are enumerated with :mod:`itertools` and sorted
in descending lexicographic order (which is the address order), creation and
annihilation operators are explicit sparse matrices between particle-number
sectors, and every k-body operator is the literal product of k creators and
k annihilators.  The mixture Hamiltonian is a sum of Kronecker products with
species A as the fastest index.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .densops import AXES, IntegralTables, Mixture
from .fock import SpeciesSpec

MAX_DENSE_DIM = 20000


class OracleCapacityError(ValueError):
    pass


@lru_cache(maxsize=None)
def sector(is_fermion: bool, n_particles: int, n_orbitals: int) -> tuple[tuple[int, ...], ...]:
    """All occupation vectors with ``n_particles`` in address order."""
    if n_particles < 0:
        return ()
    if is_fermion:
        configs = [tuple(1 if i in chosen else 0 for i in range(n_orbitals))
                   for chosen in itertools.combinations(range(n_orbitals), n_particles)]
    else:
        configs = []
        for bars in itertools.combinations(range(n_particles + n_orbitals - 1), n_orbitals - 1):
            edges = (-1,) + bars + (n_particles + n_orbitals - 1,)
            configs.append(tuple(edges[i + 1] - edges[i] - 1 for i in range(n_orbitals)))
    return tuple(sorted(configs, reverse=True))


def _annihilator(is_fermion: bool, n: int, m: int, q: int) -> np.ndarray:
    """Dense matrix of ``a_q`` from the ``n``-particle to the ``n-1`` sector."""
    src = sector(is_fermion, n, m)
    dst = sector(is_fermion, n - 1, m)
    index = {c: i for i, c in enumerate(dst)}
    out = np.zeros((len(dst), len(src)))
    for j, occ in enumerate(src):
        if occ[q] == 0:
            continue
        new = list(occ)
        new[q] -= 1
        if is_fermion:
            # move a_q past the creators standing left of orbital q
            value = (-1.0) ** sum(occ[:q])
        else:
            value = math.sqrt(occ[q])
        out[index[tuple(new)], j] = value
    return out


@lru_cache(maxsize=None)
def annihilation_strings(spec: SpeciesSpec, order: int) -> np.ndarray:
    """``S[i_1, ..., i_order] = a_{i_1} ... a_{i_order}`` as a dense stack.

    The stack maps the ``N`` sector to ``N - order``; it is empty when
    ``order > N``.
    """
    f, n, m = spec.is_fermion, spec.n_particles, spec.n_orbitals
    dims = [len(sector(f, n - j, m)) for j in range(order + 1)]
    out = np.zeros((m,) * order + (dims[-1], dims[0]))
    if order > n:
        return out
    for idx in itertools.product(range(m), repeat=order):
        mat = np.eye(dims[0])
        # rightmost annihilator acts first
        for j, q in enumerate(reversed(idx)):
            mat = _annihilator(f, n - j, m, q) @ mat
        out[idx] = mat
    return out


def one_body_matrix(spec: SpeciesSpec, O: np.ndarray) -> np.ndarray:
    """``sum_kq O_kq a_k^+ a_q`` in the N-particle sector."""
    a = annihilation_strings(spec, 1)
    return np.einsum("kq,kab,qac->bc", O, a, a)


def rho1_matrices(spec: SpeciesSpec) -> np.ndarray:
    a = annihilation_strings(spec, 1)
    return np.einsum("kab,qac->kqbc", a, a)


def two_body_matrix(spec: SpeciesSpec, W: np.ndarray) -> np.ndarray:
    """``(1/2) sum W_ksql a_k^+ a_s^+ a_l a_q``; ``a_k^+ a_s^+ = (a_s a_k)^T``."""
    a2 = annihilation_strings(spec, 2)
    G = np.einsum("ksql,lqab->ksab", W, a2)
    return 0.5 * np.einsum("skab,ksac->bc", a2, G)


def three_body_matrix(spec: SpeciesSpec, U: np.ndarray) -> np.ndarray:
    """``(1/6) sum U_kspqlr a_k^+ a_s^+ a_p^+ a_r a_l a_q``."""
    a3 = annihilation_strings(spec, 3)
    G = np.einsum("kspqlr,rlqab->kspab", U, a3)
    return np.einsum("pskab,kspac->bc", a3, G) / 6.0


def rho2_matrices(spec: SpeciesSpec) -> np.ndarray:
    """``R[k, s, l, q] = a_k^+ a_s^+ a_l a_q``."""
    a2 = annihilation_strings(spec, 2)
    return np.einsum("skab,lqac->kslqbc", a2, a2)


def normal_ordered(spec: SpeciesSpec, creators: tuple[int, ...], annihilators: tuple[int, ...]) -> np.ndarray:
    """``a_c1^+ ... a_cn^+ a_a1 ... a_an`` (0-based orbitals) in the N-particle sector."""
    if len(creators) != len(annihilators):
        raise ValueError("normal-ordered products need as many creators as annihilators")
    strings = annihilation_strings(spec, len(creators))
    return strings[tuple(reversed(creators))].T @ strings[tuple(annihilators)]


def _embed(mix: Mixture, ops: dict[int, np.ndarray]) -> sp.csr_matrix:
    """Kronecker embedding of per-axis operators; species A is the fastest index."""
    out = None
    for ax in range(3):
        dim = mix.shape[ax]
        mat = sp.csr_matrix(ops[ax]) if ax in ops else sp.identity(dim, format="csr")
        out = mat if out is None else sp.kron(mat, out, format="csr")
    return out


def _pair_product(mix: Mixture, ax: int, X: np.ndarray, ay: int, Y: np.ndarray) -> sp.csr_matrix:
    """``sum_i X[i] (x) Y[i]`` embedded, for stacks over a common flat index."""
    total = sp.csr_matrix((mix.size, mix.size), dtype=complex)
    for i in range(X.shape[0]):
        if not np.any(Y[i]) or not np.any(X[i]):
            continue
        total = total + _embed(mix, {ax: X[i], ay: Y[i]})
    return total


def build_hamiltonian(mix: Mixture, tables: IntegralTables) -> sp.csr_matrix:
    """Sparse Hamiltonian matrix acting on ``C.ravel(order="F")``."""
    if mix.size > MAX_DENSE_DIM:
        raise OracleCapacityError(f"dimension {mix.size} exceeds the oracle limit {MAX_DENSE_DIM}")
    H = sp.csr_matrix((mix.size, mix.size), dtype=complex)
    for x in mix.present:
        ax = AXES.index(x)
        spec = mix.spec(ax)
        single = one_body_matrix(spec, tables.h[x]).astype(complex)
        if x in tables.W:
            single = single + two_body_matrix(spec, tables.W[x])
        if x in tables.U:
            single = single + three_body_matrix(spec, tables.U[x])
        H = H + _embed(mix, {ax: single})
    for key, W in tables.W_inter.items():
        ax, ay = AXES.index(key[0]), AXES.index(key[1])
        RX, RY = rho1_matrices(mix.spec(ax)), rho1_matrices(mix.spec(ay))
        MX = RX.shape[0]
        OY = np.einsum("kaqb,abij->kqij", W, RY).reshape(MX * MX, *RY.shape[2:])
        H = H + _pair_product(mix, ax, RX.reshape(MX * MX, *RX.shape[2:]), ay, OY)
    for key, U in tables.U_pair.items():
        if key[0] == key[1]:
            px, sy = AXES.index(key[0]), AXES.index(key[2])
            R2, R1 = rho2_matrices(mix.spec(px)), rho1_matrices(mix.spec(sy))
            # U[k, k', s, q, q', l] rho^X_kslq rho^Y_k'q'
            OY = 0.5 * np.einsum("kasqbl,abij->kslqij", U, R1)
        else:
            px, sy = AXES.index(key[1]), AXES.index(key[0])
            R2, R1 = rho2_matrices(mix.spec(px)), rho1_matrices(mix.spec(sy))
            # U[k, k', s', q, q', l'] rho^X_kq rho^Y_k's'l'q'
            OY = 0.5 * np.einsum("kasqbl,kqij->aslbij", U, R1)
        M = R2.shape[0]
        H = H + _pair_product(mix, px, R2.reshape(M ** 4, *R2.shape[4:]),
                              sy, OY.reshape(M ** 4, *OY.shape[4:]))
    if tables.U_abc is not None:
        RA, RB, RC = (rho1_matrices(mix.spec(a)) for a in range(3))
        MA, MB = RA.shape[0], RB.shape[0]
        for k, q in itertools.product(range(MA), repeat=2):
            for k2, q2 in itertools.product(range(MB), repeat=2):
                OC = np.einsum("cd,cdij->ij", tables.U_abc[k, k2, :, q, q2, :], RC)
                if not np.any(OC) or not np.any(RA[k, q]) or not np.any(RB[k2, q2]):
                    continue
                H = H + _embed(mix, {0: RA[k, q], 1: RB[k2, q2], 2: OC})
    return H.tocsr()


def build_dense(mix: Mixture, tables: IntegralTables) -> np.ndarray:
    """Dense Hamiltonian matrix over the flattened ``(J_A, J_B, J_C)`` index (A fastest)."""
    return build_hamiltonian(mix, tables).toarray()


def apply(mix: Mixture, tables: IntegralTables, C: np.ndarray) -> np.ndarray:
    H = build_hamiltonian(mix, tables)
    return (H @ np.asarray(C).ravel(order="F")).reshape(mix.shape, order="F")


def exact_ground(mix: Mixture, tables: IntegralTables) -> tuple[float, np.ndarray]:
    """Lowest eigenvalue and eigenvector (reshaped to the mixture tensor)."""
    values, vectors = scipy.linalg.eigh(build_dense(mix, tables))
    return float(values[0]), vectors[:, 0].reshape(mix.shape, order="F")


def exact_propagate(mix: Mixture, tables: IntegralTables, C0: np.ndarray,
                    times) -> list[np.ndarray]:
    """``exp(-iHt) C0`` for each requested time (time-independent ``H``)."""
    values, vectors = scipy.linalg.eigh(build_dense(mix, tables))
    c = vectors.conj().T @ np.asarray(C0).ravel(order="F")
    return [(vectors @ (np.exp(-1j * values * t) * c)).reshape(mix.shape, order="F")
            for t in times]


# -- basis changes -------------------------------------------------------------

def permanent(a: np.ndarray) -> complex:
    """Ryser's formula."""
    n = a.shape[0]
    if n == 0:
        return 1.0
    total = 0.0
    for subset in range(1, 1 << n):
        cols = [j for j in range(n) if subset >> j & 1]
        total += (-1) ** len(cols) * np.prod(a[:, cols].sum(axis=1))
    return (-1) ** n * total


def _config_overlap(is_fermion: bool, S: np.ndarray, occ_left, occ_right) -> complex:
    """``<left|right>`` for configurations built on orbital sets with overlap ``S``."""
    rows = [i for i, n in enumerate(occ_left) for _ in range(n)]
    cols = [j for j, n in enumerate(occ_right) for _ in range(n)]
    sub = S[np.ix_(rows, cols)]
    if is_fermion:
        return np.linalg.det(sub)
    norm = math.prod(math.factorial(n) for n in occ_left) * math.prod(math.factorial(n) for n in occ_right)
    return permanent(sub) / math.sqrt(norm)


def configuration_overlap_matrix(spec_left: SpeciesSpec, spec_right: SpeciesSpec,
                                 S: np.ndarray) -> np.ndarray:
    """Matrix of ``<Phi_I|Phi'_J>`` given ``S[i, j] = <phi_i|phi'_j>``."""
    f = spec_left.is_fermion
    left = sector(f, spec_left.n_particles, spec_left.n_orbitals)
    right = sector(f, spec_right.n_particles, spec_right.n_orbitals)
    out = np.zeros((len(left), len(right)), dtype=complex)
    for i, a in enumerate(left):
        for j, b in enumerate(right):
            out[i, j] = _config_overlap(f, S, a, b)
    return out


def to_primitive(mix: Mixture, C: np.ndarray, orbitals: dict[str, np.ndarray], dx: float) -> np.ndarray:
    """Express a state given in time-dependent orbitals in the grid-point basis.

    ``orbitals[x]`` has shape ``(M, n)``.  The primitive orbitals are the
    grid points normalised by ``sqrt(dx)``, so ``S[p, j] = sqrt(dx) phi_j(x_p)``.
    """
    out = np.asarray(C, dtype=complex)
    species = []
    for ax in range(3):
        spec = mix.species[ax]
        if spec is None:
            species.append(None)
            continue
        phi = orbitals[AXES[ax]]
        prim = SpeciesSpec(spec.statistics, spec.n_particles, phi.shape[1])
        species.append(prim)
        T = configuration_overlap_matrix(prim, spec, np.sqrt(dx) * phi.T)
        out = np.moveaxis(np.tensordot(T, out, axes=([1], [ax])), 0, ax)
    return out


def primitive_mixture(mix: Mixture, n_points: int) -> Mixture:
    return Mixture(*(None if s is None else SpeciesSpec(s.statistics, s.n_particles, n_points)
                     for s in mix.species))
