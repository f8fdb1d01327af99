"""Right-hand sides of the coupled coefficient and orbital equations of motion."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import densops, grid1d, rdm
from .densops import AXES, PAIR_TERMS, IntegralTables, Mixture
from .grid1d import Grid, InteractionSpec, OneBodyOperator


class HermiticityError(ValueError):
    pass


@dataclass
class SystemState:
    t: float
    C: np.ndarray
    orbitals: dict[str, np.ndarray]

    def copy(self) -> "SystemState":
        return SystemState(self.t, self.C.copy(), {k: v.copy() for k, v in self.orbitals.items()})


@dataclass
class MeanFieldBank:
    """``w[X][k, q](x)`` and ``u[X][k, q](x)``: the two- and three-body mean-field operators."""

    w: dict[str, np.ndarray] = field(default_factory=dict)
    u: dict[str, np.ndarray] = field(default_factory=dict)

    def total(self, x: str) -> np.ndarray:
        return self.w[x] + self.u[x]


def orthonormality_defect(orbitals: np.ndarray, dx: float) -> float:
    S = np.conj(orbitals) @ orbitals.T * dx
    return float(np.max(np.abs(S - np.eye(orbitals.shape[0]))))


def gram_schmidt(orbitals: np.ndarray, dx: float) -> np.ndarray:
    """Modified Gram-Schmidt under the grid inner product."""
    out = np.array(orbitals, dtype=complex)
    for j in range(out.shape[0]):
        for u in range(j):
            out[j] -= np.sum(np.conj(out[u]) * out[j]) * dx * out[u]
        norm = np.sqrt(np.sum(np.abs(out[j]) ** 2) * dx)
        if norm == 0:
            raise ValueError(f"orbital {j} is linearly dependent on the previous ones")
        out[j] /= norm
    return out


def regularized_inverse(rho: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Inverse of a Hermitian density matrix with eigenvalue floor
    ``1e-8 * max(trace / M, 1)``."""
    rho = np.asarray(rho)
    if np.max(np.abs(rho - rho.conj().T)) > tol * max(1.0, float(np.max(np.abs(rho)))):
        raise HermiticityError("density matrix is not Hermitian")
    M = rho.shape[0]
    eps = 1e-8 * max(np.trace(rho).real / M, 1.0)
    values, vectors = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    values = np.maximum(values, eps)
    return (vectors / values) @ vectors.conj().T


def build_mean_fields(mix: Mixture, rdms: rdm.RdmSet, bank: Mapping[str, np.ndarray],
                      n_points: int) -> MeanFieldBank:
    """Sum every RDM-weighted potential felt by each species.

    In a three-body force the species that supplies two particles gets
    weight 1 and the single species weight 1/2, as do intra-species
    three-body fields; two-body fields and the ABC force get weight 1.
    """
    out = MeanFieldBank()
    for x in mix.present:
        M = mix.spec(x).n_orbitals
        out.w[x] = np.zeros((M, M, n_points), dtype=complex)
        out.u[x] = np.zeros((M, M, n_points), dtype=complex)
    for x in mix.present:
        if f"W{x}@{x}" in bank:
            out.w[x] += np.einsum("kslq,slg->kqg", rdms.rho2[x], bank[f"W{x}@{x}"])
        if f"U{x}@{x}" in bank:
            out.u[x] += 0.5 * np.einsum("ksprlq,splrg->kqg", rdms.rho3[x], bank[f"U{x}@{x}"])
    for key, r in rdms.inter2.items():
        a, b = key
        if f"W{key}@{a}" in bank:
            out.w[a] += np.einsum("kaqb,abg->kqg", r, bank[f"W{key}@{a}"])
            out.w[b] += np.einsum("kaqb,kqg->abg", r, bank[f"W{key}@{b}"])
    for term, r in rdms.pair3.items():
        if f"U{term}@{term[0]}" not in bank:
            continue
        if term[0] == term[1]:
            x, y = term[0], term[2]
            # r[k, k', s, l, q, q']
            out.u[x] += np.einsum("kaslqb,salbg->kqg", r, bank[f"U{term}@{x}"])
            out.u[y] += 0.5 * np.einsum("kaslqb,ksqlg->abg", r, bank[f"U{term}@{y}"])
        else:
            x, y = term[0], term[1]
            # r[k, k', s', l', q, q']
            out.u[x] += 0.5 * np.einsum("kaslqb,asblg->kqg", r, bank[f"U{term}@{x}"])
            out.u[y] += np.einsum("kaslqb,ksqlg->abg", r, bank[f"U{term}@{y}"])
    if rdms.triple3 is not None and "UABC@A" in bank:
        r = rdms.triple3                         # r[k, k', k'', q, q', q'']
        out.u["A"] += np.einsum("kabqcd,abcdg->kqg", r, bank["UABC@A"])
        out.u["B"] += np.einsum("kabqcd,kbqdg->acg", r, bank["UABC@B"])
        out.u["C"] += np.einsum("kabqcd,kaqcg->bdg", r, bank["UABC@C"])
    return out


def project(orbitals: np.ndarray, f: np.ndarray, dx: float) -> np.ndarray:
    """``P f = f - sum_u phi_u <phi_u|f>``."""
    overlap = np.conj(orbitals) @ f.T * dx       # [u, j]
    return f - overlap.T @ orbitals


@dataclass
class Model:
    """A fully specified mixture: grid, species, one-body operators and interactions."""

    grid: Grid
    mixture: Mixture
    one_body: dict[str, OneBodyOperator]
    interactions: list[InteractionSpec] = field(default_factory=list)

    def __post_init__(self):
        for x in self.mixture.present:
            if x not in self.one_body:
                raise ValueError(f"species {x} has no one-body operator")
        for inter in self.interactions:
            for c in inter.species:
                if not self.mixture.has(c):
                    raise ValueError(f"interaction {inter.species} refers to undeclared species {c}")
        self._fermionic = {x: self.mixture.spec(x).is_fermion for x in self.mixture.present}

    @property
    def time_dependent(self) -> bool:
        return any(op.time_dependent for op in self.one_body.values()) or \
            any(i.time_dependent for i in self.interactions)

    def tables(self, state: SystemState) -> IntegralTables:
        return grid1d.compute_tables(self.grid, self.one_body, self.interactions, state.orbitals,
                                     state.t, self._fermionic)

    def potentials(self, state: SystemState) -> dict[str, np.ndarray]:
        return grid1d.compute_mean_field_potentials(self.grid, self.interactions, state.orbitals, state.t)

    def apply_hamiltonian(self, state: SystemState, tables: IntegralTables | None = None) -> np.ndarray:
        tables = self.tables(state) if tables is None else tables
        return densops.apply_hamiltonian(self.mixture, tables, state.C)

    def energy(self, state: SystemState, tables: IntegralTables | None = None) -> complex:
        HC = self.apply_hamiltonian(state, tables)
        return densops.inner(state.C, HC) / densops.inner(state.C, state.C)

    # -- equations of motion --

    def coeff_rhs(self, state: SystemState, tables: IntegralTables) -> np.ndarray:
        return coeff_rhs(self.mixture, state, tables)

    def evaluate(self, state: SystemState, imaginary: bool = False):
        """Return ``(dC/dt, {x: dphi/dt}, HC, tables)`` at ``state``."""
        tables = self.tables(state)
        HC = densops.apply_hamiltonian(self.mixture, tables, state.C)
        rdms = rdm.compute_rdms(self.mixture, state.C, tables)
        bank = self.potentials(state)
        fields = build_mean_fields(self.mixture, rdms, bank, self.grid.n_points)
        dphi = orbital_rhs(self.mixture, state, rdms, fields, self.one_body, self.grid.dx,
                           imaginary=imaginary)
        dC = -HC if imaginary else -1j * HC
        return dC, dphi, HC, tables

    def lagrange_multipliers(self, state: SystemState) -> dict[str, np.ndarray]:
        tables = self.tables(state)
        rdms = rdm.compute_rdms(self.mixture, state.C, tables)
        fields = build_mean_fields(self.mixture, rdms, self.potentials(state), self.grid.n_points)
        return lagrange_multipliers(self.mixture, state, rdms, fields, self.one_body, self.grid.dx)

    # -- flat vector packing for the integrators --

    def pack(self, state: SystemState) -> np.ndarray:
        parts = [state.C.ravel(order="F")]
        parts += [state.orbitals[x].ravel() for x in self.mixture.present]
        return np.concatenate(parts)

    def unpack(self, y: np.ndarray, t: float) -> SystemState:
        size = self.mixture.size
        C = y[:size].reshape(self.mixture.shape, order="F")
        orbitals = {}
        offset = size
        n = self.grid.n_points
        for x in self.mixture.present:
            M = self.mixture.spec(x).n_orbitals
            orbitals[x] = y[offset:offset + M * n].reshape(M, n)
            offset += M * n
        return SystemState(t, C, orbitals)


def coeff_rhs(mix: Mixture, state: SystemState, tables: IntegralTables) -> np.ndarray:
    """``dC/dt = -i H C``."""
    return -1j * densops.apply_hamiltonian(mix, tables, state.C)


def orbital_rhs(mix: Mixture, state: SystemState, rdms: rdm.RdmSet, fields: MeanFieldBank,
                one_body: Mapping[str, OneBodyOperator], dx: float,
                imaginary: bool = False) -> dict[str, np.ndarray]:
    """``i dphi_j/dt = P[h phi_j + sum_kq rho^-1_jk (mean field)_kq phi_q]``."""
    out = {}
    for x in mix.present:
        phi = state.orbitals[x]
        inv = regularized_inverse(rdms.rho1[x])
        mf = np.einsum("kqg,qg->kg", fields.total(x), phi)
        bracket = one_body[x].apply(phi, state.t) + inv @ mf
        P = project(phi, bracket, dx)
        out[x] = -P if imaginary else -1j * P
    return out


def lagrange_multipliers(mix: Mixture, state: SystemState, rdms: rdm.RdmSet, fields: MeanFieldBank,
                         one_body: Mapping[str, OneBodyOperator], dx: float) -> dict[str, np.ndarray]:
    """``mu_kj = <phi_j| sum_q (rho_kq h + mean field_kq) |phi_q>``."""
    out = {}
    for x in mix.present:
        phi = state.orbitals[x]
        hphi = one_body[x].apply(phi, state.t)
        g = rdms.rho1[x] @ hphi + np.einsum("kqg,qg->kg", fields.total(x), phi)
        out[x] = (g @ np.conj(phi).T * dx)       # [k, j]
    return out


def hermiticity_defect(mu: np.ndarray) -> float:
    return float(np.max(np.abs(mu - mu.conj().T)))
