"""Uniform 1D grids, one-body operators, interaction kernels and orbital integrals.

Orbitals of one species are stored as a complex array of shape ``(M, n)``
holding ``phi_k(x_g)``; integrals use the rectangle rule with weight ``dx``.

Coordinate conventions for the tables (conjugated orbitals first, then the
unconjugated ones at the same coordinates):

* ``W[k, s, q, l] = <k(x) s(x')| W |q(x) l(x')>``, likewise for ``W^XY[k, k', q, q']``;
* ``U[k, s, p, q, l, r]`` with ``k, q`` at ``x``, ``s, l`` at ``x'`` and ``p, r`` at ``x''``;
* ``U^XXY[k, k', s, q, q', l]`` with ``(k, q)`` of X at ``x``, ``(k', q')`` of Y at
  ``x'`` and ``(s, l)`` of X at ``x''``; ``U^XYY[k, k', s', q, q', l']`` puts the
  second Y pair at ``x''``; ``U^ABC`` follows the species order.

All kernels are real and symmetric under exchange of coordinates.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from ._parallel import pmap
from .densops import AXES, PAIR_TERMS, IntegralTables

MAX_TRIPLE_GAUSSIAN_POINTS = 1024


class GridError(ValueError):
    pass


class Boundary(enum.Enum):
    HARD_WALL = "hardwall"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class Grid:
    n_points: int
    x_min: float
    x_max: float
    boundary: Boundary = Boundary.HARD_WALL

    def __post_init__(self):
        if isinstance(self.boundary, str):
            object.__setattr__(self, "boundary", Boundary(self.boundary.lower().replace("_", "")))
        if self.n_points < 4:
            raise GridError(f"a grid needs at least 4 points, got {self.n_points}")
        if not self.x_max > self.x_min:
            raise GridError(f"x_max ({self.x_max}) must exceed x_min ({self.x_min})")

    @property
    def dx(self) -> float:
        span = self.x_max - self.x_min
        if self.boundary is Boundary.HARD_WALL:
            return span / (self.n_points - 1)
        return span / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def box_length(self) -> float:
        """Distance between the walls; the wavefunction vanishes one spacing
        outside each end point."""
        if self.boundary is Boundary.HARD_WALL:
            return (self.n_points + 1) * self.dx
        return self.n_points * self.dx


# -- one-body operators --------------------------------------------------------

Potential = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class HarmonicTrap:
    """``V = m omega^2 (x - x0(t))^2 / 2`` with optional shaking ``x0(t) = c + a sin(f t)``."""

    omega: float = 1.0
    center: float = 0.0
    shake_amplitude: float = 0.0
    shake_frequency: float = 0.0
    mass: float = 1.0

    def __call__(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        x0 = self.center + self.shake_amplitude * math.sin(self.shake_frequency * t)
        return 0.5 * self.mass * self.omega ** 2 * (x - x0) ** 2

    @property
    def time_dependent(self) -> bool:
        return self.shake_amplitude != 0.0 and self.shake_frequency != 0.0


def no_potential(x: np.ndarray, t: float = 0.0) -> np.ndarray:
    return np.zeros_like(x)


def kinetic_matrix(grid: Grid, mass: float = 1.0) -> sp.csr_matrix:
    """``-(1/2m) d^2/dx^2`` by second-order central differences."""
    n, dx = grid.n_points, grid.dx
    main = np.full(n, -2.0)
    off = np.ones(n - 1)
    lap = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    if grid.boundary is Boundary.PERIODIC:
        lap[0, n - 1] = 1.0
        lap[n - 1, 0] = 1.0
    return (-0.5 / mass / dx ** 2 * lap).tocsr()


@dataclass
class OneBodyOperator:
    """``h(t) = T + V(x, t)`` on a grid; immutable after construction."""

    grid: Grid
    potential: Potential = no_potential
    mass: float = 1.0
    kinetic: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        self.kinetic = kinetic_matrix(self.grid, self.mass)

    def potential_values(self, t: float = 0.0) -> np.ndarray:
        return np.asarray(self.potential(self.grid.x, t), dtype=float)

    def matrix(self, t: float = 0.0) -> sp.csr_matrix:
        return (self.kinetic + sp.diags(self.potential_values(t))).tocsr()

    def apply(self, phi: np.ndarray, t: float = 0.0) -> np.ndarray:
        """``h phi`` for orbitals stacked along the first axis, shape ``(M, n)``."""
        phi = np.asarray(phi)
        return (self.kinetic @ phi.T).T + self.potential_values(t) * phi

    @property
    def time_dependent(self) -> bool:
        return bool(getattr(self.potential, "time_dependent", False))


def build_one_body(grid: Grid, potential: Potential | None = None, mass: float = 1.0) -> OneBodyOperator:
    return OneBodyOperator(grid, potential or no_potential, mass)


def compute_h_elements(orbitals: np.ndarray, op: OneBodyOperator, t: float = 0.0) -> np.ndarray:
    """``h_kq = sum_g conj(phi_k) (h phi_q) dx``."""
    return np.conj(orbitals) @ op.apply(orbitals, t).T * op.grid.dx


# -- interactions ----------------------------------------------------------------

class Kind(enum.Enum):
    CONTACT = "contact"
    GAUSSIAN = "gaussian"
    CONTACT_TRIPLE = "contact_triple"
    GAUSSIAN_TRIPLE = "gaussian_triple"

    @property
    def bodies(self) -> int:
        return 3 if self in (Kind.CONTACT_TRIPLE, Kind.GAUSSIAN_TRIPLE) else 2

    @property
    def gaussian(self) -> bool:
        return self in (Kind.GAUSSIAN, Kind.GAUSSIAN_TRIPLE)


class Ramp(enum.Enum):
    CONSTANT = "constant"
    LINEAR = "linear"
    SINUSOIDAL = "sinusoidal"


@dataclass(frozen=True)
class InteractionSpec:
    """One Hamiltonian interaction term.

    ``species`` lists one letter per interacting particle: ``"AA"`` is the
    intra-species two-body force of A, ``"AAA"`` its three-body force,
    ``"AB"`` the A-B two-body force, ``"AAB"``/``"ABB"``/``"ABC"`` the
    inter-species three-body forces.

    The strength at time ``t`` is ``strength * ramp(t)`` with ``ramp = 1``
    (constant), ``min(t / ramp_time, 1)`` (linear) or
    ``1 + ramp_amplitude * sin(ramp_frequency * t)`` (sinusoidal).
    """

    species: str
    kind: Kind
    strength: float
    sigma: float = 1.0
    ramp: Ramp = Ramp.CONSTANT
    ramp_time: float = 1.0
    ramp_amplitude: float = 0.0
    ramp_frequency: float = 0.0

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", Kind(self.kind.lower()))
        if isinstance(self.ramp, str):
            object.__setattr__(self, "ramp", Ramp(self.ramp.lower()))
        tag = "".join(sorted(self.species.upper()))
        object.__setattr__(self, "species", tag)
        if any(c not in AXES for c in tag) or len(tag) not in (2, 3):
            raise ValueError(f"interaction species tag {self.species!r} is not valid")
        if len(tag) != self.kind.bodies:
            raise ValueError(f"{self.kind.value} is a {self.kind.bodies}-body kernel "
                             f"but {tag} names {len(tag)} particles")
        if len(tag) == 3 and len(set(tag)) == 2 and tag not in PAIR_TERMS:
            raise ValueError(f"unsupported three-body tag {tag}")
        if self.kind.gaussian and not self.sigma > 0:
            raise ValueError(f"Gaussian kernels need sigma > 0, got {self.sigma}")
        if self.ramp is Ramp.LINEAR and not self.ramp_time > 0:
            raise ValueError("a linear ramp needs ramp_time > 0")

    @property
    def term(self) -> str:
        """Hamiltonian term name: ``WA``, ``UA``, ``WAB``, ``UAAB``, ``UABC`` ..."""
        tag = self.species
        if len(set(tag)) == 1:
            return ("W" if len(tag) == 2 else "U") + tag[0]
        return ("W" if len(tag) == 2 else "U") + tag

    def strength_at(self, t: float) -> float:
        if self.ramp is Ramp.CONSTANT:
            return self.strength
        if self.ramp is Ramp.LINEAR:
            return self.strength * min(t / self.ramp_time, 1.0)
        return self.strength * (1.0 + self.ramp_amplitude * math.sin(self.ramp_frequency * t))

    @property
    def time_dependent(self) -> bool:
        if self.ramp is Ramp.LINEAR:
            return True
        return self.ramp is Ramp.SINUSOIDAL and self.ramp_amplitude != 0 and self.ramp_frequency != 0


def gaussian_kernel(grid: Grid, sigma: float) -> np.ndarray:
    """``g(x, x') = exp(-(x - x')^2 / 2 sigma^2)`` with minimum-image distance if periodic."""
    x = grid.x
    d = x[:, None] - x[None, :]
    if grid.boundary is Boundary.PERIODIC:
        L = grid.box_length
        d = d - L * np.round(d / L)
    return np.exp(-d ** 2 / (2.0 * sigma ** 2))


def pair_densities(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``D[k, q](x) = conj(a_k(x)) b_q(x)``, shape ``(M_a, M_b, n)``."""
    return np.conj(a)[:, None, :] * b[None, :, :]


def two_body_field(grid: Grid, inter: InteractionSpec, d: np.ndarray, t: float = 0.0) -> np.ndarray:
    """``int W(x, x') d(x') dx'`` for densities stacked on leading axes."""
    lam = inter.strength_at(t)
    if inter.kind is Kind.CONTACT:
        return lam * d
    g = gaussian_kernel(grid, inter.sigma)
    return lam * grid.dx * (d @ g.T)


def three_body_field(grid: Grid, inter: InteractionSpec, da: np.ndarray, db: np.ndarray,
                     t: float = 0.0) -> np.ndarray:
    """``F[i, j](x) = int int U(x, x', x'') da_i(x') db_j(x'') dx' dx''``.

    ``da`` and ``db`` are stacks of shape ``(P, n)`` and ``(Q, n)``; the
    result has shape ``(P, Q, n)``.
    """
    lam = inter.strength_at(t)
    if inter.kind is Kind.CONTACT_TRIPLE:
        return lam * da[:, None, :] * db[None, :, :]
    _check_triple_gaussian(grid)
    g = gaussian_kernel(grid, inter.sigma)
    dx2 = grid.dx ** 2

    def at(ix: int) -> np.ndarray:
        return (da * g[ix]) @ g @ (db * g[ix]).T

    out = np.stack(pmap(at, range(grid.n_points)), axis=-1)
    return lam * dx2 * out


def _check_triple_gaussian(grid: Grid) -> None:
    if grid.n_points > MAX_TRIPLE_GAUSSIAN_POINTS:
        raise GridError(f"triple Gaussian kernels are limited to {MAX_TRIPLE_GAUSSIAN_POINTS} "
                        f"grid points, got {grid.n_points}")


def _warn_identical_fermion_contact(inter: InteractionSpec, fermionic: Mapping[str, bool]) -> None:
    if inter.kind in (Kind.CONTACT, Kind.CONTACT_TRIPLE):
        tag = inter.species
        if any(fermionic.get(c, False) and tag.count(c) > 1 for c in set(tag)):
            warnings.warn(f"contact kernel {tag} acts between identical fermions; "
                          "its antisymmetrized contribution vanishes", stacklevel=3)


def compute_W_elements(grid: Grid, inter: InteractionSpec, orb_x: np.ndarray,
                       orb_y: np.ndarray | None = None, t: float = 0.0) -> np.ndarray:
    """Two-body table ``W[k, s, q, l]`` (intra) or ``W^XY[k, k', q, q']`` (inter)."""
    orb_y = orb_x if orb_y is None else orb_y
    Dx = pair_densities(orb_x, orb_x)
    Fy = two_body_field(grid, inter, pair_densities(orb_y, orb_y), t)
    return np.einsum("kqx,slx->ksql", Dx, Fy) * grid.dx


def _triple_table(grid: Grid, inter: InteractionSpec, o0: np.ndarray, o1: np.ndarray,
                  o2: np.ndarray, t: float) -> np.ndarray:
    """``T[a, b, c, d, e, f]``: conj orbitals ``a, b, c`` of sets 0, 1, 2 at ``x, x', x''``
    and unconjugated ``d, e, f`` at the same coordinates."""
    M0, M1, M2 = o0.shape[0], o1.shape[0], o2.shape[0]
    D0 = pair_densities(o0, o0).reshape(M0 * M0, -1)
    D1 = pair_densities(o1, o1).reshape(M1 * M1, -1)
    D2 = pair_densities(o2, o2).reshape(M2 * M2, -1)
    if inter.kind is Kind.CONTACT_TRIPLE:
        T = inter.strength_at(t) * grid.dx * np.einsum("ax,bx,cx->abc", D0, D1, D2)
    else:
        F = three_body_field(grid, inter, D1, D2, t)
        T = grid.dx * np.einsum("ax,bcx->abc", D0, F)
    T = T.reshape(M0, M0, M1, M1, M2, M2)
    return np.transpose(T, (0, 2, 4, 1, 3, 5))


def compute_U_elements(grid: Grid, inter: InteractionSpec, orbitals: Mapping[str, np.ndarray],
                       t: float = 0.0) -> np.ndarray:
    """Three-body table for ``inter.species`` in ``AAA``, ``AAB``, ``ABB`` ... ``ABC``."""
    tag = inter.species
    if len(set(tag)) == 1:
        o = orbitals[tag[0]]
        return _triple_table(grid, inter, o, o, o, t)
    if tag == "ABC":
        return _triple_table(grid, inter, orbitals["A"], orbitals["B"], orbitals["C"], t)
    if tag[0] == tag[1]:
        x, y = orbitals[tag[0]], orbitals[tag[2]]
        return _triple_table(grid, inter, x, y, x, t)
    x, y = orbitals[tag[0]], orbitals[tag[1]]
    return _triple_table(grid, inter, x, y, y, t)


def compute_tables(grid: Grid, one_body: Mapping[str, OneBodyOperator],
                   interactions: list[InteractionSpec], orbitals: Mapping[str, np.ndarray],
                   t: float = 0.0, fermionic: Mapping[str, bool] | None = None) -> IntegralTables:
    """All integral tables of the Hamiltonian in the current orbitals."""
    tables = IntegralTables(declared=frozenset(i.term for i in interactions))
    for x, op in one_body.items():
        tables.h[x] = compute_h_elements(orbitals[x], op, t)
    for inter in interactions:
        if fermionic is not None:
            _warn_identical_fermion_contact(inter, fermionic)
        tag, term = inter.species, inter.term
        if len(tag) == 2 and tag[0] == tag[1]:
            tables.W[tag[0]] = _accumulate(tables.W.get(tag[0]),
                                           compute_W_elements(grid, inter, orbitals[tag[0]], t=t))
        elif len(tag) == 2:
            tables.W_inter[tag] = _accumulate(tables.W_inter.get(tag), compute_W_elements(
                grid, inter, orbitals[tag[0]], orbitals[tag[1]], t))
        elif len(set(tag)) == 1:
            tables.U[tag[0]] = _accumulate(tables.U.get(tag[0]),
                                           compute_U_elements(grid, inter, orbitals, t))
        elif tag == "ABC":
            tables.U_abc = _accumulate(tables.U_abc, compute_U_elements(grid, inter, orbitals, t))
        else:
            tables.U_pair[tag] = _accumulate(tables.U_pair.get(tag),
                                             compute_U_elements(grid, inter, orbitals, t))
    return tables


def _accumulate(old: np.ndarray | None, new: np.ndarray) -> np.ndarray:
    return new if old is None else old + new


# -- mean-field potential bank ---------------------------------------------------

def compute_mean_field_potentials(grid: Grid, interactions: list[InteractionSpec],
                                  orbitals: Mapping[str, np.ndarray],
                                  t: float = 0.0) -> dict[str, np.ndarray]:
    """Every one-body potential that enters the mean-field operators.

    Keys name the term and, after ``@``, the species that feels the field:

    * ``WA@A[s, l](x)``: intra two-body field ``int W conj(phi_s) phi_l``;
    * ``WAB@A[k', q'](x)`` and ``WAB@B[k, q](x)``: inter two-body fields;
    * ``UA@A[s, p, l, r](x)``: intra three-body field of pairs ``(s, l)`` and ``(p, r)``;
    * ``UAAB@A[s, k', l, q'](x)``: A feels one A pair ``(s, l)`` and one B pair;
    * ``UAAB@B[k, s, q, l](x)``: B feels two A pairs;
    * ``UABB@A[k', s', q', l'](x)``, ``UABB@B[k, s', q, l'](x)`` likewise;
    * ``UABC@A[k', k'', q', q''](x)`` and the analogues for B and C.

    Fields of identical interaction terms are summed.
    """
    bank: dict[str, np.ndarray] = {}

    def add(key: str, value: np.ndarray) -> None:
        bank[key] = value if key not in bank else bank[key] + value

    def dens(c: str) -> np.ndarray:
        o = orbitals[c]
        return pair_densities(o, o)

    for inter in interactions:
        tag, term = inter.species, inter.term
        if len(tag) == 2:
            if tag[0] == tag[1]:
                add(f"{term}@{tag[0]}", two_body_field(grid, inter, dens(tag[0]), t))
            else:
                add(f"{term}@{tag[0]}", two_body_field(grid, inter, dens(tag[1]), t))
                add(f"{term}@{tag[1]}", two_body_field(grid, inter, dens(tag[0]), t))
            continue
        for target in sorted(set(tag)):
            rest = list(tag)
            rest.remove(target)
            d1, d2 = dens(rest[0]), dens(rest[1])
            M1, M2 = d1.shape[0], d2.shape[0]
            F = three_body_field(grid, inter, d1.reshape(M1 * M1, -1), d2.reshape(M2 * M2, -1), t)
            # F[(a, b), (c, d)] -> [a, c, b, d]: conj indices first
            F = F.reshape(M1, M1, M2, M2, -1).transpose(0, 2, 1, 3, 4)
            add(f"{term}@{target}", F)
    return bank
