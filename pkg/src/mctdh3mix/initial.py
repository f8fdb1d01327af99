"""Initial orbitals and coefficients."""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg
from scipy.special import eval_hermite

from .densops import Mixture, normalize
from .eom import gram_schmidt
from .grid1d import Grid, OneBodyOperator


def hermite_functions(grid: Grid, M: int, omega: float = 1.0, center: float = 0.0,
                      mass: float = 1.0) -> np.ndarray:
    """Lowest ``M`` harmonic-oscillator eigenfunctions sampled on the grid, orthonormalized."""
    a = math.sqrt(mass * omega)
    xi = a * (grid.x - center)
    rows = []
    for n in range(M):
        norm = math.sqrt(a / (2.0 ** n * math.factorial(n) * math.sqrt(math.pi)))
        rows.append(norm * eval_hermite(n, xi) * np.exp(-0.5 * xi ** 2))
    return gram_schmidt(np.array(rows, dtype=complex), grid.dx)


def eigen_orbitals(op: OneBodyOperator, M: int, t: float = 0.0) -> np.ndarray:
    """Lowest ``M`` eigenvectors of the discretized one-body operator, with a real
    positive first lobe so that the sign convention is reproducible."""
    H = op.matrix(t).toarray()
    _, vectors = scipy.linalg.eigh(H, subset_by_index=[0, M - 1])
    vectors = vectors.T / math.sqrt(op.grid.dx)
    for v in vectors:
        i = int(np.argmax(np.abs(v) > 1e-3 * np.max(np.abs(v))))
        if v[i] < 0:
            v *= -1
    return gram_schmidt(vectors.astype(complex), op.grid.dx)


def single_configuration(mix: Mixture, index: tuple[int, int, int] = (0, 0, 0)) -> np.ndarray:
    C = np.zeros(mix.shape, dtype=complex)
    C[index] = 1.0
    return C


def uniform_coefficients(mix: Mixture) -> np.ndarray:
    return normalize(np.ones(mix.shape, dtype=complex))


def random_coefficients(mix: Mixture, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return normalize(rng.normal(size=mix.shape) + 1j * rng.normal(size=mix.shape))
