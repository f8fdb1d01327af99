import numpy as np
import pytest

from mctdh3mix import densops
from mctdh3mix.densops import IntegralTables, Mixture
from mctdh3mix.fock import SpeciesSpec


def spec(stat: str, n: int, m: int) -> SpeciesSpec:
    return SpeciesSpec(stat, n, m)


def random_complex(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def random_state(rng, mix: Mixture) -> np.ndarray:
    return densops.normalize(random_complex(rng, *mix.shape))


def random_tables(rng, mix: Mixture, hermitian: bool = False, terms=None) -> IntegralTables:
    """Random tables for every term allowed by the mixture (or only ``terms``)."""
    M = {x: mix.spec(x).n_orbitals for x in mix.present}
    want = (lambda name: True) if terms is None else (lambda name: name in terms)
    t = IntegralTables()
    for x in mix.present:
        h = random_complex(rng, M[x], M[x])
        t.h[x] = h + h.conj().T if hermitian else h
        if want(f"W{x}"):
            W = random_complex(rng, *(M[x],) * 4)
            if hermitian:
                W = W + np.conj(np.transpose(W, (2, 3, 0, 1)))
            t.W[x] = W
        if want(f"U{x}"):
            U = random_complex(rng, *(M[x],) * 6)
            if hermitian:
                U = U + np.conj(np.transpose(U, (3, 4, 5, 0, 1, 2)))
            t.U[x] = U
    present = mix.present
    for i, a in enumerate(present):
        for b in present[i + 1:]:
            if want(f"W{a}{b}"):
                W = random_complex(rng, M[a], M[b], M[a], M[b])
                if hermitian:
                    W = W + np.conj(np.transpose(W, (2, 3, 0, 1)))
                t.W_inter[a + b] = W
    for term in densops.PAIR_TERMS:
        if all(c in present for c in term) and want(f"U{term}"):
            U = random_complex(rng, *densops.pair_table_shape(mix, term))
            if hermitian:
                U = U + np.conj(np.transpose(U, (3, 4, 5, 0, 1, 2)))
            t.U_pair[term] = U
    if len(present) == 3 and want("UABC"):
        U = random_complex(rng, M["A"], M["B"], M["C"], M["A"], M["B"], M["C"])
        if hermitian:
            U = U + np.conj(np.transpose(U, (3, 4, 5, 0, 1, 2)))
        t.U_abc = U
    return t


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
