import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mctdh3mix import densops, fock, oracle
from mctdh3mix.densops import ContractError, IntegralTables, Mixture, MissingTableError
from mctdh3mix.fock import SpeciesSpec

from conftest import random_complex, random_state, random_tables

B22 = SpeciesSpec("boson", 2, 2)
F23 = SpeciesSpec("fermion", 2, 3)


def column(values):
    return np.array(values, dtype=complex).reshape(-1, 1, 1)


def test_rho12_bosons():
    c = column([1.0, 2.0 - 1j, 0.5j])
    out = densops.apply_rho1(Mixture(B22), "A", 1, 2, c)
    expected = column([np.sqrt(2) * (2.0 - 1j), np.sqrt(2) * 0.5j, 0])
    assert np.allclose(out, expected, atol=1e-15)
    ref = oracle.rho1_matrices(B22)[0, 1] @ c.ravel()
    assert np.allclose(out.ravel(), ref, atol=1e-15)


def test_rho11_bosons_is_number_operator():
    c = column([1.0, 2.0, 3.0])
    out = densops.apply_rho1(Mixture(B22), "A", 1, 1, c)
    assert np.allclose(out.ravel(), [2.0, 2.0, 0.0])


def test_rho13_fermions_moves_with_sign():
    mix = Mixture(F23)
    c = column([0, 0, 1.0])                      # |0,1,1>
    out = densops.apply_rho1(mix, "A", 1, 3, c).ravel()
    assert np.allclose(out, [-1.0, 0, 0])        # -|1,1,0>


def test_rho2_examples():
    mix = Mixture(B22)
    c20 = column([1, 0, 0])
    c11 = column([0, 1, 0])
    assert densops.inner(c20, densops.apply_rho2_intra(mix, "A", 1, 1, 1, 1, c20)) == pytest.approx(2)
    assert densops.inner(c11, densops.apply_rho2_intra(mix, "A", 1, 2, 2, 1, c11)) == pytest.approx(1)
    mixf = Mixture(F23)
    rng = np.random.default_rng(0)
    C = random_state(rng, mixf)
    for k in range(1, 4):
        assert np.all(densops.apply_rho2_intra(mixf, "A", k, k, k, k, C) == 0)


def test_rho3_examples():
    mix = Mixture(SpeciesSpec("boson", 3, 1))
    c = column([1.0])
    assert densops.apply_rho3_intra(mix, "A", 1, 1, 1, 1, 1, 1, c).ravel()[0] == pytest.approx(6)
    mix21 = Mixture(SpeciesSpec("boson", 3, 2))
    psi = column([0, 1, 0, 0])                   # |2,1>
    out = densops.apply_rho3_intra(mix21, "A", 1, 2, 1, 2, 1, 1, psi)
    ref = oracle.normal_ordered(mix21.spec("A"), (0, 1, 0), (1, 0, 0)) @ psi.ravel()
    assert np.allclose(out.ravel(), ref, atol=1e-14)
    mixf = Mixture(SpeciesSpec("fermion", 3, 4))
    C = random_state(np.random.default_rng(1), mixf)
    assert np.all(densops.apply_rho3_intra(mixf, "A", 2, 2, 1, 1, 3, 4, C) == 0)


@pytest.mark.parametrize("stat,n,m", [("boson", 2, 3), ("boson", 3, 2), ("boson", 3, 3),
                                      ("fermion", 2, 3), ("fermion", 3, 3), ("fermion", 3, 4)])
def test_rho2_rho3_match_oracle_for_all_indices(stat, n, m):
    spec = SpeciesSpec(stat, n, m)
    mix = Mixture(spec)
    C = random_state(np.random.default_rng(n * 10 + m), mix)
    v = C.ravel()
    worst = 0.0
    for k, s, l, q in itertools.product(range(m), repeat=4):
        ref = oracle.normal_ordered(spec, (k, s), (l, q)) @ v
        got = densops.apply_rho2_intra(mix, "A", k + 1, s + 1, l + 1, q + 1, C).ravel()
        worst = max(worst, np.max(np.abs(got - ref)))
    for k, s, p, r, l, q in itertools.product(range(m), repeat=6):
        ref = oracle.normal_ordered(spec, (k, s, p), (r, l, q)) @ v
        got = densops.apply_rho3_intra(mix, "A", k + 1, s + 1, p + 1, r + 1, l + 1, q + 1, C).ravel()
        worst = max(worst, np.max(np.abs(got - ref)))
    assert worst <= 1e-12


def test_rho3_needs_rho_pq_applied_first():
    # rho_ksrl(rho_pq C) and rho_pq(rho_ksrl C) differ: the operators do not commute
    spec = SpeciesSpec("boson", 3, 2)
    mix = Mixture(spec)
    C = random_state(np.random.default_rng(3), mix)
    idx = (1, 2, 2, 1, 1, 2)                     # k, s, p, r, l, q
    k, s, p, r, l, q = idx
    ref = oracle.normal_ordered(spec, (k - 1, s - 1, p - 1), (r - 1, l - 1, q - 1)) @ C.ravel()
    sign = spec.statistics.sign

    def recursion(inner_first: bool):
        if inner_first:
            T = densops.apply_rho2_intra(mix, "A", k, s, r, l, densops.apply_rho1(mix, "A", p, q, C))
        else:
            T = densops.apply_rho1(mix, "A", p, q, densops.apply_rho2_intra(mix, "A", k, s, r, l, C))
        if p == r:
            T = T + sign * densops.apply_rho2_intra(mix, "A", k, s, l, q, C)
        if p == l:
            T = T - densops.apply_rho2_intra(mix, "A", k, s, r, q, C)
        return T.ravel()

    assert np.allclose(recursion(True), ref, atol=1e-12)
    assert np.max(np.abs(recursion(False) - ref)) > 0.1


def test_index_validation():
    mix = Mixture(B22)
    C = np.zeros(mix.shape, dtype=complex)
    with pytest.raises(ContractError):
        densops.apply_rho1(mix, "A", 0, 1, C)
    with pytest.raises(ContractError):
        densops.apply_rho1(mix, "A", 1, 3, C)
    with pytest.raises(ContractError):
        densops.apply_rho1(mix, "B", 1, 1, C)
    with pytest.raises(ContractError):
        densops.apply_rho1(mix, "A", 1, 1, np.zeros((4, 1, 1)))


def test_inter_rho_commutes_and_matches_kron():
    mix = Mixture(SpeciesSpec("boson", 2, 3), SpeciesSpec("fermion", 2, 3))
    rng = np.random.default_rng(5)
    C = random_state(rng, mix)
    RA, RB = oracle.rho1_matrices(mix.spec("A")), oracle.rho1_matrices(mix.spec("B"))
    for (ka, qa, kb, qb) in [(1, 2, 3, 1), (2, 2, 1, 3), (3, 1, 2, 2)]:
        out = densops.apply_rho_inter2(mix, "A", ka, qa, "B", kb, qb, C)
        swapped = densops.apply_rho_inter2(mix, "B", kb, qb, "A", ka, qa, C)
        assert np.array_equal(out, swapped)
        ref = (np.kron(RB[kb - 1, qb - 1], RA[ka - 1, qa - 1]) @ C.ravel(order="F"))
        assert np.allclose(out.ravel(order="F"), ref, atol=1e-13)


def test_number_operators_on_product_state_are_identity():
    mix = Mixture(SpeciesSpec("boson", 1, 1), SpeciesSpec("boson", 1, 1))
    C = np.ones(mix.shape, dtype=complex)
    assert np.array_equal(densops.apply_rho_inter2(mix, "A", 1, 1, "B", 1, 1, C), C)


def test_one_body_op():
    mix = Mixture(F23)
    rng = np.random.default_rng(7)
    C = random_state(rng, mix)
    assert np.allclose(densops.apply_one_body_op(mix, "A", np.eye(3), C), 2 * C)
    eps = np.array([0.3, -1.0, 2.5])
    single = np.zeros(mix.shape, dtype=complex)
    single[1, 0, 0] = 1.0                        # (1,0,1)
    out = densops.apply_one_body_op(mix, "A", np.diag(eps), single)
    assert np.allclose(out, (eps[0] + eps[2]) * single)
    O = random_complex(rng, 3, 3)
    O = O + O.conj().T
    ref = oracle.one_body_matrix(mix.spec("A"), O) @ C.ravel()
    assert np.allclose(densops.apply_one_body_op(mix, "A", O, C).ravel(), ref, atol=1e-13)


@pytest.mark.parametrize("stat", ["boson", "fermion"])
def test_two_body_identity_kernel(stat):
    n, m = 3, 4
    spec = SpeciesSpec(stat, n, m)
    mix = Mixture(spec)
    W = np.einsum("kq,sl->ksql", np.eye(m), np.eye(m))
    C = random_state(np.random.default_rng(2), mix)
    out = densops.apply_two_body_op(mix, "A", W, C)
    # sum_ks rho_kssk = N(N-1) for both statistics, so (1/2) W rho = N(N-1)/2
    assert np.allclose(out, 0.5 * n * (n - 1) * C, atol=1e-13)
    assert np.allclose(out.ravel(), oracle.two_body_matrix(spec, W) @ C.ravel(), atol=1e-13)


def test_two_mode_hubbard():
    spec = SpeciesSpec("boson", 3, 2)
    mix = Mixture(spec)
    U = 0.7
    W = np.zeros((2,) * 4)
    W[0, 0, 0, 0] = W[1, 1, 1, 1] = U
    occ = fock.configurations(spec)
    expected = 0.5 * U * (occ[:, 0] * (occ[:, 0] - 1) + occ[:, 1] * (occ[:, 1] - 1))
    C = np.ones(mix.shape, dtype=complex)
    assert np.allclose(densops.apply_two_body_op(mix, "A", W, C).ravel(), expected)
    assert np.all(densops.apply_two_body_op(mix, "A", np.zeros_like(W), C) == 0)


def test_three_body_examples():
    for stat in ("boson", "fermion"):
        mix = Mixture(SpeciesSpec(stat, 2, 3))
        U = random_complex(np.random.default_rng(0), *(3,) * 6)
        C = random_state(np.random.default_rng(1), mix)
        assert np.allclose(densops.apply_three_body_op(mix, "A", U, C), 0)
    mix = Mixture(SpeciesSpec("boson", 3, 1))
    U = np.full((1,) * 6, 6 * 0.4)
    C = np.ones(mix.shape, dtype=complex)
    assert np.allclose(densops.apply_three_body_op(mix, "A", U, C), 6 * 0.4 * C)
    assert np.all(densops.apply_three_body_op(mix, "A", np.zeros_like(U), C) == 0)


def test_inter_two_body_separable_and_oracle():
    mix = Mixture(SpeciesSpec("boson", 2, 2), SpeciesSpec("fermion", 1, 3))
    rng = np.random.default_rng(11)
    C = random_state(rng, mix)
    a, b = random_complex(rng, 2, 2), random_complex(rng, 3, 3)
    W = np.einsum("kq,ab->kaqb", a, b)
    nested = densops.apply_one_body_op(mix, "B", b, densops.apply_one_body_op(mix, "A", a, C))
    assert np.allclose(densops.apply_inter_two_body(mix, "A", "B", W, C), nested, atol=1e-13)
    W = random_complex(rng, 2, 3, 2, 3)
    t = IntegralTables(h={"A": np.zeros((2, 2)), "B": np.zeros((3, 3))}, W_inter={"AB": W})
    ref = oracle.apply(mix, t, C)
    assert np.allclose(densops.apply_inter_two_body(mix, "A", "B", W, C), ref, atol=1e-13)
    assert np.all(densops.apply_inter_two_body(mix, "A", "B", np.zeros_like(W), C) == 0)


def test_inter_three_body_pair():
    rng = np.random.default_rng(12)
    mix1 = Mixture(SpeciesSpec("boson", 1, 2), SpeciesSpec("boson", 2, 2))
    U = random_complex(rng, *densops.pair_table_shape(mix1, "AAB"))
    assert np.all(densops.apply_inter_three_body_pair(mix1, "AAB", U, random_state(rng, mix1)) == 0)
    mix = Mixture(SpeciesSpec("boson", 2, 2), SpeciesSpec("boson", 1, 2))
    C = random_state(rng, mix)
    for term in ("AAB", "ABB"):
        U = random_complex(rng, *densops.pair_table_shape(mix, term))
        t = IntegralTables(h={"A": np.zeros((2, 2)), "B": np.zeros((2, 2))}, U_pair={term: U})
        got = densops.apply_inter_three_body_pair(mix, term, U, C)
        assert np.allclose(got, oracle.apply(mix, t, C), atol=1e-13)
    # delta_sl kernel: U[k,k',s,q,q',l] = delta_sl V[k,k',q,q'] is (N_X - 1) V up to the 1/2
    V = random_complex(rng, 2, 2, 2, 2)
    U = np.einsum("kaqb,sl->kasqbl", V, np.eye(2))
    got = densops.apply_inter_three_body_pair(mix, "AAB", U, C)
    expected = 0.5 * (2 - 1) * densops.apply_inter_two_body(mix, "A", "B", V, C)
    assert np.allclose(got, expected, atol=1e-13)


def test_inter_three_body_triple():
    mix = Mixture(SpeciesSpec("boson", 1, 2), SpeciesSpec("fermion", 1, 2), SpeciesSpec("boson", 1, 2))
    rng = np.random.default_rng(13)
    C = random_state(rng, mix)
    a, b, c = (random_complex(rng, 2, 2) for _ in range(3))
    U = np.einsum("kq,ab,cd->kacqbd", a, b, c)
    nested = densops.apply_one_body_op(mix, "C", c, densops.apply_one_body_op(
        mix, "B", b, densops.apply_one_body_op(mix, "A", a, C)))
    assert np.allclose(densops.apply_inter_three_body_triple(mix, U, C), nested, atol=1e-13)
    U = random_complex(rng, *(2,) * 6)
    t = IntegralTables(h={x: np.zeros((2, 2)) for x in "ABC"}, U_abc=U)
    assert np.allclose(densops.apply_inter_three_body_triple(mix, U, C), oracle.apply(mix, t, C), atol=1e-13)
    assert np.all(densops.apply_inter_three_body_triple(mix, np.zeros_like(U), C) == 0)


def test_hamiltonian_diagonal_h():
    mix = Mixture(SpeciesSpec("boson", 2, 2), SpeciesSpec("fermion", 2, 3))
    eA, eB = np.array([0.5, 1.5]), np.array([-1.0, 0.25, 2.0])
    t = IntegralTables(h={"A": np.diag(eA), "B": np.diag(eB)})
    occA = fock.configurations(mix.spec("A")) @ eA
    occB = fock.configurations(mix.spec("B")) @ eB
    C = random_state(np.random.default_rng(4), mix)
    expected = (occA[:, None, None] + occB[None, :, None]) * C
    assert np.allclose(densops.apply_hamiltonian(mix, t, C), expected, atol=1e-14)


def test_hamiltonian_full_mixture_and_hermiticity():
    mix = Mixture(SpeciesSpec("boson", 2, 2), SpeciesSpec("boson", 1, 2), SpeciesSpec("fermion", 1, 2))
    rng = np.random.default_rng(21)
    t = random_tables(rng, mix, hermitian=True)
    C = random_state(rng, mix)
    assert np.max(np.abs(densops.apply_hamiltonian(mix, t, C) - oracle.apply(mix, t, C))) <= 1e-12
    phi, psi = random_state(rng, mix), random_state(rng, mix)
    lhs = densops.inner(phi, densops.apply_hamiltonian(mix, t, psi))
    rhs = np.conj(densops.inner(psi, densops.apply_hamiltonian(mix, t, phi)))
    assert abs(lhs - rhs) < 1e-12


def test_expectation():
    mix = Mixture(F23)
    rng = np.random.default_rng(8)
    t = random_tables(rng, mix, hermitian=True)
    C = random_state(rng, mix)
    assert densops.expectation(C, lambda v: v) == pytest.approx(1.0)
    for k in range(1, 4):
        assert densops.expectation(C, lambda v: densops.apply_rho1(mix, "A", k, k, v)).real >= 0
    H = oracle.build_dense(mix, t)
    ref = np.vdot(C.ravel(), H @ C.ravel())
    assert abs(densops.expectation(C, lambda v: densops.apply_hamiltonian(mix, t, v)) - ref) < 1e-12


def test_missing_table_is_reported():
    mix = Mixture(B22)
    t = IntegralTables(h={"A": np.eye(2)}, declared=frozenset({"WA"}))
    with pytest.raises(MissingTableError):
        densops.apply_hamiltonian(mix, t, np.ones(mix.shape, dtype=complex))


def test_fixed_reduction_order_is_bitwise_reproducible():
    mix = Mixture(SpeciesSpec("boson", 3, 3), SpeciesSpec("fermion", 2, 4))
    rng = np.random.default_rng(9)
    t = random_tables(rng, mix)
    C = random_state(rng, mix)
    assert np.array_equal(densops.apply_hamiltonian(mix, t, C), densops.apply_hamiltonian(mix, t, C))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-3, 3), st.floats(-3, 3))
def test_hamiltonian_is_linear(seed, a, b):
    mix = Mixture(SpeciesSpec("fermion", 2, 3), SpeciesSpec("boson", 2, 2))
    rng = np.random.default_rng(seed)
    t = random_tables(rng, mix)
    x, y = random_complex(rng, *mix.shape), random_complex(rng, *mix.shape)
    H = lambda v: densops.apply_hamiltonian(mix, t, v)
    assert np.allclose(H(a * x + b * y), a * H(x) + b * H(y), atol=1e-10)
