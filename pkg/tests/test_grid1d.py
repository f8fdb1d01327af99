import math
import warnings

import numpy as np
import pytest
import scipy.linalg

from mctdh3mix import grid1d
from mctdh3mix.grid1d import Grid, HarmonicTrap, InteractionSpec, Kind, build_one_body
from mctdh3mix.initial import eigen_orbitals, hermite_functions


def gaussian_orbital(grid: Grid) -> np.ndarray:
    """Real orbital whose density is the unit-variance normal distribution."""
    phi = (2 * math.pi) ** -0.25 * np.exp(-grid.x ** 2 / 4)
    return phi[None, :].astype(complex)


def lowest(op, k=1):
    return scipy.linalg.eigh(op.matrix().toarray(), eigvals_only=True, subset_by_index=[0, k - 1])


def test_grid_validation():
    with pytest.raises(grid1d.GridError):
        Grid(3, 0, 1)
    with pytest.raises(grid1d.GridError):
        Grid(10, 1, 0)


@pytest.mark.parametrize("n", [63, 127])
def test_particle_in_a_box(n):
    grid = Grid(n, 0.0, 1.0)
    L = grid.box_length
    exact = math.pi ** 2 / (2 * L ** 2)
    assert lowest(build_one_body(grid))[0] == pytest.approx(exact, rel=2 * grid.dx ** 2 * math.pi ** 2 / 12 + 1e-12)


def test_box_error_is_second_order():
    # relative error of the three-point stencil: -(pi dx / L)^2 / 12
    for n in (31, 63, 127):
        grid = Grid(n, 0.0, 1.0)
        exact = math.pi ** 2 / (2 * grid.box_length ** 2)
        relative = (lowest(build_one_body(grid))[0] - exact) / exact
        assert relative / (grid.dx / grid.box_length) ** 2 == pytest.approx(-math.pi ** 2 / 12, rel=1e-3)


def test_harmonic_ground_state():
    op = build_one_body(Grid(256, -8, 8), HarmonicTrap())
    assert lowest(op)[0] == pytest.approx(0.5, abs=1e-3)


def test_periodic_stencil_rows_sum_to_zero():
    T = grid1d.kinetic_matrix(Grid(16, 0, 2 * math.pi, "periodic"))
    assert np.allclose(np.asarray(T.sum(axis=1)).ravel(), 0.0, atol=1e-12)


def test_h_elements():
    grid = Grid(512, -8, 8)
    op = build_one_body(grid, HarmonicTrap())
    h = grid1d.compute_h_elements(hermite_functions(grid, 4), op)
    assert np.allclose(h, np.diag([0.5, 1.5, 2.5, 3.5]), atol=1e-2)
    h = grid1d.compute_h_elements(eigen_orbitals(op, 4), op)
    assert np.max(np.abs(h - np.diag(np.diag(h)))) <= 1e-12
    assert np.allclose(np.diag(h).real, [0.5, 1.5, 2.5, 3.5], atol=1e-3)


def test_h_elements_match_dense_quadrature():
    grid = Grid(40, -4, 4)
    op = build_one_body(grid, HarmonicTrap(omega=1.3))
    rng = np.random.default_rng(0)
    Q = np.linalg.qr(rng.normal(size=(40, 3)) + 1j * rng.normal(size=(40, 3)))[0]
    phi = Q.T / math.sqrt(grid.dx)
    h = grid1d.compute_h_elements(phi, op)
    H = op.matrix().toarray()
    ref = np.array([[np.vdot(phi[k], H @ phi[q]) * grid.dx for q in range(3)] for k in range(3)])
    assert np.max(np.abs(h - ref)) <= 1e-13
    assert np.max(np.abs(h - h.conj().T)) <= 1e-12


def test_contact_W_for_gaussian_orbital():
    grid = Grid(512, -10, 10)
    lam = 0.8
    W = grid1d.compute_W_elements(grid, InteractionSpec("AA", "contact", lam), gaussian_orbital(grid))
    assert W[0, 0, 0, 0].real == pytest.approx(lam / (2 * math.sqrt(math.pi)), abs=1e-6)
    quad = lam * np.sum(np.abs(gaussian_orbital(grid)[0]) ** 4) * grid.dx
    assert W[0, 0, 0, 0] == pytest.approx(quad, abs=1e-14)
    zero = grid1d.compute_W_elements(grid, InteractionSpec("AA", "contact", 0.0), gaussian_orbital(grid))
    assert np.all(zero == 0)


def test_wide_gaussian_kernel_is_constant():
    grid = Grid(64, -6, 6)
    phi = hermite_functions(grid, 3)
    W = grid1d.compute_W_elements(grid, InteractionSpec("AA", "gaussian", 1.0, sigma=100.0), phi)
    expected = np.einsum("kq,sl->ksql", np.eye(3), np.eye(3))
    assert np.max(np.abs(W - expected)) <= 5e-3


def test_gaussian_W_matches_double_quadrature():
    grid = Grid(24, -4, 4)
    rng = np.random.default_rng(1)
    phi = rng.normal(size=(2, 24)) + 1j * rng.normal(size=(2, 24))
    inter = InteractionSpec("AA", "gaussian", 0.6, sigma=0.7)
    W = grid1d.compute_W_elements(grid, inter, phi)
    x = grid.x
    g = 0.6 * np.exp(-(x[:, None] - x[None, :]) ** 2 / (2 * 0.7 ** 2))
    ref = np.zeros((2,) * 4, dtype=complex)
    for k, s, q, l in np.ndindex(2, 2, 2, 2):
        ref[k, s, q, l] = np.sum(np.conj(phi[k])[:, None] * np.conj(phi[s])[None, :] * g
                                 * phi[q][:, None] * phi[l][None, :]) * grid.dx ** 2
    assert np.max(np.abs(W - ref)) <= 1e-12


def test_contact_triple_for_gaussian_orbital():
    grid = Grid(512, -10, 10)
    lam3 = 0.3
    U = grid1d.compute_U_elements(grid, InteractionSpec("AAA", "contact_triple", lam3),
                                  {"A": gaussian_orbital(grid)})
    assert U[(0,) * 6].real == pytest.approx(lam3 / (2 * math.sqrt(3) * math.pi), abs=1e-5)
    zero = grid1d.compute_U_elements(grid, InteractionSpec("AAA", "contact_triple", 0.0),
                                     {"A": gaussian_orbital(grid)})
    assert np.all(zero == 0)


@pytest.mark.parametrize("kind", ["contact_triple", "gaussian_triple"])
def test_three_body_permutation_symmetry(kind):
    grid = Grid(20, -3, 3)
    rng = np.random.default_rng(2)
    phi = rng.normal(size=(2, 20)) + 1j * rng.normal(size=(2, 20))
    U = grid1d.compute_U_elements(grid, InteractionSpec("AAA", kind, 1.0, sigma=0.8), {"A": phi})
    assert np.allclose(U, np.transpose(U, (1, 0, 2, 4, 3, 5)), atol=1e-13)
    assert np.allclose(U, np.transpose(U, (0, 2, 1, 3, 5, 4)), atol=1e-13)


def test_gaussian_triple_matches_triple_quadrature():
    grid = Grid(10, -2, 2)
    rng = np.random.default_rng(3)
    a = rng.normal(size=(2, 10)) + 1j * rng.normal(size=(2, 10))
    b = rng.normal(size=(1, 10)) + 1j * rng.normal(size=(1, 10))
    inter = InteractionSpec("AAB", "gaussian_triple", 0.9, sigma=0.6)
    U = grid1d.compute_U_elements(grid, inter, {"A": a, "B": b})
    x = grid.x
    g = np.exp(-(x[:, None] - x[None, :]) ** 2 / (2 * 0.36))
    K = 0.9 * g[:, :, None] * g[:, None, :] * g[None, :, :]          # K[x, x', x'']
    ref = np.zeros(U.shape, dtype=complex)
    # U[k, k', s, q, q', l]: A at x (k, q), B at x' (k', q'), A at x'' (s, l)
    for idx in np.ndindex(*U.shape):
        k, kb, s, q, qb, l = idx
        f = np.einsum("i,j,m,ijm->", np.conj(a[k]) * a[q], np.conj(b[kb]) * b[qb],
                      np.conj(a[s]) * a[l], K)
        ref[idx] = f * grid.dx ** 3
    assert np.max(np.abs(U - ref)) <= 1e-12


def test_mean_field_contact_intra():
    grid = Grid(32, -4, 4)
    phi = hermite_functions(grid, 2)
    bank = grid1d.compute_mean_field_potentials(grid, [InteractionSpec("AA", "contact", 0.4)], {"A": phi})
    assert np.allclose(bank["WA@A"], 0.4 * np.conj(phi)[:, None, :] * phi[None, :, :])
    zero = grid1d.compute_mean_field_potentials(grid, [InteractionSpec("AA", "contact", 0.0)], {"A": phi})
    assert all(np.all(v == 0) for v in zero.values())


def test_mean_field_gaussian_matches_quadrature():
    grid = Grid(64, -5, 5)
    rng = np.random.default_rng(4)
    phi = rng.normal(size=(2, 64)) + 1j * rng.normal(size=(2, 64))
    bank = grid1d.compute_mean_field_potentials(grid, [InteractionSpec("AA", "gaussian", 1.2, sigma=0.5)],
                                                {"A": phi})
    x = grid.x
    ref = np.zeros((2, 2, 64), dtype=complex)
    for s, l, i in np.ndindex(2, 2, 64):
        ref[s, l, i] = 1.2 * np.sum(np.exp(-(x[i] - x) ** 2 / 0.5) * np.conj(phi[s]) * phi[l]) * grid.dx
    assert np.max(np.abs(bank["WA@A"] - ref)) <= 1e-12


def test_full_mixture_bank_term_count():
    grid = Grid(12, -3, 3)
    orbitals = {x: hermite_functions(grid, 2) for x in "ABC"}
    tags = ["AA", "AB", "AC", "BC", "BB", "CC", "AAA", "AAB", "ABB", "AAC", "ACC", "BBC", "BCC", "ABC"]
    inters = [InteractionSpec(t, "contact" if len(t) == 2 else "contact_triple", 0.1) for t in tags]
    bank = grid1d.compute_mean_field_potentials(grid, inters, orbitals)
    felt_by_a = sorted(k.split("@")[0] for k in bank if k.endswith("@A"))
    assert [k for k in felt_by_a if k.startswith("W")] == ["WA", "WAB", "WAC"]
    assert [k for k in felt_by_a if k.startswith("U")] == ["UA", "UAAB", "UAAC", "UABB", "UABC", "UACC"]


def test_ramps():
    const = InteractionSpec("AA", "contact", 2.0)
    lin = InteractionSpec("AA", "contact", 2.0, ramp="linear", ramp_time=4.0)
    sine = InteractionSpec("AA", "contact", 2.0, ramp="sinusoidal", ramp_amplitude=0.5, ramp_frequency=3.0)
    assert const.strength_at(7.0) == 2.0
    assert lin.strength_at(1.0) == pytest.approx(0.5)
    assert lin.strength_at(10.0) == pytest.approx(2.0)
    assert sine.strength_at(0.2) == pytest.approx(2.0 * (1 + 0.5 * math.sin(0.6)))


def test_interaction_validation():
    with pytest.raises(ValueError):
        InteractionSpec("AA", "contact_triple", 1.0)
    with pytest.raises(ValueError):
        InteractionSpec("AD", "contact", 1.0)
    with pytest.raises(ValueError):
        InteractionSpec("AB", "gaussian", 1.0, sigma=0.0)
    assert InteractionSpec("BA", "contact", 1.0).term == "WAB"
    assert InteractionSpec("BAA", "contact_triple", 1.0).term == "UAAB"


def test_identical_fermion_contact_warns():
    grid = Grid(8, -1, 1)
    phi = hermite_functions(grid, 2)
    with pytest.warns(UserWarning, match="identical fermions"):
        grid1d.compute_tables(grid, {"A": build_one_body(grid)}, [InteractionSpec("AA", "contact", 1.0)],
                              {"A": phi}, fermionic={"A": True})
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        grid1d.compute_tables(grid, {"A": build_one_body(grid)}, [InteractionSpec("AA", "contact", 1.0)],
                              {"A": phi}, fermionic={"A": False})


def test_triple_gaussian_grid_cap():
    grid = Grid(grid1d.MAX_TRIPLE_GAUSSIAN_POINTS + 1, -1, 1)
    phi = np.ones((1, grid.n_points), dtype=complex)
    with pytest.raises(grid1d.GridError):
        grid1d.compute_U_elements(grid, InteractionSpec("AAA", "gaussian_triple", 1.0), {"A": phi})
