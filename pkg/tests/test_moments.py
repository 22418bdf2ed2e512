import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import lpmv

from pnkit.errors import DomainError, SymmetrizationError
from pnkit.moments import (
    BasisSpec, Geometry, Material, flux_set, full3d_flux_matrices, legendre_flux_matrix,
    matrix_abs, planeparallel_flux_matrices, reaction_matrix, recursion_coeffs,
)


def real_harmonic(l, k, mu, phi):
    a = abs(k)
    c = math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - a) / math.factorial(l + a))
    p = c * lpmv(a, l, mu)
    if k == 0:
        return p
    trig = np.cos(a * phi) if k > 0 else np.sin(a * phi)
    return math.sqrt(2.0) * (-1) ** a * p * trig


def sphere_rule(n):
    mu, w = np.polynomial.legendre.leggauss(n)
    phi = np.arange(2 * n) * math.pi / n
    MU, PHI = np.meshgrid(mu, phi, indexing="ij")
    W = np.outer(w, np.full(2 * n, math.pi / n))
    return MU, PHI, W


def quadrature_flux_matrices(N):
    MU, PHI, W = sphere_rule(2 * N + 4)
    basis = BasisSpec(Geometry.FULL_3D, N)
    m = [real_harmonic(l, k, MU, PHI) for l, k in basis.index]
    s = np.sqrt(1 - MU**2)
    omega = (s * np.cos(PHI), s * np.sin(PHI), MU)
    return [np.array([[np.sum(W * o * a * b) for b in m] for a in m]) for o in omega]


# -- slab ------------------------------------------------------------------

def test_legendre_examples():
    assert legendre_flux_matrix(0).tolist() == [[0.0]]
    np.testing.assert_array_equal(legendre_flux_matrix(1), [[0, 1], [1 / 3, 0]])
    B = legendre_flux_matrix(3)
    np.testing.assert_allclose(np.diag(B, 1), [1, 2 / 3, 3 / 5], rtol=0, atol=1e-15)
    np.testing.assert_allclose(np.diag(B, -1), [1 / 3, 2 / 5, 3 / 7], rtol=0, atol=1e-15)
    assert np.count_nonzero(B) == 6


def test_slab_spectrum_is_gauss_nodes():
    for N in range(1, 12):
        lam = np.sort(np.linalg.eigvals(legendre_flux_matrix(N)).real)
        nodes, _ = np.polynomial.legendre.leggauss(N + 1)
        np.testing.assert_allclose(lam, nodes, atol=1e-12)


# -- recursion coefficients -------------------------------------------------

def test_recursion_examples():
    assert recursion_coeffs(0, 0)["A"] == pytest.approx(1 / math.sqrt(3), abs=1e-15)
    assert recursion_coeffs(1, 1)["D"] == 0.0
    assert recursion_coeffs(1, 1)["C"] == pytest.approx(math.sqrt(12 / 15), abs=1e-15)
    assert recursion_coeffs(3, -3)["F"] == 0.0


@pytest.mark.parametrize("l,k", [(-1, 0), (1, 2), (2, -3)])
def test_recursion_domain(l, k):
    with pytest.raises(DomainError):
        recursion_coeffs(l, k)


# -- plane-parallel ----------------------------------------------------------

def _c(name, l, k):
    return recursion_coeffs(l, k)[name]


# 1-based (row, col) -> symbolic value, full nonzero pattern for N = 3
TABLE_B1 = {
    (1, 5): -_c("F", 1, 1), (2, 6): -_c("F", 2, 1), (3, 5): _c("E", 1, 1),
    (3, 7): -_c("F", 3, 1), (4, 6): _c("E", 2, 1),
    (5, 1): -_c("C", 0, 0) / 2, (5, 3): _c("D", 2, 0) / 2, (5, 8): -_c("F", 2, 2) / 2,
    (6, 2): -_c("C", 1, 0) / 2, (6, 4): _c("D", 3, 0) / 2, (6, 9): -_c("F", 3, 2) / 2,
    (7, 3): -_c("C", 2, 0) / 2, (7, 8): _c("E", 2, 2) / 2,
    (8, 5): -_c("C", 1, 1) / 2, (8, 7): _c("D", 3, 1) / 2, (8, 10): -_c("F", 3, 3) / 2,
    (9, 6): -_c("C", 2, 1) / 2, (10, 8): -_c("C", 2, 2) / 2,
}
TABLE_B3 = {
    (1, 2): _c("B", 1, 0), (2, 1): _c("A", 0, 0), (2, 3): _c("B", 2, 0),
    (3, 2): _c("A", 1, 0), (3, 4): _c("B", 3, 0), (4, 3): _c("A", 2, 0),
    (5, 6): _c("B", 2, 1), (6, 5): _c("A", 1, 1), (6, 7): _c("B", 3, 1),
    (7, 6): _c("A", 2, 1), (8, 9): _c("B", 3, 2), (9, 8): _c("A", 2, 2),
}


@pytest.mark.parametrize("index,table", [(0, TABLE_B1), (1, TABLE_B3)])
def test_planeparallel_tables(index, table):
    M = planeparallel_flux_matrices(3)[index]
    expected = np.zeros((10, 10))
    for (r, c), v in table.items():
        expected[r - 1, c - 1] = v
    np.testing.assert_allclose(M, expected, rtol=0, atol=1e-14)
    assert {(r + 1, c + 1) for r, c in zip(*np.nonzero(M))} == set(table)


def test_planeparallel_examples():
    B1, B3 = planeparallel_flux_matrices(3)
    assert B3[0, 1] == pytest.approx(1 / math.sqrt(3), abs=1e-15)
    assert B3[1, 0] == pytest.approx(1 / math.sqrt(3), abs=1e-15)
    assert B1[4, 0] == pytest.approx(-math.sqrt(2 / 3) / 2, abs=1e-15)
    assert B1[0, 4] == pytest.approx(-math.sqrt(2 / 3), abs=1e-15)
    assert B1[0, 4] == 2 * B1[4, 0]


def test_planeparallel_layout():
    assert BasisSpec("planeparallel", 3).index == (
        (0, 0), (1, 0), (2, 0), (3, 0), (1, 1), (2, 1), (3, 1), (2, 2), (3, 2), (3, 3))
    with pytest.raises(DomainError):
        planeparallel_flux_matrices(0)


@pytest.mark.parametrize("N", [1, 2, 3, 5, 8])
def test_planeparallel_symmetrization(N):
    B1, B3 = planeparallel_flux_matrices(N)
    s = flux_set("planeparallel", N).symmetrizer
    np.testing.assert_array_equal(B3, B3.T)
    B1s = s[:, None] * B1 / s[None, :]
    np.testing.assert_allclose(B1s, B1s.T, atol=1e-12)
    # both directions see the same wave speeds
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(B1s)), np.sort(np.linalg.eigvalsh(B3)),
                               atol=1e-12)


def test_planeparallel_matches_3d_restriction():
    """Azimuth-even harmonics: B3 is the z-matrix of the 3D basis restricted to k >= 0."""
    N = 4
    A = full3d_flux_matrices(N)
    pos3 = BasisSpec("full3d", N).position
    pp = BasisSpec("planeparallel", N)
    idx = [pos3[lk] for lk in pp.index]
    np.testing.assert_allclose(planeparallel_flux_matrices(N)[1], A[2][np.ix_(idx, idx)],
                               atol=1e-14)


# -- 3D ----------------------------------------------------------------------

def test_full3d_zero_degree():
    for A in full3d_flux_matrices(0):
        assert A.shape == (1, 1) and A[0, 0] == 0.0


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_full3d_quadrature_oracle(N):
    for A, Q in zip(full3d_flux_matrices(N), quadrature_flux_matrices(N)):
        np.testing.assert_allclose(A, Q, atol=1e-13)
        np.testing.assert_array_equal(A, A.T)


def test_full3d_first_block():
    A = full3d_flux_matrices(1)
    r = 1 / math.sqrt(3)
    # m_1 ordering is (k=-1, 0, 1), i.e. proportional to (omega_y, omega_z, omega_x)
    np.testing.assert_allclose([A[i][1:, 0] for i in range(3)],
                               [[0, 0, r], [r, 0, 0], [0, r, 0]], atol=1e-15)


def test_slab_is_3d_k0_block_after_similarity():
    N = 5
    Az = full3d_flux_matrices(N)[2]
    pos = BasisSpec("full3d", N).position
    idx = [pos[(l, 0)] for l in range(N + 1)]
    s = np.sqrt(2 * np.arange(N + 1) + 1.0)
    B = legendre_flux_matrix(N)
    np.testing.assert_allclose(s[:, None] * B / s[None, :], Az[np.ix_(idx, idx)], atol=1e-12)


@pytest.mark.parametrize("geometry,N", [("slab", 4), ("planeparallel", 4), ("full3d", 3)])
def test_block_tridiagonal(geometry, N):
    fs = flux_set(geometry, N)
    deg = fs.basis.degrees
    mask = np.abs(deg[:, None] - deg[None, :]) != 1
    for M in fs.matrices:
        assert np.all(M[mask] == 0.0)


@pytest.mark.parametrize("geometry", ["slab", "planeparallel"])
def test_spectral_bound(geometry):
    for N in range(1, 16):
        fs = flux_set(geometry, N)
        for d in range(len(fs.matrices)):
            assert np.max(np.abs(fs.eigenvalues(d))) < 1.0


# -- matrix absolute value ---------------------------------------------------

def test_matrix_abs_examples():
    np.testing.assert_array_equal(matrix_abs(np.zeros((3, 3))), np.zeros((3, 3)))
    np.testing.assert_allclose(matrix_abs(np.diag([2.0, -3.0])), np.diag([2.0, 3.0]), atol=1e-15)
    P1 = np.array([[0, 1], [1 / 3, 0]])
    np.testing.assert_allclose(matrix_abs(P1, [1, math.sqrt(3)]), np.eye(2) / math.sqrt(3),
                               rtol=0, atol=1e-14)


def test_matrix_abs_rejects_wrong_symmetrizer():
    with pytest.raises(SymmetrizationError):
        matrix_abs(np.array([[0, 1], [1 / 3, 0]]))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_matrix_abs_properties(n, seed):
    r = np.random.default_rng(seed)
    s = r.uniform(0.5, 2.0, n)
    Msym = r.standard_normal((n, n))
    Msym = Msym + Msym.T
    M = (Msym / s[:, None]) * s[None, :]  # S M S^-1 symmetric
    A = matrix_abs(M, s)
    scale = max(1.0, np.abs(M @ M).max())
    np.testing.assert_allclose(A @ A, M @ M, atol=1e-12 * scale)
    np.testing.assert_allclose(matrix_abs(A, s), A, atol=1e-12 * scale)
    assert np.linalg.eigvals(A).real.min() > -1e-12 * scale


# -- reaction ----------------------------------------------------------------

def test_reaction_examples():
    np.testing.assert_array_equal(reaction_matrix(1.0, 1.0, 2.0, 4), [1, 2, 2, 2])
    np.testing.assert_allclose(reaction_matrix(1e-3, 0.0, 1.0, 3), [0, 1000, 1000])
    eps, gamma, dt = 1e-3, 2 / 3, 0.01
    shift = eps / (gamma * dt)
    assert shift == pytest.approx(0.15)
    q = reaction_matrix(eps, 0.0, 1.0, 2, shift)
    # effective total cross-section sigma_t + eps^2 / (gamma dt)
    assert q[1] * eps == pytest.approx(1 + 1.5e-4, rel=1e-12)


def test_reaction_errors():
    with pytest.raises(DomainError):
        reaction_matrix(0.0, 0.0, 1.0, 2)
    with pytest.raises(DomainError):
        Material(-1.0)
    with pytest.raises(DomainError):
        Material(1.0, sigma_t=0.5, sigma_a=1.0)
