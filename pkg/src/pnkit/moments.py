"""Spherical-harmonic moment bases, flux matrices and reaction diagonals.

Three reduced geometries are supported:

* ``slab``: Legendre moments in one space dimension, unnormalized convention
  in which the angular average is the zeroth moment.
* ``planeparallel``: real normalized harmonics that are even in the azimuth,
  two space dimensions (x, z).
* ``full3d``: all real normalized harmonics, three flux matrices.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SymmetrizationError

__all__ = [
    "Geometry",
    "BasisSpec",
    "FluxSet",
    "Material",
    "recursion_coeffs",
    "legendre_flux_matrix",
    "planeparallel_flux_matrices",
    "full3d_flux_matrices",
    "matrix_abs",
    "flux_set",
    "reaction_matrix",
]

SYMMETRIZATION_TOL = 1e-10


class Geometry(str, enum.Enum):
    SLAB = "slab"
    PLANE_PARALLEL = "planeparallel"
    FULL_3D = "full3d"

    @property
    def space_dimension(self) -> int:
        return {"slab": 1, "planeparallel": 2, "full3d": 3}[self.value]


@dataclass(frozen=True)
class BasisSpec:
    """Truncation degree ``N`` and the ordering of the retained moments.

    ``index`` lists the ``(l, k)`` pairs in storage order; ``position`` is the
    inverse map.
    """

    geometry: Geometry
    degree: int
    index: tuple[tuple[int, int], ...] = field(init=False, repr=False)

    def __post_init__(self):
        geometry = Geometry(self.geometry)
        object.__setattr__(self, "geometry", geometry)
        if self.degree < 0:
            raise DomainError(f"degree must be non-negative, got {self.degree}")
        if geometry is Geometry.SLAB:
            index = [(l, 0) for l in range(self.degree + 1)]
        elif geometry is Geometry.PLANE_PARALLEL:
            index = [(l, k) for k in range(self.degree + 1) for l in range(k, self.degree + 1)]
        else:
            index = [(l, k) for l in range(self.degree + 1) for k in range(-l, l + 1)]
        object.__setattr__(self, "index", tuple(index))

    @property
    def moment_count(self) -> int:
        return len(self.index)

    @property
    def position(self) -> dict[tuple[int, int], int]:
        return {lk: i for i, lk in enumerate(self.index)}

    @property
    def degrees(self) -> np.ndarray:
        return np.array([l for l, _ in self.index])

    @property
    def orders(self) -> np.ndarray:
        return np.array([k for _, k in self.index])


def recursion_coeffs(l: int, k: int) -> dict[str, float]:
    """Coefficients of the three-term recurrences of the complex harmonics.

    Returns the six values ``A..F`` for degree ``l`` and order ``k``. A factor
    whose radicand is non-positive evaluates to exactly zero.
    """
    if l < 0 or abs(k) > l:
        raise DomainError(f"recursion coefficients need 0 <= |k| <= l, got l={l}, k={k}")

    def root(num: int, den: int) -> float:
        if num <= 0 or den <= 0:
            return 0.0
        return math.sqrt(num / den)

    up = (2 * l + 3) * (2 * l + 1)
    down = (2 * l + 1) * (2 * l - 1)
    return {
        "A": root((l - k + 1) * (l + k + 1), up),
        "B": root((l - k) * (l + k), down),
        "C": root((l + k + 1) * (l + k + 2), up),
        "D": root((l - k) * (l - k - 1), down),
        "E": root((l - k + 1) * (l - k + 2), up),
        "F": root((l + k) * (l + k - 1), down),
    }


def _coeff(name: str, l: int, k: int) -> float:
    return recursion_coeffs(l, k)[name]


def legendre_flux_matrix(N: int) -> np.ndarray:
    """Slab flux matrix for Legendre moments normalized by the angular average."""
    if N < 0:
        raise DomainError(f"N must be non-negative, got {N}")
    B = np.zeros((N + 1, N + 1))
    for l in range(N + 1):
        if l + 1 <= N:
            B[l, l + 1] = (l + 1) / (2 * l + 1)
        if l >= 1:
            B[l, l - 1] = l / (2 * l + 1)
    return B


def planeparallel_flux_matrices(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Flux matrices ``(B_x, B_z)`` for the azimuth-even harmonics up to degree ``N``.

    Storage is order-major: ``k = 0..N`` and, inside each block, ``l = k..N``.
    """
    if N < 1:
        raise DomainError(f"plane-parallel flux matrices need N >= 1, got {N}")
    basis = BasisSpec(Geometry.PLANE_PARALLEL, N)
    pos = basis.position
    L = basis.moment_count
    Bx = np.zeros((L, L))
    Bz = np.zeros((L, L))

    def put(M, row, col, value):
        if col in pos and value != 0.0:
            M[pos[row], pos[col]] += value

    for l, k in basis.index:
        row = (l, k)
        if l - 1 >= k:
            put(Bz, row, (l - 1, k), _coeff("A", l - 1, k))
        if l + 1 <= N:
            put(Bz, row, (l + 1, k), _coeff("B", l + 1, k))
        if k == 0:
            # the k = -1 neighbours fold onto k = +1
            if l - 1 >= 1:
                put(Bx, row, (l - 1, 1), _coeff("E", l - 1, 1))
            if l + 1 <= N:
                put(Bx, row, (l + 1, 1), -_coeff("F", l + 1, 1))
            continue
        if l - 1 >= k - 1:
            put(Bx, row, (l - 1, k - 1), -0.5 * _coeff("C", l - 1, k - 1))
        if l + 1 <= N:
            put(Bx, row, (l + 1, k - 1), 0.5 * _coeff("D", l + 1, k - 1))
        if l - 1 >= k + 1:
            put(Bx, row, (l - 1, k + 1), 0.5 * _coeff("E", l - 1, k + 1))
        if l + 1 <= N:
            put(Bx, row, (l + 1, k + 1), -0.5 * _coeff("F", l + 1, k + 1))
    return Bx, Bz


def _complex_direction_matrices(N: int):
    """Multiplication by the direction cosines in the complex harmonic basis.

    ``K[i][r, c]`` is the coefficient of ``Y_r`` in ``omega_i * Y_c``.
    """
    basis = BasisSpec(Geometry.FULL_3D, N)
    pos = basis.position
    L = basis.moment_count
    raise_ = np.zeros((L, L), dtype=complex)
    lower = np.zeros((L, L), dtype=complex)
    Kz = np.zeros((L, L), dtype=complex)
    for l, k in basis.index:
        c = pos[(l, k)]
        rc = recursion_coeffs(l, k)
        for target, value, M in (
            ((l + 1, k), rc["A"], Kz),
            ((l - 1, k), rc["B"], Kz),
            ((l + 1, k + 1), -rc["C"], raise_),
            ((l - 1, k + 1), rc["D"], raise_),
            ((l + 1, k - 1), rc["E"], lower),
            ((l - 1, k - 1), -rc["F"], lower),
        ):
            if target in pos and value != 0.0:
                M[pos[target], c] += value
    Kx = 0.5 * (raise_ + lower)
    Ky = (raise_ - lower) / 2j
    return Kx, Ky, Kz


def _real_transform(N: int) -> np.ndarray:
    """Matrix ``T`` with ``m = T Y`` from complex to real harmonics."""
    basis = BasisSpec(Geometry.FULL_3D, N)
    pos = basis.position
    L = basis.moment_count
    T = np.zeros((L, L), dtype=complex)
    s = 1.0 / math.sqrt(2.0)
    for l, k in basis.index:
        r = pos[(l, k)]
        if k == 0:
            T[r, r] = 1.0
        elif k > 0:
            T[r, pos[(l, k)]] = (-1) ** k * s
            T[r, pos[(l, -k)]] = s
        else:
            a = -k
            T[r, pos[(l, a)]] = (-1) ** a * s / 1j
            T[r, pos[(l, -a)]] = -s / 1j
    return T


def full3d_flux_matrices(N: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Symmetric flux matrices ``(A_x, A_y, A_z)`` for the real harmonics up to ``N``."""
    if N < 0:
        raise DomainError(f"N must be non-negative, got {N}")
    T = _real_transform(N)
    out = []
    for K in _complex_direction_matrices(N):
        # A[i, j] = int omega m_i m_j  with  omega Y_c = sum_r K[r, c] Y_r
        A = T @ K.T @ T.conj().T
        if np.max(np.abs(A.imag)) > 1e-12:
            raise SymmetrizationError("complex-to-real transform left an imaginary part")
        A = A.real.copy()
        A[np.abs(A) < 1e-15] = 0.0
        out.append(A)
    return tuple(out)


def matrix_abs(M: np.ndarray, S: np.ndarray | None = None) -> np.ndarray:
    """Matrix absolute value ``|M|`` through the diagonal symmetrizer ``S``.

    ``S`` is the diagonal (a vector) such that ``S M S^-1`` is symmetric. The
    result is ``S^-1 U |Lambda| U^T S``.
    """
    M = np.asarray(M, dtype=float)
    s = np.ones(M.shape[0]) if S is None else np.asarray(S, dtype=float)
    if s.ndim == 2:
        s = np.diag(s)
    Ms = (s[:, None] * M) / s[None, :]
    scale = max(1.0, float(np.max(np.abs(Ms))) if Ms.size else 1.0)
    residual = float(np.max(np.abs(Ms - Ms.T))) if Ms.size else 0.0
    if residual > SYMMETRIZATION_TOL * scale:
        raise SymmetrizationError(
            f"S M S^-1 is not symmetric (residual {residual:.2e})"
        )
    lam, U = np.linalg.eigh(0.5 * (Ms + Ms.T))
    abs_s = (U * np.abs(lam)) @ U.T
    out = (abs_s / s[:, None]) * s[None, :]
    out[np.abs(out) < 1e-15 * scale] = 0.0
    return out


def _symmetrizer(basis: BasisSpec) -> np.ndarray:
    if basis.geometry is Geometry.SLAB:
        return np.sqrt(2.0 * basis.degrees + 1.0)
    if basis.geometry is Geometry.PLANE_PARALLEL:
        return np.where(basis.orders == 0, 1.0, math.sqrt(2.0))
    return np.ones(basis.moment_count)


@dataclass(frozen=True)
class FluxSet:
    """Flux matrices of one basis, their absolute values and the symmetrizer.

    ``matrices[d]`` multiplies the moment vector in direction ``d``;
    ``symmetrizer`` is the diagonal ``S`` with ``S B S^-1`` symmetric for
    every direction.
    """

    basis: BasisSpec
    matrices: tuple[np.ndarray, ...]
    abs_matrices: tuple[np.ndarray, ...]
    symmetrizer: np.ndarray

    @property
    def moment_count(self) -> int:
        return self.basis.moment_count

    def eigenvalues(self, direction: int) -> np.ndarray:
        s = self.symmetrizer
        Ms = (s[:, None] * self.matrices[direction]) / s[None, :]
        return np.linalg.eigvalsh(0.5 * (Ms + Ms.T))


def flux_set(geometry: Geometry | str, N: int) -> FluxSet:
    """Build the :class:`FluxSet` for ``geometry`` at degree ``N``."""
    basis = BasisSpec(Geometry(geometry), N)
    if basis.geometry is Geometry.SLAB:
        mats = (legendre_flux_matrix(N),)
    elif basis.geometry is Geometry.PLANE_PARALLEL:
        mats = planeparallel_flux_matrices(N)
    else:
        mats = full3d_flux_matrices(N)
    S = _symmetrizer(basis)
    return FluxSet(basis, mats, tuple(matrix_abs(M, S) for M in mats), S)


@dataclass(frozen=True)
class Material:
    """Cross sections (scalar or one value per cell) and the scaling ``epsilon``."""

    epsilon: float
    sigma_t: float | np.ndarray = 1.0
    sigma_a: float | np.ndarray = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        st = np.asarray(self.sigma_t, dtype=float)
        sa = np.asarray(self.sigma_a, dtype=float)
        if np.any(sa < 0):
            raise DomainError("sigma_a must be non-negative")
        if np.any(st - self.epsilon**2 * sa < 0):
            raise DomainError("sigma_t - epsilon^2 sigma_a must be non-negative")

    def cellwise(self, n_cells: int) -> tuple[np.ndarray, np.ndarray]:
        st = np.broadcast_to(np.asarray(self.sigma_t, dtype=float), (n_cells,))
        sa = np.broadcast_to(np.asarray(self.sigma_a, dtype=float), (n_cells,))
        return st.copy(), sa.copy()


def reaction_matrix(eps, sigma_a, sigma_t, moment_count: int, shift: float = 0.0) -> np.ndarray:
    """Diagonal of ``Q``: ``eps*sigma_a`` for the zeroth moment, ``sigma_t/eps`` otherwise.

    ``shift`` is added to every entry. Cross sections may be arrays over
    cells, in which case the result has shape ``(n_cells, moment_count)``.
    """
    if not eps > 0:
        raise DomainError(f"epsilon must be positive, got {eps}")
    if shift < 0:
        raise DomainError(f"shift must be non-negative, got {shift}")
    sa = np.asarray(sigma_a, dtype=float)
    st = np.asarray(sigma_t, dtype=float)
    sa, st = np.broadcast_arrays(sa, st)
    q = np.empty(sa.shape + (moment_count,))
    q[..., 0] = eps * sa
    q[..., 1:] = (st / eps)[..., None]
    return q + shift
