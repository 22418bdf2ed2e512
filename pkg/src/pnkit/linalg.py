"""Sparse matrix construction and direct solves with residual verification."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, PnkitError, SingularSystemError, SolveAccuracyError

__all__ = ["from_triplets", "Factorization", "CirculantFactorization", "NotCirculantError",
           "SplitOperator", "nested_dissection_order", "lu_solve", "residual_norm", "write_coo"]

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


def from_triplets(shape, rows, cols, vals) -> sp.csr_matrix:
    """CSR matrix from coordinate triplets; duplicates are summed, zeros dropped."""
    if isinstance(shape, int):
        shape = (shape, shape)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    if not (rows.shape == cols.shape == vals.shape):
        raise DomainError("triplet arrays differ in length")
    if rows.size and (rows.min() < 0 or rows.max() >= shape[0]
                      or cols.min() < 0 or cols.max() >= shape[1]):
        raise DomainError("triplet index out of range")
    A = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def residual_norm(A, x, b) -> float:
    """Relative residual ``|A x - b| / |b|`` in the 2-norm (absolute when ``b = 0``)."""
    r = np.linalg.norm(A @ x - b)
    nb = np.linalg.norm(b)
    return float(r / nb) if nb > 0 else float(r)


def _bisect(I: np.ndarray, J: np.ndarray) -> list[np.ndarray]:
    if I.size * J.size <= 4:
        return [np.array([(i, j) for j in J for i in I], dtype=np.int64).reshape(-1, 2)]
    if I.size >= J.size:
        m = I.size // 2
        sep = np.array([(I[m], j) for j in J], dtype=np.int64)
        return _bisect(I[:m], J) + _bisect(I[m + 1:], J) + [sep]
    m = J.size // 2
    sep = np.array([(i, J[m]) for i in I], dtype=np.int64)
    return _bisect(I, J[:m]) + _bisect(I, J[m + 1:]) + [sep]


def nested_dissection_order(cells_x: int, cells_z: int) -> np.ndarray:
    """Geometric nested-dissection ordering of a periodic ``cells_x`` by ``cells_z`` grid.

    Row ``j = 0`` and column ``i = 0`` are ordered last; they cut the torus
    into a rectangle that is bisected recursively.
    """
    parts = _bisect(np.arange(1, cells_x), np.arange(1, cells_z))
    parts.append(np.array([(i, 0) for i in range(1, cells_x)], dtype=np.int64).reshape(-1, 2))
    parts.append(np.array([(0, j) for j in range(cells_z)], dtype=np.int64).reshape(-1, 2))
    ij = np.concatenate(parts)
    return ij[:, 0] + cells_x * ij[:, 1]


@dataclass
class SplitOperator:
    """Unrounded description of ``A = off + correction + diag(d)``.

    ``off`` is the rounded sparse part and ``correction`` the rounding error of
    its entries on ``exact_rows``. Residuals on those rows are evaluated in
    extended precision from these pieces, so refinement converges to the
    solution of the unrounded rows. Conservation laws encoded by exact
    cancellation between rows survive this way, even when a tiny
    time-derivative term sits next to O(1) advection entries.
    """

    off: sp.spmatrix
    diag: np.ndarray
    correction: sp.spmatrix | None = None
    exact_rows: np.ndarray | None = None

    def __post_init__(self):
        self.off = sp.csr_matrix(self.off)
        self.diag = np.asarray(self.diag, dtype=float)
        rows = (np.arange(self.off.shape[0]) if self.exact_rows is None
                else np.asarray(self.exact_rows, dtype=np.int64))
        self.exact_rows = rows
        block = self.off[rows]
        if self.correction is not None:
            block = block.astype(np.longdouble) + sp.csr_matrix(self.correction)[rows].astype(np.longdouble)
        self._rows_ext = sp.csr_matrix(block, dtype=np.longdouble)
        self._diag_ext = self.diag[rows].astype(np.longdouble)

    def residual(self, x: np.ndarray, b: np.ndarray) -> np.ndarray:
        r = b - self.off @ x - self.diag * x
        rows = self.exact_rows
        xl = x.astype(np.longdouble)
        exact = b[rows].astype(np.longdouble) - self._rows_ext @ xl - self._diag_ext * xl[rows]
        r[rows] = exact.astype(float)
        return r


class _VerifiedSolver:
    """Residual-checked solve with iterative refinement.

    Without ``parts``, refinement runs only while the double-precision
    residual exceeds the tolerance. With a :class:`SplitOperator` it runs
    until the correction stalls, using residuals of the unrounded pieces.
    """

    matrix: sp.spmatrix
    tol: float
    refine: int
    parts: SplitOperator | None = None

    def _raw_solve(self, b: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = self._raw_solve(b)
        if self.parts is None:
            res = residual_norm(self.matrix, x, b)
            for _ in range(self.refine):
                if res <= 0.1 * self.tol:
                    break
                x = x + self._raw_solve(b - self.matrix @ x)
                res = residual_norm(self.matrix, x, b)
        else:
            last = np.inf
            for _ in range(self.refine):
                dx = self._raw_solve(self.parts.residual(x, b))
                x = x + dx
                size = np.linalg.norm(dx)
                if size <= np.finfo(float).eps * np.linalg.norm(x) or size >= 0.5 * last:
                    break
                last = size
            res = residual_norm(self.matrix, x, b)
        if not np.isfinite(res) or res > self.tol:
            raise SolveAccuracyError(res, self.tol)
        return x


class Factorization(_VerifiedSolver):
    """Sparse LU factors of a square matrix, reused across right-hand sides.

    With ``blocks=(cells_x, cells_z, per_cell)`` the unknowns are grouped by
    cell and ordered by nested dissection before factorization; otherwise
    SuperLU's COLAMD ordering is used. Each solve is followed by up to
    ``refine`` steps of iterative refinement and a relative residual check.
    """

    def __init__(self, A, tol: float = RESIDUAL_TOL, refine: int = 3, blocks=None, parts=None):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise DomainError("matrix must be square")
        self.matrix = A
        self.tol = tol
        self.refine = refine
        self.parts = parts
        self._perm = None
        try:
            if blocks is not None and blocks[1] > 1:
                mx, mz, pc = blocks
                cells = nested_dissection_order(mx, mz)
                perm = (cells[:, None] * pc + np.arange(pc)[None, :]).reshape(-1)
                self._perm = perm
                Ap = A[perm][:, perm].tocsc()
                self._lu = spla.splu(Ap, permc_spec="NATURAL", diag_pivot_thresh=0.1,
                                     options={"SymmetricMode": True})
            else:
                self._lu = spla.splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularSystemError(f"sparse LU failed: {exc}") from exc
        log.debug("factorized %d x %d, nnz(L+U)=%d", *A.shape,
                  self._lu.L.nnz + self._lu.U.nnz)

    def _raw_solve(self, b):
        if self._perm is None:
            return self._lu.solve(b)
        x = np.empty_like(b)
        x[self._perm] = self._lu.solve(b[self._perm])
        return x


class NotCirculantError(PnkitError):
    """The matrix is not invariant under periodic cell translations."""


class CirculantFactorization(_VerifiedSolver):
    """Direct solver for operators invariant under periodic cell shifts.

    The cell-to-cell coupling blocks are read off the rows of cell 0; a
    discrete Fourier transform over the cell grid then block-diagonalizes the
    operator into one ``per_cell`` square system per wavenumber.
    """

    def __init__(self, A, cells_x: int, cells_z: int, per_cell: int,
                 tol: float = RESIDUAL_TOL, refine: int = 3, check: bool = True, parts=None):
        A = sp.csr_matrix(A)
        n = cells_x * cells_z * per_cell
        if A.shape != (n, n):
            raise DomainError("matrix size does not match the cell grid")
        self.matrix = A
        self.tol = tol
        self.refine = refine
        self.parts = parts
        self._shape = (cells_z, cells_x, per_cell)
        head = A[:per_cell].tocoo()
        K = np.zeros((cells_z * cells_x, per_cell, per_cell))
        cell, local = np.divmod(head.col, per_cell)
        np.add.at(K, (cell, head.row, local), head.data)
        K = K.reshape(cells_z, cells_x, per_cell, per_cell)
        self._kernel = K
        # symbol(k) = sum_d K[d] exp(+i k d)
        self._symbol = np.fft.ifft2(K, axes=(0, 1)) * (cells_x * cells_z)
        if check:
            v = np.random.default_rng(12345).standard_normal(n)
            ref = A @ v
            if np.linalg.norm(self.apply(v) - ref) > 1e-12 * max(np.linalg.norm(ref), 1.0):
                raise NotCirculantError("operator is not block-circulant over cells")
        if np.any(~np.isfinite(self._symbol)):
            raise SingularSystemError("non-finite Fourier symbol")

    def apply(self, x: np.ndarray) -> np.ndarray:
        xh = np.fft.fft2(x.reshape(self._shape), axes=(0, 1))
        yh = np.einsum("zxij,zxj->zxi", self._symbol, xh)
        return np.fft.ifft2(yh, axes=(0, 1)).real.reshape(-1)

    def _raw_solve(self, b):
        bh = np.fft.fft2(b.reshape(self._shape), axes=(0, 1))
        try:
            xh = np.linalg.solve(self._symbol, bh[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(f"singular Fourier block: {exc}") from exc
        return np.fft.ifft2(xh, axes=(0, 1)).real.reshape(-1)


def lu_solve(A, b) -> np.ndarray:
    """Solve ``A x = b`` once with a verified residual."""
    return Factorization(A).solve(b)


def write_coo(A, path, one_based: bool = False) -> None:
    """Write the nonzeros of ``A`` as ``row,col,value`` CSV rows."""
    coo = sp.coo_matrix(A)
    order = np.lexsort((coo.col, coo.row))
    shift = 1 if one_based else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "value"])
        for k in order:
            if coo.data[k] != 0.0:
                w.writerow([int(coo.row[k]) + shift, int(coo.col[k]) + shift, repr(float(coo.data[k]))])
