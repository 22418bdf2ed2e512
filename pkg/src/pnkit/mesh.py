"""Uniform periodic grids on the unit interval/square and degree-of-freedom layouts."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UnsupportedError
from .moments import BasisSpec

__all__ = ["Scheme", "TraceKind", "Grid", "DofLayout", "build_grid", "neighbor", "dof_layout"]


class Scheme(str, enum.Enum):
    DG_Q1 = "DgQ1"
    HETERO_DG = "HeteroDg"
    HYBRID = "Hybrid"
    FV2 = "Fv2"


class TraceKind(enum.IntEnum):
    """How a moment's interface values are formed."""

    OWN = 0  # the cell's own Q1 polynomial
    CONSTANT = 1  # the cell average
    FROMM = 2  # centered slope from the neighbouring averages


_SCHEME_TRACES = {
    Scheme.DG_Q1: (TraceKind.OWN, TraceKind.OWN),
    Scheme.HETERO_DG: (TraceKind.OWN, TraceKind.CONSTANT),
    Scheme.HYBRID: (TraceKind.OWN, TraceKind.FROMM),
    Scheme.FV2: (TraceKind.FROMM, TraceKind.FROMM),
}


@dataclass(frozen=True)
class Grid:
    """``cells_x`` by ``cells_z`` uniform cells on the periodic unit domain.

    Cells are numbered with x fastest: ``cell = i + cells_x * j``.
    """

    dimension: int
    cells_x: int
    cells_z: int = 1

    @property
    def n_cells(self) -> int:
        return self.cells_x * self.cells_z

    @property
    def h_x(self) -> float:
        return 1.0 / self.cells_x

    @property
    def h_z(self) -> float:
        return 1.0 / self.cells_z if self.dimension == 2 else 1.0

    @property
    def h(self) -> float:
        return max(self.h_x, self.h_z) if self.dimension == 2 else self.h_x

    @property
    def cell_volume(self) -> float:
        return self.h_x * self.h_z

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells_x,) if self.dimension == 1 else (self.cells_x, self.cells_z)

    def centers(self) -> tuple[np.ndarray, ...]:
        """Cell centers per cell, ``(x,)`` in 1D and ``(x, z)`` in 2D."""
        i = np.arange(self.n_cells) % self.cells_x
        x = (i + 0.5) * self.h_x
        if self.dimension == 1:
            return (x,)
        j = np.arange(self.n_cells) // self.cells_x
        return x, (j + 0.5) * self.h_z

    def neighbors(self, direction: int, offset: int) -> np.ndarray:
        """Periodic neighbour of every cell along ``direction``."""
        return neighbor(self, np.arange(self.n_cells), direction, offset)


def build_grid(dimension: int, cells_x: int, cells_z: int | None = None) -> Grid:
    if dimension == 3:
        raise UnsupportedError("three-dimensional grids are not provided")
    if dimension not in (1, 2):
        raise DomainError(f"dimension must be 1 or 2, got {dimension}")
    if cells_z is None:
        cells_z = cells_x if dimension == 2 else 1
    if cells_x < 1 or cells_z < 1:
        raise DomainError("grids need at least one cell per direction")
    if dimension == 1 and cells_z != 1:
        raise DomainError("one-dimensional grids have a single row of cells")
    return Grid(dimension, int(cells_x), int(cells_z))


def neighbor(grid: Grid, cell, direction: int, offset: int):
    """Index of the cell ``offset`` steps away along ``direction``, wrapped periodically."""
    if not -2 <= offset <= 2:
        raise DomainError(f"offset must lie in [-2, 2], got {offset}")
    if direction >= grid.dimension or direction < 0:
        raise DomainError(f"direction {direction} invalid for a {grid.dimension}D grid")
    cell = np.asarray(cell)
    if np.any((cell < 0) | (cell >= grid.n_cells)):
        raise DomainError("cell index out of range")
    i = cell % grid.cells_x
    j = cell // grid.cells_x
    if direction == 0:
        i = (i + offset) % grid.cells_x
    else:
        j = (j + offset) % grid.cells_z
    out = i + grid.cells_x * j
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DofLayout:
    """Cell-major, then moment, then local basis ordering of the unknowns.

    ``modes[m]`` is the number of local basis functions of moment ``m``
    (``2`` or ``4`` for Q1, ``1`` for cell averages). The local Q1 basis is
    ``1, xi`` in 1D and ``1, xi, eta, xi*eta`` in 2D.
    """

    scheme: Scheme
    basis: BasisSpec
    grid: Grid
    modes: tuple[int, ...]
    traces: tuple[TraceKind, ...]
    moment_offsets: np.ndarray = field(repr=False)

    @property
    def per_cell(self) -> int:
        return int(sum(self.modes))

    @property
    def size(self) -> int:
        return self.per_cell * self.grid.n_cells

    @property
    def full_modes(self) -> int:
        return 2 ** self.grid.dimension

    @property
    def cell_offsets(self) -> np.ndarray:
        return np.arange(self.grid.n_cells + 1) * self.per_cell

    def dof(self, cell, moment, mode=0):
        """Global index of local basis function ``mode`` of ``moment`` in ``cell``."""
        return np.asarray(cell) * self.per_cell + self.moment_offsets[moment] + mode

    def own_offsets(self) -> np.ndarray:
        """``(n_cells, moments)`` table of the first index of each moment block."""
        cells = np.arange(self.grid.n_cells)[:, None]
        return cells * self.per_cell + self.moment_offsets[None, :]

    def averages_index(self) -> np.ndarray:
        """Indices of the cell-average coefficient of every (cell, moment)."""
        return self.own_offsets()


def dof_layout(scheme: Scheme | str, basis: BasisSpec, grid: Grid) -> DofLayout:
    scheme = Scheme(scheme)
    if basis.geometry.space_dimension != grid.dimension:
        raise UnsupportedError(
            f"{basis.geometry.value} moments need a {basis.geometry.space_dimension}D grid"
        )
    q1 = 2 ** grid.dimension
    first, rest = _SCHEME_TRACES[scheme]
    L = basis.moment_count
    traces = (first,) + (rest,) * (L - 1)
    modes = tuple(q1 if t is TraceKind.OWN else 1 for t in traces)
    offsets = np.concatenate([[0], np.cumsum(modes)[:-1]]).astype(np.int64)
    return DofLayout(scheme, basis, grid, modes, traces, offsets)
