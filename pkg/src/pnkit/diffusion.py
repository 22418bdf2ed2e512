"""Continuous Q1 finite elements for the limiting diffusion equation.

Solves ``phi_t - div(D grad phi) + sigma_a phi = 4 pi <f>`` with
``D = 1 / (3 sigma_t)`` on the periodic unit interval or square.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DomainError
from .linalg import Factorization, from_triplets
from .mesh import Grid

__all__ = ["DiffusionOperators", "DiffusionField", "assemble_diffusion",
           "solve_diffusion_steady", "solve_diffusion_reference"]

_K1 = np.array([[1.0, -1.0], [-1.0, 1.0]])
_M1 = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0


@dataclass
class DiffusionOperators:
    stiffness: sp.csr_matrix  # diffusion plus absorption
    mass: sp.csr_matrix


def _element_nodes(grid: Grid) -> np.ndarray:
    """Global node numbers of each element's vertices, shape ``(n_cells, 2**dim)``."""
    mx = grid.cells_x
    i = np.arange(grid.n_cells) % mx
    if grid.dimension == 1:
        return np.stack([i, (i + 1) % mx], axis=1)
    j = np.arange(grid.n_cells) // mx
    mz = grid.cells_z
    ip, jp = (i + 1) % mx, (j + 1) % mz
    # local vertex order (x, z): (0,0), (1,0), (0,1), (1,1), matching kron(z, x)
    return np.stack([i + mx * j, ip + mx * j, i + mx * jp, ip + mx * jp], axis=1)


def _element_matrices(grid: Grid):
    if grid.dimension == 1:
        h = grid.h_x
        return _K1 / h, _M1 * h
    hx, hz = grid.h_x, grid.h_z
    Kx = np.kron(_M1 * hz, _K1 / hx)
    Kz = np.kron(_K1 / hz, _M1 * hx)
    return Kx + Kz, np.kron(_M1 * hz, _M1 * hx)


def assemble_diffusion(grid: Grid, sigma_t, sigma_a=0.0) -> DiffusionOperators:
    """Global ``(1/(3 sigma_t)) (grad phi, grad v) + (sigma_a phi, v)`` and the mass matrix."""
    nc = grid.n_cells
    st = np.broadcast_to(np.asarray(sigma_t, dtype=float), (nc,))
    sa = np.broadcast_to(np.asarray(sigma_a, dtype=float), (nc,))
    if np.any(st <= 0):
        raise DomainError("sigma_t must be positive")
    Ke, Me = _element_matrices(grid)
    nodes = _element_nodes(grid)
    rows = np.repeat(nodes, nodes.shape[1], axis=1).reshape(-1)
    cols = np.tile(nodes, (1, nodes.shape[1])).reshape(-1)
    kvals = (Ke[None] / (3.0 * st)[:, None, None] + sa[:, None, None] * Me[None]).reshape(-1)
    mvals = np.broadcast_to(Me, (nc,) + Me.shape).reshape(-1)
    n = grid.n_cells
    return DiffusionOperators(from_triplets(n, rows, cols, kvals),
                              from_triplets(n, rows, cols, mvals))


@dataclass
class DiffusionField:
    """Nodal values of a periodic Q1 field; node ``(i, j)`` sits at ``(i h_x, j h_z)``."""

    grid: Grid
    values: np.ndarray

    def evaluate(self, x, z=None) -> np.ndarray:
        g = self.grid
        x = np.mod(np.asarray(x, dtype=float), 1.0)
        i = np.minimum(np.floor(x / g.h_x).astype(int), g.cells_x - 1)
        s = x / g.h_x - i
        ip = (i + 1) % g.cells_x
        if g.dimension == 1:
            return (1 - s) * self.values[i] + s * self.values[ip]
        z = np.mod(np.asarray(z, dtype=float), 1.0)
        j = np.minimum(np.floor(z / g.h_z).astype(int), g.cells_z - 1)
        t = z / g.h_z - j
        jp = (j + 1) % g.cells_z
        v = self.values
        mx = g.cells_x
        return ((1 - s) * (1 - t) * v[i + mx * j] + s * (1 - t) * v[ip + mx * j]
                + (1 - s) * t * v[i + mx * jp] + s * t * v[ip + mx * jp])

    def nodes(self) -> tuple[np.ndarray, ...]:
        g = self.grid
        k = np.arange(g.n_cells)
        x = (k % g.cells_x) * g.h_x
        if g.dimension == 1:
            return (x,)
        return x, (k // g.cells_x) * g.h_z

    def to_csv(self, path) -> None:
        coords = self.nodes()
        header = ["x", "phi"] if len(coords) == 1 else ["x", "z", "phi"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in zip(*coords, self.values):
                w.writerow([repr(float(v)) for v in row])


def _interpolate(grid: Grid, initial) -> np.ndarray:
    g = DiffusionField(grid, np.zeros(grid.n_cells))
    return np.asarray(initial(*g.nodes()), dtype=float) * np.ones(grid.n_cells)


def solve_diffusion_steady(grid: Grid, sigma_t, sigma_a, mean_source) -> DiffusionField:
    ops = assemble_diffusion(grid, sigma_t, sigma_a)
    f = np.broadcast_to(np.asarray(mean_source, dtype=float), (grid.n_cells,))
    rhs = 4.0 * math.pi * (ops.mass @ f)
    return DiffusionField(grid, Factorization(ops.stiffness).solve(rhs))


def solve_diffusion_reference(grid: Grid, sigma_t, sigma_a, initial, final_time: float,
                              dt: float, mean_source=0.0, bdf_order: int = 2) -> DiffusionField:
    """BDF time integration from the nodal interpolant of ``initial``.

    BDF2 starts with one backward Euler step. ``mean_source`` is the nodal
    angular average of the source.
    """
    from .timeloop import bdf_coefficients

    if dt <= 0 or final_time <= 0:
        raise DomainError("dt and final_time must be positive")
    n = max(1, math.ceil(final_time / dt - 1e-9))
    dt = final_time / n
    ops = assemble_diffusion(grid, sigma_t, sigma_a)
    f = np.broadcast_to(np.asarray(mean_source, dtype=float), (grid.n_cells,))
    load = 4.0 * math.pi * (ops.mass @ f)
    history = [_interpolate(grid, initial)]
    factors = {}
    for _ in range(n):
        order = min(bdf_order, len(history))
        gamma, betas = bdf_coefficients(order)
        if order not in factors:
            factors[order] = Factorization((ops.mass / (gamma * dt) + ops.stiffness).tocsc())
        past = sum(b * h for b, h in zip(betas, history))
        new = factors[order].solve(ops.mass @ past / (gamma * dt) + load)
        history = [new] + history[: bdf_order - 1]
    return DiffusionField(grid, history[0])
