"""Weak-form assembly of the steady moment operator for all four schemes.

A single Galerkin assembler covers every scheme. Each moment of each cell
carries a *trace polynomial*: the coefficients of ``1, xi[, eta, xi*eta]``
expressed as a linear combination of at most two unknowns. Q1 moments use
their own coefficients, piecewise-constant moments either their average or a
centered (Fromm) slope built from the neighbouring averages. Interface
integrals of the upwind flux are evaluated exactly with two-point Gauss
quadrature; volume terms use the cell's own representation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import DegenerateSystemError, DomainError, UnsupportedError
from .linalg import SplitOperator, from_triplets
from .mesh import DofLayout, Grid, Scheme, TraceKind, dof_layout
from .moments import BasisSpec, FluxSet, Material, reaction_matrix

__all__ = [
    "State",
    "SteadySystem",
    "TraceValues",
    "fromm_traces_1d",
    "fromm_traces_2d",
    "upwind_flux",
    "mode_values",
    "mass_diagonal",
    "trace_maps",
    "trace_polynomials",
    "assemble_steady",
    "symmetrizer_weights",
    "energy_norm",
    "evaluate_rho",
    "project",
]

_GAUSS2 = np.array([-1.0, 1.0]) / math.sqrt(3.0)
_MASS_1D = np.array([1.0, 1.0 / 3.0])


def mode_values(dimension: int, xi, eta=None) -> np.ndarray:
    """Local basis ``1, xi`` (1D) or ``1, xi, eta, xi*eta`` (2D), stacked on axis 0."""
    xi = np.asarray(xi, dtype=float)
    if dimension == 1:
        return np.stack([np.ones_like(xi), xi])
    eta = np.asarray(eta, dtype=float)
    xi, eta = np.broadcast_arrays(xi, eta)
    return np.stack([np.ones_like(xi), xi, eta, xi * eta])


def _mode_gradient(dimension: int, xi, eta=None) -> np.ndarray:
    """Reference-coordinate derivatives, shape ``(dimension, modes, ...)``."""
    xi = np.asarray(xi, dtype=float)
    if dimension == 1:
        z = np.zeros_like(xi)
        return np.stack([np.stack([z, np.ones_like(xi)])])
    eta = np.asarray(eta, dtype=float)
    xi, eta = np.broadcast_arrays(xi, eta)
    z, o = np.zeros_like(xi), np.ones_like(xi)
    return np.stack([np.stack([z, o, z, eta]), np.stack([z, z, o, xi])])


def mass_factors(dimension: int) -> np.ndarray:
    """``int psi_a^2`` over the reference cell divided by its volume."""
    if dimension == 1:
        return _MASS_1D.copy()
    return np.outer(_MASS_1D, _MASS_1D).reshape(-1)


def mass_diagonal(layout: DofLayout) -> np.ndarray:
    """Diagonal of the (orthogonal-basis) mass matrix for every unknown."""
    f = mass_factors(layout.grid.dimension) * layout.grid.cell_volume
    per_cell = np.concatenate([f[:n] for n in layout.modes])
    return np.tile(per_cell, layout.grid.n_cells)


# ---------------------------------------------------------------------------
# interface traces


@dataclass(frozen=True)
class TraceValues:
    """Average and jump ``u^+ - u^-`` of the traces at one interface.

    In 2D the traces are affine along the interface; ``*_slope`` holds the
    coefficient of the local transverse coordinate.
    """

    average: np.ndarray
    jump: np.ndarray
    average_slope: np.ndarray | None = None
    jump_slope: np.ndarray | None = None


def fromm_traces_1d(window) -> TraceValues:
    """Traces at ``i+1/2`` from the averages ``(u_{i-1}, u_i, u_{i+1}, u_{i+2})``."""
    w = np.asarray(window, dtype=float)
    if w.shape[0] != 4:
        raise DomainError("a 1D Fromm window holds exactly four cell averages")
    um1, u0, u1, u2 = w
    avg = (-u2 + 5.0 * u1 + 5.0 * u0 - um1) / 8.0
    jump = (-u2 + 3.0 * u1 - 3.0 * u0 + um1) / 4.0
    return TraceValues(avg, jump)


def fromm_traces_2d(patch, orientation: str = "x") -> TraceValues:
    """Traces on the interface right of (``x``) or above (``z``) the patch center.

    ``patch[a, b]`` is the average of the cell offset by ``(a-2, b-2)`` in
    ``(x, z)``; trailing axes (moments) are carried along.
    """
    p = np.asarray(patch, dtype=float)
    if p.shape[:2] != (5, 5):
        raise DomainError("a 2D Fromm patch is 5 x 5 cell averages")
    if orientation == "z":
        p = np.swapaxes(p, 0, 1)
    elif orientation != "x":
        raise DomainError(f"orientation must be 'x' or 'z', got {orientation!r}")

    def slopes(a, b):
        normal = (p[a + 1, b] - p[a - 1, b]) / 4.0
        transverse = (p[a, b + 1] - p[a, b - 1]) / 4.0
        return normal, transverse

    sn0, st0 = slopes(2, 2)
    sn1, st1 = slopes(3, 2)
    minus = p[2, 2] + sn0
    plus = p[3, 2] - sn1
    return TraceValues(
        average=0.5 * (minus + plus),
        jump=plus - minus,
        average_slope=0.5 * (st0 + st1),
        jump_slope=st1 - st0,
    )


def upwind_flux(flux: FluxSet, direction: int, trace: TraceValues, normal: float = 1.0):
    """Upwind numerical flux ``n B avg - |n|/2 |B| jump`` (moments on the last axis).

    Returns the constant part, and the transverse coefficient as a second
    value when ``trace`` is affine.
    """
    B = flux.matrices[direction]
    D = flux.abs_matrices[direction]

    def f(avg, jump):
        return normal * (np.asarray(avg) @ B.T) - 0.5 * abs(normal) * (np.asarray(jump) @ D.T)

    const = f(trace.average, trace.jump)
    if trace.average_slope is None:
        return const
    return const, f(trace.average_slope, trace.jump_slope)


def trace_maps(layout: DofLayout) -> tuple[np.ndarray, np.ndarray]:
    """Index/weight tables ``(n_cells, moments, modes, 2)`` of the trace polynomials."""
    grid = layout.grid
    nc, L, P = grid.n_cells, layout.basis.moment_count, layout.full_modes
    idx = np.zeros((nc, L, P, 2), dtype=np.int64)
    w = np.zeros((nc, L, P, 2))
    own = layout.own_offsets()
    for m, kind in enumerate(layout.traces):
        idx[:, m, :, :] = own[:, m, None, None]
        if kind is TraceKind.OWN:
            idx[:, m, :, 0] = own[:, m, None] + np.arange(P)[None, :]
            w[:, m, :, 0] = 1.0
            continue
        w[:, m, 0, 0] = 1.0
        if kind is TraceKind.CONSTANT:
            continue
        for d in range(grid.dimension):
            p = 1 + d  # xi or eta coefficient
            idx[:, m, p, 0] = own[grid.neighbors(d, +1), m]
            idx[:, m, p, 1] = own[grid.neighbors(d, -1), m]
            w[:, m, p, 0] = 0.25
            w[:, m, p, 1] = -0.25
    return idx, w


def trace_polynomials(layout: DofLayout, coeffs: np.ndarray) -> np.ndarray:
    """Coefficients ``(n_cells, moments, modes)`` of every trace polynomial."""
    idx, w = trace_maps(layout)
    return np.einsum("cmpk,cmpk->cmp", w, np.asarray(coeffs)[idx])


# ---------------------------------------------------------------------------
# assembly


def _face_geometry(grid: Grid, direction: int):
    """Face points on the left/right cell, quadrature weights times Jacobian."""
    if grid.dimension == 1:
        left = mode_values(1, np.array([1.0]))
        right = mode_values(1, np.array([-1.0]))
        return left, right, np.array([1.0])
    t = _GAUSS2
    if direction == 0:
        left = mode_values(2, np.ones(2), t)
        right = mode_values(2, -np.ones(2), t)
        jac = grid.h_z / 2.0
    else:
        left = mode_values(2, t, np.ones(2))
        right = mode_values(2, t, -np.ones(2))
        jac = grid.h_x / 2.0
    return left, right, np.full(2, jac)


def _face_entries(layout: DofLayout, flux: FluxSet, direction: int):
    """Face-independent coupling list for one direction.

    Entry ``e`` adds ``coef[e] * trace(side_col, col_moment, col_mode)`` to the
    test row ``(side_row, row_moment, row_mode)``.
    """
    left, right, wq = _face_geometry(layout.grid, direction)
    pts = (left, right)
    B = flux.matrices[direction]
    D = flux.abs_matrices[direction]
    M = (0.5 * (B + D), 0.5 * (B - D))
    sign = (1.0, -1.0)
    modes = layout.modes
    P = layout.full_modes
    L = flux.moment_count
    out = []
    for X in range(2):
        for Y in range(2):
            G = np.einsum("aq,pq,q->ap", pts[X], pts[Y], wq)
            for i in range(L):
                for m in range(L):
                    if M[Y][i, m] == 0.0:
                        continue
                    for a in range(modes[i]):
                        for p in range(P):
                            c = sign[X] * G[a, p] * M[Y][i, m]
                            if c != 0.0:
                                out.append((X, Y, i, a, m, p, c))
    return _entry_arrays(out)


def _entry_arrays(entries):
    if not entries:
        ints = [np.empty(0, np.int64)] * 6
        return (*ints, np.empty(0))
    arr = list(zip(*entries))
    return tuple(np.asarray(a, dtype=np.int64) for a in arr[:6]) + (np.asarray(arr[6], float),)


def _volume_entries(layout: DofLayout, flux: FluxSet):
    """Cell-local advective coupling ``-int (B_d u) d_d v`` in the own basis."""
    grid = layout.grid
    dim = grid.dimension
    if dim == 1:
        xq = _GAUSS2
        phi = mode_values(1, xq)
        dphi = _mode_gradient(1, xq)
        vol_w = np.full(2, grid.cell_volume / 2.0)
        scale = [2.0 / grid.h_x]
    else:
        xi, eta = np.meshgrid(_GAUSS2, _GAUSS2, indexing="ij")
        xi, eta = xi.ravel(), eta.ravel()
        phi = mode_values(2, xi, eta)
        dphi = _mode_gradient(2, xi, eta)
        vol_w = np.full(4, grid.cell_volume / 4.0)
        scale = [2.0 / grid.h_x, 2.0 / grid.h_z]
    # K[d, a, b] = int psi_b d_d psi_a
    K = np.stack([scale[d] * np.einsum("aq,bq,q->ab", dphi[d], phi, vol_w) for d in range(dim)])
    L = flux.moment_count
    modes = layout.modes
    out = []
    for i in range(L):
        for m in range(L):
            for a in range(modes[i]):
                for b in range(modes[m]):
                    c = -sum(flux.matrices[d][i, m] * K[d, a, b] for d in range(dim))
                    if c != 0.0:
                        out.append((i, a, m, b, c))
    if not out:
        return (np.empty(0, np.int64),) * 4 + (np.empty(0),)
    arr = list(zip(*out))
    return tuple(np.asarray(a, dtype=np.int64) for a in arr[:4]) + (np.asarray(arr[4], float),)


def _advection_operator(layout: DofLayout, flux: FluxSet) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    grid = layout.grid
    own = layout.own_offsets()
    tr_idx, tr_w = trace_maps(layout)
    rows, cols, vals = [], [], []
    r, c, v = _kernels.volume_triplets(own, *_volume_entries(layout, flux))
    rows.append(r), cols.append(c), vals.append(v)
    cells = np.arange(grid.n_cells, dtype=np.int64)
    for d in range(grid.dimension):
        entries = _face_entries(layout, flux, d)
        right = grid.neighbors(d, +1).astype(np.int64)
        r, c, v = _kernels.face_triplets(cells, right, own, tr_idx, tr_w, *entries)
        rows.append(r), cols.append(c), vals.append(v)
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    adv = from_triplets(layout.size, rows, cols, vals)
    return adv, _rounding_correction(adv, rows, cols, vals, own[:, 0])


def _rounding_correction(adv, rows, cols, vals, keep_rows) -> sp.csr_matrix:
    """Rounding error of the summed entries of ``adv`` on ``keep_rows``.

    Paired face contributions cancel exactly across cells, but summing them
    into one double per entry does not. The zeroth-moment average rows carry
    the conservation law, so their exact sums are kept as ``adv + correction``.
    """
    n = adv.shape[0]
    mask = np.zeros(n, dtype=bool)
    mask[keep_rows] = True
    sel = mask[rows]
    r, c, v = rows[sel], cols[sel], vals[sel]
    if r.size == 0:
        return sp.csr_matrix((n, n))
    key = r * n + c
    order = np.argsort(key, kind="stable")
    key, v = key[order], v[order].astype(np.longdouble)
    starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    exact = np.add.reduceat(v, starts)
    ur, uc = np.divmod(key[starts], n)
    rounded = np.asarray(adv[ur, uc]).ravel().astype(np.longdouble)
    return from_triplets(n, ur, uc, (exact - rounded).astype(float))


@dataclass
class SteadySystem:
    """Assembled operator, right-hand side and the data they came from."""

    layout: DofLayout
    flux: FluxSet
    operator: sp.csr_matrix
    rhs: np.ndarray
    reaction: np.ndarray
    mass: np.ndarray = field(repr=False)
    advection: sp.csr_matrix = field(repr=False)
    correction: sp.csr_matrix | None = field(default=None, repr=False)

    def parts(self) -> SplitOperator:
        """The operator before its advection and reaction parts were rounded together."""
        return SplitOperator(self.advection, _expand_reaction(self.layout, self.reaction) * self.mass,
                             self.correction, self.layout.own_offsets()[:, 0])

    def with_reaction(self, reaction: np.ndarray, rhs: np.ndarray | None = None) -> "SteadySystem":
        """Same advection part with a different reaction diagonal."""
        q = _expand_reaction(self.layout, reaction)
        op = (self.advection + sp.diags(q * self.mass)).tocsr()
        return SteadySystem(self.layout, self.flux, op,
                            self.rhs if rhs is None else rhs, reaction, self.mass,
                            self.advection, self.correction)


def _expand_reaction(layout: DofLayout, reaction: np.ndarray) -> np.ndarray:
    nc, L = layout.grid.n_cells, layout.basis.moment_count
    q = np.broadcast_to(np.asarray(reaction, dtype=float), (nc, L))
    per = np.repeat(np.arange(L), layout.modes)
    return q[:, per].reshape(-1)


def source_vector(layout: DofLayout, epsilon: float, source) -> np.ndarray:
    """``eps * int f v`` for piecewise-constant per-moment sources."""
    rhs = np.zeros(layout.size)
    if source is None:
        return rhs
    nc, L = layout.grid.n_cells, layout.basis.moment_count
    f = np.broadcast_to(np.asarray(source, dtype=float), (nc, L))
    rhs[layout.own_offsets().reshape(-1)] = epsilon * layout.grid.cell_volume * f.reshape(-1)
    return rhs


def assemble_steady(scheme: Scheme | str, flux: FluxSet, grid: Grid, material: Material,
                    reaction: np.ndarray | None = None, source=None, *,
                    shift: float = 0.0, allow_singular: bool = False) -> SteadySystem:
    """Assemble ``a(u, v) = eps (f, v)`` for one scheme.

    ``reaction`` defaults to the material's diagonal plus ``shift``. A system
    with vanishing zeroth-moment reaction in every cell is singular (constants
    are in its kernel) and is rejected unless ``allow_singular`` is set.
    """
    layout = dof_layout(scheme, flux.basis, grid)
    L = flux.moment_count
    if reaction is None:
        st, sa = material.cellwise(grid.n_cells)
        reaction = reaction_matrix(material.epsilon, sa, st, L, shift)
    reaction = np.broadcast_to(np.asarray(reaction, dtype=float), (grid.n_cells, L))
    if not allow_singular and np.all(reaction[:, 0] == 0.0):
        raise DegenerateSystemError(
            "no absorption and no time shift: the zeroth moment is undetermined"
        )
    adv, correction = _advection_operator(layout, flux)
    mass = mass_diagonal(layout)
    q = _expand_reaction(layout, reaction)
    op = (adv + sp.diags(q * mass)).tocsr()
    rhs = source_vector(layout, material.epsilon, source)
    return SteadySystem(layout, flux, op, rhs, np.array(reaction), mass, adv, correction)


# ---------------------------------------------------------------------------
# states


@dataclass
class State:
    """Coefficient vector on a layout."""

    layout: DofLayout
    coeffs: np.ndarray

    @property
    def grid(self) -> Grid:
        return self.layout.grid

    def averages(self) -> np.ndarray:
        """Cell averages, shape ``(n_cells, moments)``."""
        return self.coeffs[self.layout.own_offsets()]

    def total_mass(self) -> float:
        return float(self.averages()[:, 0].sum() * self.grid.cell_volume)

    def evaluate(self, x, z=None) -> np.ndarray:
        return evaluate_rho(self, x, z)

    def copy(self) -> "State":
        return State(self.layout, self.coeffs.copy())


def _locate(grid: Grid, x, z=None):
    x = np.asarray(x, dtype=float)
    i = np.clip(np.floor(x / grid.h_x).astype(int), 0, grid.cells_x - 1)
    xi = 2.0 * (x - (i + 0.5) * grid.h_x) / grid.h_x
    if grid.dimension == 1:
        return i, xi, None
    z = np.asarray(z, dtype=float)
    j = np.clip(np.floor(z / grid.h_z).astype(int), 0, grid.cells_z - 1)
    eta = 2.0 * (z - (j + 0.5) * grid.h_z) / grid.h_z
    return i + grid.cells_x * j, xi, eta


def evaluate_rho(state: State, x, z=None, moment: int = 0) -> np.ndarray:
    """Pointwise value of a moment (default the density) on the unit domain.

    Q1 moments are evaluated from their own polynomial, averaged moments from
    their reconstructed trace polynomial.
    """
    poly = trace_polynomials(state.layout, state.coeffs)[:, moment, :]
    cell, xi, eta = _locate(state.grid, x, z)
    phi = mode_values(state.grid.dimension, xi, eta)
    return np.einsum("p...,...p->...", phi, poly[cell])


def project(layout: DofLayout, fields: Mapping[int, Callable] | Callable,
            order: int = 4) -> State:
    """L2 projection of moment fields onto the layout.

    ``fields`` maps a moment index to a function of ``x`` (1D) or ``(x, z)``;
    a bare callable sets the zeroth moment. Missing moments are zero.
    """
    if callable(fields):
        fields = {0: fields}
    grid = layout.grid
    dim = grid.dimension
    q, wq = np.polynomial.legendre.leggauss(order)
    centers = grid.centers()
    if dim == 1:
        xi = q
        phi = mode_values(1, xi)
        w = wq / 2.0
        coords = (centers[0][:, None] + 0.5 * grid.h_x * xi[None, :],)
    else:
        xi, eta = (a.ravel() for a in np.meshgrid(q, q, indexing="ij"))
        phi = mode_values(2, xi, eta)
        w = np.outer(wq, wq).ravel() / 4.0
        coords = (centers[0][:, None] + 0.5 * grid.h_x * xi[None, :],
                  centers[1][:, None] + 0.5 * grid.h_z * eta[None, :])
    coords = tuple(np.mod(c, 1.0) for c in coords)
    norms = mass_factors(dim)
    coeffs = np.zeros(layout.size)
    own = layout.own_offsets()
    for m, func in fields.items():
        if not 0 <= m < layout.basis.moment_count:
            raise DomainError(f"moment {m} outside the basis")
        vals = np.asarray(func(*coords), dtype=float)
        for a in range(layout.modes[m]):
            coeffs[own[:, m] + a] = (vals * phi[a][None, :]) @ w / norms[a]
    return State(layout, coeffs)


# ---------------------------------------------------------------------------
# energy


def symmetrizer_weights(layout: DofLayout, flux: FluxSet) -> np.ndarray:
    """Per-unknown weight ``S^2`` making ``W B`` symmetric."""
    return _expand_reaction(layout, flux.symmetrizer[None, :] ** 2)


def energy_norm(state: State, flux: FluxSet, reaction: np.ndarray) -> float:
    """Upwind energy norm of a state in the symmetrized moment variables.

    Sum over interfaces of half the ``|B|``-weighted squared jump plus the
    ``Q``-weighted L2 norm, both taken for ``S u``. With ``W = S^2`` per
    moment this equals ``v^T W A v`` for the assembled DG operator ``A``.
    """
    layout = state.layout
    if layout.scheme is not Scheme.DG_Q1:
        raise UnsupportedError("the energy identity is defined for the DgQ1 layout")
    grid = layout.grid
    s = flux.symmetrizer
    poly = trace_polynomials(layout, state.coeffs)
    total = 0.0
    for d in range(grid.dimension):
        left, right, wq = _face_geometry(grid, d)
        uL = np.einsum("cmp,pq->cqm", poly, left)
        uR = np.einsum("cmp,pq->cqm", poly[grid.neighbors(d, +1)], right)
        jump = (uR - uL) * s
        Ds = (s[:, None] * flux.abs_matrices[d]) / s[None, :]
        total += 0.5 * float(np.einsum("cqm,mn,cqn,q->", jump, Ds, jump, wq))
    q = np.broadcast_to(np.asarray(reaction, dtype=float), (grid.n_cells, flux.moment_count))
    qd = _expand_reaction(layout, q)
    w = symmetrizer_weights(layout, flux)
    total += float(np.sum(qd * w * mass_diagonal(layout) * state.coeffs**2))
    return math.sqrt(max(total, 0.0))
