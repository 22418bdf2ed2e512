"""Implicit BDF time stepping of the semi-discrete moment system."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .discretization import State, SteadySystem, assemble_steady
from .errors import DomainError
from .linalg import CirculantFactorization, Factorization, NotCirculantError
from .mesh import Grid, Scheme
from .moments import FluxSet, Material, reaction_matrix

__all__ = ["TimeConfig", "TransportProblem", "Stepper", "bdf_coefficients", "factorize", "step",
           "run_transient"]

log = logging.getLogger(__name__)

_BDF = {
    1: (1.0, (1.0,)),
    2: (2.0 / 3.0, (4.0 / 3.0, -1.0 / 3.0)),
}


def bdf_coefficients(order: int) -> tuple[float, tuple[float, ...]]:
    """``(gamma, betas)`` with ``u^n - sum beta_p u^{n-p} = gamma dt u_t``."""
    try:
        return _BDF[order]
    except KeyError:
        raise DomainError(f"BDF order must be 1 or 2, got {order}") from None


@dataclass(frozen=True)
class TimeConfig:
    bdf_order: int = 2
    dt_factor: float = 0.25
    final_time: float = 0.05

    def __post_init__(self):
        bdf_coefficients(self.bdf_order)
        if not self.dt_factor > 0 or not self.final_time > 0:
            raise DomainError("dt_factor and final_time must be positive")

    def steps(self, h: float) -> tuple[float, int]:
        """Uniform step count and size with ``dt <= dt_factor * h`` reaching ``final_time``."""
        target = self.dt_factor * h
        n = max(1, math.ceil(self.final_time / target - 1e-9))
        return self.final_time / n, n


@dataclass(frozen=True)
class TransportProblem:
    scheme: Scheme
    flux: FluxSet
    grid: Grid
    material: Material
    source: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))


SOLVERS = ("auto", "lu", "fft")


def factorize(system: SteadySystem, solver: str = "auto"):
    """Direct solver for one steady system.

    ``lu`` is sparse LU (nested-dissection ordered in 2D); ``fft`` uses the
    block-circulant structure of translation-invariant periodic problems.
    ``auto`` picks ``fft`` for 2D grids when the structure is verified and
    falls back to ``lu`` otherwise.
    """
    if solver not in SOLVERS:
        raise DomainError(f"solver must be one of {SOLVERS}, got {solver!r}")
    layout = system.layout
    g = layout.grid
    parts = system.parts()
    if solver == "fft" or (solver == "auto" and g.dimension == 2):
        try:
            return CirculantFactorization(system.operator, g.cells_x, g.cells_z,
                                          layout.per_cell, parts=parts)
        except NotCirculantError:
            if solver == "fft":
                raise
            log.info("operator not translation invariant, using sparse LU")
    return Factorization(system.operator, blocks=(g.cells_x, g.cells_z, layout.per_cell),
                         parts=parts)


class Stepper:
    """Assembles once and keeps the factorization of the latest shift."""

    def __init__(self, problem: TransportProblem, solver: str = "auto"):
        self.problem = problem
        self.solver = solver
        self._base: SteadySystem | None = None
        self._current: tuple[float, SteadySystem, object] | None = None

    def _system(self, shift: float):
        key = float(shift)
        if self._current is None or self._current[0] != key:
            p = self.problem
            st, sa = p.material.cellwise(p.grid.n_cells)
            q = reaction_matrix(p.material.epsilon, sa, st, p.flux.moment_count, shift)
            if self._base is None:
                self._base = assemble_steady(p.scheme, p.flux, p.grid, p.material,
                                             reaction=q, source=p.source)
                system = self._base
            else:
                system = self._base.with_reaction(q)
            self._current = None  # release the previous factors first
            self._current = (key, system, factorize(system, self.solver))
        return self._current[1:]

    def step(self, history: list[State], dt: float, order: int) -> State:
        """Advance by one step; ``history[0]`` is the newest state."""
        gamma, betas = bdf_coefficients(order)
        if len(history) < len(betas):
            raise DomainError(f"BDF{order} needs {len(betas)} previous states")
        eps = self.problem.material.epsilon
        shift = eps / (gamma * dt)
        system, lu = self._system(shift)
        past = sum(b * h.coeffs for b, h in zip(betas, history))
        rhs = system.rhs + shift * system.mass * past
        return State(system.layout, lu.solve(rhs))


def step(problem: TransportProblem, history: list[State], dt: float, order: int = 2,
         solver: str = "auto") -> State:
    """Single BDF step without factorization reuse."""
    return Stepper(problem, solver).step(history, dt, order)


def run_transient(problem: TransportProblem, initial: State, config: TimeConfig = TimeConfig(),
                  callback: Callable[[int, float, State], None] | None = None,
                  solver: str = "auto") -> State:
    """Integrate from ``initial`` to ``config.final_time``.

    Higher-order runs start with backward Euler and switch to the requested
    order once enough history exists.
    """
    dt, n = config.steps(problem.grid.h)
    log.info("%s on %s cells: %d steps of dt=%.3e", problem.scheme.value,
             problem.grid.shape, n, dt)
    stepper = Stepper(problem, solver)
    history = [initial]
    for k in range(1, n + 1):
        order = min(config.bdf_order, len(history))
        new = stepper.step(history, dt, order)
        history = [new] + history[: config.bdf_order - 1]
        if callback is not None:
            callback(k, k * dt, new)
    return history[0]
