import numpy as np
import pytest
from hypothesis import given, strategies as st

from pnkit.errors import DomainError, UnsupportedError
from pnkit.mesh import build_grid, dof_layout, neighbor
from pnkit.moments import BasisSpec


def test_build_grid_examples():
    assert build_grid(1, 4).h_x == 0.25
    g = build_grid(2, 5, 5)
    assert g.n_cells == 25 and g.h_x == g.h_z == pytest.approx(0.2)
    assert build_grid(1, 3200).n_cells == 3200
    with pytest.raises(DomainError):
        build_grid(1, 0)
    with pytest.raises(UnsupportedError):
        build_grid(3, 4)


def test_neighbor_examples():
    g4 = build_grid(1, 4)
    assert neighbor(g4, 3, 0, +1) == 0
    assert neighbor(g4, 0, 0, -2) == 2
    assert neighbor(build_grid(1, 10), 5, 0, +2) == 7
    g = build_grid(2, 3, 4)
    assert neighbor(g, 0, 1, -1) == 9  # (0, 0) -> (0, 3)
    with pytest.raises(DomainError):
        neighbor(g4, 0, 0, 3)


@given(st.integers(1, 7), st.integers(1, 7), st.sampled_from([1, 2]), st.sampled_from([-2, -1, 1, 2]))
def test_neighbor_roundtrip(mx, mz, k, sign):
    g = build_grid(2, mx, mz)
    cells = np.arange(g.n_cells)
    for d in (0, 1):
        np.testing.assert_array_equal(neighbor(g, neighbor(g, cells, d, sign * k // abs(sign)), d,
                                               -sign * k // abs(sign)), cells)


@pytest.mark.parametrize("N", [1, 3, 5])
def test_dof_counts(N):
    g1 = build_grid(1, 3)
    g2 = build_grid(2, 3)
    b1, b2 = BasisSpec("slab", N), BasisSpec("planeparallel", N)
    L2 = (N + 1) * (N + 2) // 2
    assert dof_layout("DgQ1", b1, g1).per_cell == 2 * (N + 1)
    assert dof_layout("Fv2", b1, g1).per_cell == N + 1
    assert dof_layout("Hybrid", b1, g1).per_cell == N + 2
    assert dof_layout("HeteroDg", b1, g1).per_cell == N + 2
    assert dof_layout("DgQ1", b2, g2).per_cell == 2 * (N + 1) * (N + 2)
    assert dof_layout("Fv2", b2, g2).per_cell == L2
    assert dof_layout("Hybrid", b2, g2).per_cell == L2 + 3


def test_dof_examples_and_offsets():
    g = build_grid(1, 5)
    assert dof_layout("Hybrid", BasisSpec("slab", 1), g).per_cell == 3
    assert dof_layout("DgQ1", BasisSpec("planeparallel", 3), build_grid(2, 2)).per_cell == 40
    lay = dof_layout("Fv2", BasisSpec("slab", 3), g)
    assert lay.per_cell == 4
    off = lay.cell_offsets
    assert np.all(np.diff(off) > 0) and off[-1] == lay.size
    with pytest.raises(UnsupportedError):
        dof_layout("DgQ1", BasisSpec("full3d", 1), g)
