import math

import numpy as np
import pytest

from pnkit.discretization import State, project
from pnkit.errors import DomainError
from pnkit.mesh import build_grid, dof_layout
from pnkit.moments import Material, flux_set, reaction_matrix
from pnkit.timeloop import Stepper, TimeConfig, TransportProblem, bdf_coefficients, run_transient, step

SCHEMES = ["DgQ1", "HeteroDg", "Hybrid", "Fv2"]


def gaussian(x):
    return np.exp(-100 * (x - 0.5) ** 2)


def test_bdf_coefficients():
    assert bdf_coefficients(1) == (1.0, (1.0,))
    g, b = bdf_coefficients(2)
    assert g == 2 / 3 and b == (4 / 3, -1 / 3)
    with pytest.raises(DomainError):
        bdf_coefficients(3)


@pytest.mark.parametrize("order", [1, 2])
def test_bdf_exact_on_polynomials(order):
    gamma, beta = bdf_coefficients(order)
    dt, t = 0.1, 1.0
    for p in range(order + 1):
        y = lambda s: s**p  # noqa: E731
        dy = p * t ** (p - 1) if p else 0.0
        lhs = y(t) - sum(b * y(t - (k + 1) * dt) for k, b in enumerate(beta))
        assert lhs == pytest.approx(gamma * dt * dy, abs=1e-14)


def _scalar_bdf2(eps, T, n):
    dt = T / n
    ys = [1.0]
    for k in range(n):
        order = 1 if k == 0 else 2
        g, b = bdf_coefficients(order)
        past = sum(bi * yi for bi, yi in zip(b, ys))
        ys = [past / (1 + g * dt / eps)] + ys[:1]
    return ys[0]


def test_bdf2_scalar_second_order():
    eps, T = 0.5, 1.0
    exact = math.exp(-T / eps)
    errs = [abs(_scalar_bdf2(eps, T, n) - exact) for n in (40, 80, 160)]
    rates = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(1.9 < r < 2.1 for r in rates)


def _problem(scheme, dim=1, N=1, cells=(20,), **mat):
    geom = "slab" if dim == 1 else "planeparallel"
    return TransportProblem(scheme, flux_set(geom, N), build_grid(dim, *cells), Material(**mat))


@pytest.mark.parametrize("scheme", SCHEMES)
def test_constant_is_steady(scheme):
    p = _problem(scheme, N=3, epsilon=1e-3)
    lay = dof_layout(scheme, p.flux.basis, p.grid)
    u = np.zeros(lay.size)
    u[lay.own_offsets()[:, 0]] = 1.3
    s = State(lay, u)
    out = step(p, [s], 0.01, order=1)
    np.testing.assert_allclose(out.coeffs, u, atol=1e-13)


def test_single_cell_backward_euler():
    eps, dt = 0.2, 0.05
    p = TransportProblem("Fv2", flux_set("slab", 2), build_grid(1, 1),
                         Material(eps, sigma_t=1.5, sigma_a=0.4), source=np.array([1.0, 0.5, 0.2]))
    lay = dof_layout("Fv2", p.flux.basis, p.grid)
    prev = np.array([0.3, -0.1, 0.7])
    out = step(p, [State(lay, prev.copy())], dt, order=1)
    q = reaction_matrix(eps, 0.4, 1.5, 3)
    expected = (eps / dt * prev + eps * p.source) / (eps / dt + q)
    np.testing.assert_allclose(out.coeffs, expected, rtol=1e-13)


def test_two_half_steps_vs_one():
    p = _problem("DgQ1", N=1, cells=(40,), epsilon=1.0)
    lay = dof_layout("DgQ1", p.flux.basis, p.grid)
    u0 = project(lay, gaussian)
    diffs = []
    for dt in (0.01, 0.005):
        one = step(p, [u0], 2 * dt, 1).coeffs
        two = step(p, [step(p, [u0], dt, 1)], dt, 1).coeffs
        diffs.append(np.linalg.norm(one - two))
    assert 3.0 < diffs[0] / diffs[1] < 5.0


def test_time_config():
    cfg = TimeConfig()
    assert (cfg.bdf_order, cfg.dt_factor, cfg.final_time) == (2, 0.25, 0.05)
    dt, n = cfg.steps(0.01)
    assert n == 20 and dt == pytest.approx(0.0025)
    dt, n = cfg.steps(0.03)
    assert n == 7 and dt <= 0.25 * 0.03 and n * dt == pytest.approx(0.05)
    with pytest.raises(DomainError):
        TimeConfig(final_time=0.0)


@pytest.mark.parametrize("scheme", SCHEMES)
@pytest.mark.parametrize("eps", [1.0, 1e-6])
def test_mass_conserved_every_step(scheme, eps):
    p = _problem(scheme, N=1, cells=(50,), epsilon=eps)
    lay = dof_layout(scheme, p.flux.basis, p.grid)
    u0 = project(lay, gaussian)
    m0 = u0.total_mass()
    drift = []
    run_transient(p, u0, callback=lambda k, t, s: drift.append(abs(s.total_mass() - m0)))
    assert len(drift) == 10
    assert max(drift) <= 1e-12 * abs(m0)


def test_energy_non_increasing():
    p = _problem("DgQ1", N=3, cells=(40,), epsilon=0.1)
    lay = dof_layout("DgQ1", p.flux.basis, p.grid)
    u0 = project(lay, {0: gaussian, 1: lambda x: 0.3 * np.sin(2 * np.pi * x)})
    q = reaction_matrix(0.1, 0.0, 1.0, p.flux.moment_count)
    s = p.flux.symmetrizer
    from pnkit.discretization import mass_diagonal, symmetrizer_weights, _expand_reaction
    w = symmetrizer_weights(lay, p.flux) * mass_diagonal(lay)
    qd = np.maximum(_expand_reaction(lay, q), 1.0)  # keep the density in the norm

    def energy(state):
        return float(np.sum(qd * w * state.coeffs**2))

    values = [energy(u0)]
    run_transient(p, u0, TimeConfig(bdf_order=1, final_time=0.05),
                  callback=lambda k, t, st: values.append(energy(st)))
    assert s.shape[0] == p.flux.moment_count
    assert all(b <= a * (1 + 1e-12) for a, b in zip(values, values[1:]))


def test_bdf2_temporal_order():
    p = _problem("DgQ1", N=1, cells=(80,), epsilon=1.0)
    lay = dof_layout("DgQ1", p.flux.basis, p.grid)
    u0 = project(lay, gaussian)
    T = 0.05

    def run(dt_factor):
        return run_transient(p, u0, TimeConfig(dt_factor=dt_factor, final_time=T)).coeffs

    ref = run(0.25 / 32)
    errs = [np.linalg.norm(run(c) - ref) for c in (1.0, 0.5, 0.25)]
    rates = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(1.8 <= r <= 2.2 for r in rates), rates


def test_stepper_reuses_factorization():
    p = _problem("Hybrid", N=1, cells=(10,), epsilon=1.0)
    lay = dof_layout("Hybrid", p.flux.basis, p.grid)
    st_ = Stepper(p)
    u0 = project(lay, gaussian)
    a = st_.step([u0], 0.01, 1)
    lu = st_._current[2]
    b = st_.step([a], 0.01, 1)
    assert st_._current[2] is lu
    assert np.all(np.isfinite(b.coeffs))


def test_2d_p3_runs():
    p = _problem("Hybrid", dim=2, N=3, cells=(40, 40), epsilon=1.0)
    lay = dof_layout("Hybrid", p.flux.basis, p.grid)
    u0 = project(lay, lambda x, z: 1 + np.sin(2 * np.pi * x) * np.sin(2 * np.pi * z))
    out = run_transient(p, u0)
    assert np.all(np.isfinite(out.coeffs))
    assert out.total_mass() == pytest.approx(u0.total_mass(), rel=1e-12)
