import logging

import numpy as np
import pytest

from psoct.core import fibonacci_cap, kspace_point
from psoct.forward import VoxelGrid
from psoct.inverse import kernels, reduced, solve
from psoct.phantom import gaussian_phantom

from conftest import rel

W = (0.3, 0.45, 0.6)


def sweep(n_dir):
    th = fibonacci_cap(n_dir, 0.3)
    th = th[reduced.admissible_mask(th)]
    return np.repeat(W, len(th)), np.tile(th, (len(W), 1))


@pytest.fixture(scope="module")
def table():
    grid = VoxelGrid((6, 6, 6), 1.0)
    om, th = sweep(30)
    v = kspace_point(om, th)
    t = kernels.KernelTable.build(grid, om, th, v, kernels.gram_weights(grid, v, 1e-6))
    return t


def manufactured(table, chi0, rng):
    tz, ty = table.effective()
    th = table.thetas
    n = len(th)
    y = rng.standard_normal((n, 4)) + 1j * rng.standard_normal((n, 4))
    full = reduced.full_equations(th, tz, ty, chi0)
    rhs = np.einsum("iema,ma->ie", full, y)
    b = (rhs * reduced.EQUATION_SIGNS).reshape(n, 2, 2)
    return y, reduced.reduce_system(th, tz, ty, chi0, b)


def test_manufactured_second_kind(table, rng):
    y, sysm = manufactured(table, 0.05, rng)
    sol = solve.solve_second_kind(sysm)
    assert not sol.closed_form
    assert sol.residual <= 1e-12
    assert rel(sol.y, y[:, :3]) <= 1e-8


def test_chi0_zero_closed_form(table, rng):
    y, sysm = manufactured(table, 0.0, rng)
    sol = solve.solve_second_kind(sysm)
    assert sol.closed_form
    direct = np.linalg.solve(sysm.i_tilde, sysm.b_tilde[..., None])[..., 0]
    assert np.allclose(sol.y, direct)
    assert rel(sol.y, y[:, :3]) <= 1e-12


def test_residual_error_reports_value(table, rng):
    _, sysm = manufactured(table, 0.05, rng)
    with pytest.raises(solve.ResidualError) as exc:
        solve.solve_second_kind(sysm, tol=1e-300)
    assert exc.value.residual > 0


def test_psi33_data_recovers_m3_action(table, rng):
    y, sysm = manufactured(table, 0.05, rng)
    sol = solve.solve_second_kind(sysm)
    _, ty = table.effective()
    m3 = reduced.m_operators(ty)[..., 2]
    g = solve.psi33_data(sysm, sol.y)
    assert rel(g, m3 @ y[:, 3]) <= 1e-8


def test_tikhonov_small_lambda_recovers(rng):
    q, _ = np.linalg.qr(rng.standard_normal((20, 20)) + 1j * rng.standard_normal((20, 20)))
    m3 = q @ np.diag(np.linspace(1, 3, 20))
    y = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    r = solve.solve_psi33(m3, m3 @ y, lam=1e-14)
    assert rel(r.y, y) <= 1e-6


def test_tikhonov_zero_data_and_bad_lambda(rng):
    m3 = rng.standard_normal((8, 8))
    assert np.all(solve.solve_psi33(m3, np.zeros(8), lam=0.3).y == 0)
    with pytest.raises(solve.RegularizationError):
        solve.tikhonov(m3, np.ones(8), 0.0)
    with pytest.raises(solve.RegularizationError):
        solve.tikhonov(m3, np.ones(8), -1.0)
    with pytest.raises(solve.RegularizationError):
        solve.tikhonov(np.zeros((4, 4)), np.ones(4), 1.0)


def test_default_lambda_rule(rng):
    m3 = rng.standard_normal((10, 10))
    r = solve.solve_psi33(m3, rng.standard_normal(10))
    assert r.rule == "default"
    assert r.lam == pytest.approx(1e-4 * np.linalg.norm(m3, 2) ** 2)


def test_discrepancy_hits_target(rng):
    m3 = rng.standard_normal((30, 30)) @ np.diag(np.geomspace(1, 1e-6, 30))
    g = m3 @ rng.standard_normal(30)
    noise = 0.01 * np.linalg.norm(g)
    r = solve.solve_psi33(m3, g + noise * rng.standard_normal(30) / np.sqrt(30), noise_norm=noise)
    assert r.rule == "discrepancy"
    assert r.residual_norm == pytest.approx(solve.DISCREPANCY_TAU * noise, rel=1e-6)


def test_unreachable_discrepancy_falls_back(rng, caplog):
    m3 = np.diag([1.0, 1.0, 0.0])
    g = np.array([0.0, 0.0, 1.0])     # outside the range of m3
    with caplog.at_level(logging.WARNING):
        r = solve.solve_psi33(m3, g, noise_norm=1e-3)
    assert r.rule.startswith("default")
    assert "not reachable" in caplog.text
    with pytest.raises(solve.RegularizationError):
        solve.solve_psi33(m3, np.array([1.0, 0, 0]), noise_norm=10.0)


def test_psi33_error_decreases_with_noise():
    """Smooth psi33, quadrature-closure M3, discrepancy-chosen lambda."""
    spec = gaussian_phantom(n=12, sigma=1.2, chi0=0.05)
    om, th = sweep(120)
    v = kspace_point(om, th)
    t = kernels.KernelTable.build(spec.grid, om, th, v, kernels.shell_weights(om, th))
    m3 = reduced.m_operators(t.effective()[1])[..., 2]
    truth = spec.analytic_ft(v)[3]
    g = m3 @ truth
    rng = np.random.default_rng(7)
    base = rng.standard_normal(len(g)) + 1j * rng.standard_normal(len(g))
    errs = []
    for lev in (1e-1, 1e-2, 1e-3, 1e-4):
        nz = base * lev * np.linalg.norm(g) / np.linalg.norm(base)
        r = solve.solve_psi33(m3, g + nz, noise_norm=np.linalg.norm(nz))
        errs.append(rel(r.y, truth))
    assert all(a > b for a, b in zip(errs, errs[1:])), errs
