import numpy as np
import pytest

from psoct.core import fibonacci_cap, kspace_point
from psoct.forward import BACKGROUND_PATTERN, VoxelGrid, linearized_far_fields
from psoct.inverse import kernels, reduced
from psoct.inverse.gridding import CoverageError, grid_and_invert, trilinear_grid
from psoct.inverse.pipeline import (InverseOptions, TableMismatchError, assemble_Y_action,
                                    orthotropic_from_vector, polarization_span_check,
                                    predicted_m_tilde, reconstruct)
from psoct.jones import PolarizationSetup, standard_setups
from psoct.measurement import m_tilde_from_fields
from psoct.phantom import gaussian_phantom, rasterize
from psoct.selftest import random_orthotropic

from conftest import rel, unit_vectors

W = (0.3, 0.45, 0.6)


def sweep(n_dir, omegas=W):
    th = fibonacci_cap(n_dir, 0.3)
    th = th[reduced.admissible_mask(th)]
    return np.repeat(omegas, len(th)), np.tile(th, (len(omegas), 1))


def linear_data(spec, om, th, rho=10.0):
    sus = rasterize(spec)
    m = np.zeros((len(om), 2, 2), complex)
    s1, s2 = standard_setups()
    for w in np.unique(om):
        idx = om == w
        f = [linearized_far_fields(sus, s.p, w, th[idx], rho) for s in (s1, s2)]
        m[idx] = m_tilde_from_fields(f, [s1.eta, s2.eta], w, rho)
    return m


# -- Y action -------------------------------------------------------------------------------------

def one_node_table(rng):
    grid = VoxelGrid((3, 3, 3), 1.0)
    th = np.array([[0.6, 0.0, 0.8]])
    v = kspace_point(np.array([0.4]), th)
    return kernels.KernelTable.build(grid, np.array([0.4]), th, v, np.array([0.7]))


def test_y_action_chi0_zero(rng):
    t = one_node_table(rng)
    psi = rng.standard_normal((1, 4)) + 1j * rng.standard_normal((1, 4))
    y = assemble_Y_action(t, psi, 0.0, t.v[0])
    assert np.array_equal(y, orthotropic_from_vector(psi[0]))


def test_y_action_single_node(rng):
    t = one_node_table(rng)
    psi = rng.standard_normal((1, 4)) + 1j * rng.standard_normal((1, 4))
    chi0 = 0.05
    y = assemble_Y_action(t, psi, chi0, t.v[0])
    p = orthotropic_from_vector(psi[0])
    exp = p + 0.7 * chi0 * (BACKGROUND_PATTERN @ t.kz[0, 0] @ p + p @ t.ky[0, 0] @ BACKGROUND_PATTERN)
    assert np.allclose(y, exp, rtol=1e-13)


def test_y_action_outside_table(rng):
    t = one_node_table(rng)
    with pytest.raises(TableMismatchError):
        assemble_Y_action(t, np.ones((1, 4)), 0.05, np.array([1.0, 2.0, 3.0]))


def test_y_action_reproduces_forward_data():
    spec = gaussian_phantom(n=8, sigma=1.0, chi0=0.05)
    om, th = sweep(40)
    v = kspace_point(om, th)
    t = kernels.KernelTable.build(spec.grid, om, th, v, kernels.gram_weights(spec.grid, v, 1e-6))
    # discrete transform of the voxel phantom at the nodes
    psi_nodes = kernels.fourier_matrix(spec.grid, v) @ rasterize(spec).psi.reshape(4, -1).T
    m = linear_data(spec, om, th)
    pred = np.array([predicted_m_tilde(assemble_Y_action(t, psi_nodes, 0.05, v[i]), th[i])
                     for i in range(len(om))])
    assert rel(pred, m) <= 0.05


# -- polarization span ---------------------------------------------------------------------------------

def test_span_basis_cases(rng):
    m = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    assert np.allclose(polarization_span_check(1.0, 0.0, m), m[0])
    both = polarization_span_check(1.0, 1.0, m)
    assert both[0] == pytest.approx(2 * m[0, 0] + 2 * m[1, 0])


def test_span_random(rng):
    for _ in range(100):
        c1, c2 = rng.standard_normal(2)
        t = unit_vectors(rng, 1)[0]
        y = random_orthotropic(1, rng)[0]
        comb, direct, err = polarization_span_check(c1, c2, predicted_m_tilde(y, t), y, t)
        assert err <= 1e-10 * max(1.0, np.max(np.abs(direct)))


# -- reconstruct ------------------------------------------------------------------------------------

def test_reconstruct_chi0_zero_closed_form():
    spec = gaussian_phantom(n=8, sigma=1.0, chi0=0.0)
    om, th = sweep(40)
    rec = reconstruct(spec.grid, om, th, linear_data(spec, om, th), 0.0)
    assert rec.report["closed_form"]
    assert np.all(np.isnan(rec.values[:, 3]))
    truth = kernels.fourier_matrix(spec.grid, rec.v) @ rasterize(spec).psi.reshape(4, -1).T
    for a in range(3):
        assert rel(rec.values[:, a], truth[:, a]) <= 1e-10


def test_reconstruct_modes_and_report():
    spec = gaussian_phantom(n=8, sigma=1.0, chi0=0.05)
    om, th = sweep(40)
    m = linear_data(spec, om, th)
    a = reconstruct(spec.grid, om, th, m, 0.05)
    b = reconstruct(spec.grid, om, th, m, 0.05, InverseOptions(mode="per_frequency"))
    assert len(a.report["blocks"]) == 1 and len(b.report["blocks"]) == 3
    assert a.report["max_residual"] <= 1e-8
    assert a.report["blocks"][0]["y4_leak"] <= 1e-14
    truth = spec.analytic_ft(a.v)
    assert rel(a.values[:, 0], truth[0]) < rel(b.values[:, 0], truth[0])


def test_reconstruct_aborts_on_excluded_fraction():
    spec = gaussian_phantom(n=6, sigma=0.8)
    th = np.array([[0.5, 0.5, np.sqrt(0.5)]] * 3 + [[0.6, 0.0, 0.8]])
    om = np.full(4, 0.45)
    with pytest.raises(reduced.ExcludedSampleError):
        reconstruct(spec.grid, om, th, np.zeros((4, 2, 2)), 0.0)
    rec = reconstruct(spec.grid, om, th, np.zeros((4, 2, 2)), 0.0,
                      InverseOptions(max_excluded_fraction=0.8))
    assert rec.report["n_excluded"] == 3 and rec.values.shape == (1, 4)


def test_reconstruct_rejects_other_plates():
    spec = gaussian_phantom(n=6, sigma=0.8)
    setups = (PolarizationSetup(np.array([1.0, 0, 0]), phi1=0.3),) * 2
    with pytest.raises(ValueError):
        reconstruct(spec.grid, [0.45], [[0.6, 0, 0.8]], np.zeros((1, 2, 2)), 0.0, setups=setups)


def test_options_validation():
    with pytest.raises(ValueError):
        InverseOptions(closure="spline")
    with pytest.raises(ValueError):
        InverseOptions(mode="batched")
    with pytest.raises(ValueError):
        InverseOptions(reg_lambda=-1.0)


# -- gridding ------------------------------------------------------------------------------------------

def shell_samples(radius_factor):
    om = np.linspace(0.3, 1.1, 25)
    th = fibonacci_cap(800, 0.0)
    return kspace_point(np.repeat(om, len(th)), np.tile(th, (len(om), 1))) * radius_factor


def half_ball_samples(radius, n=20000, seed=3):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    v[:, 2] = np.abs(v[:, 2])
    return v * radius * rng.random(n)[:, None] ** (1 / 3)


def test_gridding_gaussian_half_coverage():
    spec = gaussian_phantom(n=16, sigma=1.2, psi=(1.0, 0.0, 0.0, 0.0))
    v = half_ball_samples(2.2)
    g = grid_and_invert(v, spec.analytic_ft(v)[:1], spec.grid, pad=2, k_radius=np.pi)
    truth = rasterize(spec).psi[0]
    assert 0.4 <= g.coverage <= 0.6
    assert rel(g.psi[0].real, truth.real) <= 0.1
    assert np.max(np.abs(g.psi[0].imag)) <= 1e-12 * np.max(np.abs(g.psi[0]))


def test_gridding_error_drops_with_coverage():
    spec = gaussian_phantom(n=16, sigma=1.2, psi=(1.0, 0.0, 0.0, 0.0))
    truth = rasterize(spec).psi[0]
    errs = []
    for r in (1.6, 2.0, 2.5):
        v = half_ball_samples(r)
        g = grid_and_invert(v, spec.analytic_ft(v)[:1], spec.grid, pad=2, k_radius=np.pi)
        errs.append(rel(g.psi[0].real, truth))
    assert errs[0] > errs[1] > errs[2]


def test_gridding_zero_samples():
    grid = VoxelGrid((4, 4, 4), 1.0)
    g = grid_and_invert(np.zeros((0, 3)), np.zeros((2, 0)), grid)
    assert g.psi.shape == (2, 4, 4, 4) and np.all(g.psi == 0)
    with pytest.raises(CoverageError):
        grid_and_invert(np.zeros((0, 3)), np.zeros((1, 0)), grid, min_coverage=0.1)


def test_gridding_coverage_threshold():
    spec = gaussian_phantom(n=8, sigma=1.0)
    v = shell_samples(0.2)
    with pytest.raises(CoverageError):
        grid_and_invert(v, spec.analytic_ft(v)[:1], spec.grid, k_radius=np.pi, min_coverage=0.5)


def test_trilinear_single_sample_on_node():
    vals, filled = trilinear_grid(np.zeros((1, 3)), np.array([[2.0 + 1j]]), (4, 4, 4), 1.0)
    assert filled.sum() == 1 and vals[0, 0, 0, 0] == 2.0 + 1j
