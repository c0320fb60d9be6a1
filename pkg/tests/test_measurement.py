import numpy as np
import pytest

from psoct.core import PulseEnvelope, fibonacci_cap
from psoct.forward import FarFieldRecord, linearized_far_fields
from psoct.jones import standard_setups
from psoct.measurement import (AliasingError, ConditioningError, Interferogram, MeasurementGrid,
                               add_noise, compute_m_tilde, extract_scattered_field, l_center_for,
                               m_tilde_from_fields, synthesize_interferogram)
from psoct.phantom import gaussian_phantom, rasterize
from psoct.simulate import extract_kspace, simulate_measurements

from conftest import rel

PULSE = PulseEnvelope(0.45, 0.05)
W = [0.3, 0.45, 0.6]


@pytest.fixture(scope="module")
def mgrid():
    return MeasurementGrid.for_pulse(PULSE, 0.3, extra=W, n_sigma=3.4)


def random_records(mg, theta, rho, rng, pulse=PULSE):
    out = []
    for w in mg.omegas:
        e = (rng.standard_normal(3) + 1j * rng.standard_normal(3)) * pulse(w)
        out.append(FarFieldRecord(w, theta, rho, e))
    return out


# -- grids ------------------------------------------------------------------------------------

def test_reference_grid_properties(mgrid):
    mgrid.validate()
    for w in W:
        assert np.min(np.abs(mgrid.omegas - w)) < 1e-12
    assert mgrid.dl <= np.pi / (2 * mgrid.omega_max)
    assert mgrid.d_omega * mgrid.length <= np.pi * (1 + 1e-9)
    assert MeasurementGrid.from_dict(mgrid.to_dict()) == mgrid


def test_grid_aliasing_errors(mgrid):
    coarse_l = MeasurementGrid(mgrid.d_omega, mgrid.n_min, mgrid.n_max, 2 * mgrid.dl,
                               mgrid.n_l // 2, 1.0)
    with pytest.raises(AliasingError):
        coarse_l.validate()
    coarse_w = MeasurementGrid(2 * mgrid.d_omega, mgrid.n_min, mgrid.n_max, mgrid.dl, mgrid.n_l, 1.0)
    with pytest.raises(AliasingError):
        coarse_w.validate()
    short = MeasurementGrid(mgrid.d_omega, 1, mgrid.n_max, mgrid.dl, mgrid.n_l, 1.0)
    with pytest.raises(AliasingError):
        short.validate()


# -- synthesis / extraction --------------------------------------------------------------------------

def test_zero_field_gives_zero_interferogram(mgrid):
    th = np.array([0.0, 0.6, 0.8])
    recs = [FarFieldRecord(w, th, 10.0, np.zeros(3, complex)) for w in mgrid.omegas]
    ig = synthesize_interferogram(recs, standard_setups()[0], mgrid.l_grid(l_center_for(th, 10.0)),
                                  PULSE, mgrid)
    assert np.all(ig.intensities == 0)
    assert np.all(extract_scattered_field(ig, 0.45) == 0)


def test_round_trip_random_records(mgrid, rng):
    for _ in range(5):
        th = fibonacci_cap(7, 0.3)[rng.integers(7)]
        recs = random_records(mgrid, th, 10.0, rng)
        for s in standard_setups():
            ig = synthesize_interferogram(recs, s, mgrid.l_grid(l_center_for(th, 10.0)), PULSE, mgrid)
            assert np.isrealobj(ig.intensities)
            got = np.array([extract_scattered_field(ig, r.omega) for r in recs])
            assert rel(got, np.array([r.e_scat[:2] for r in recs])) <= 1e-3


def test_records_must_match_grid(mgrid, rng):
    th = np.array([0, 0, 1.0])
    recs = random_records(mgrid, th, 10.0, rng)[:-1]
    with pytest.raises(AliasingError):
        synthesize_interferogram(recs, standard_setups()[0], mgrid.l_grid(), PULSE, mgrid)


def test_delta_pulse_is_sinusoid():
    nu = 0.5
    pulse = PulseEnvelope(nu, kind="delta")
    th = np.array([0, 0.6, 0.8])
    e = np.array([0.3 - 0.4j, 0.1 + 0.2j, 0])
    mg = MeasurementGrid.for_pulse(pulse, nu)
    l = mg.l_grid(l_center_for(th, 10.0))
    ig = synthesize_interferogram([FarFieldRecord(nu, th, 10.0, e)], standard_setups()[0], l, pulse)
    spec = np.abs(np.fft.rfft(ig.intensities[0, :-1]))
    freqs = 2 * np.pi * np.fft.rfftfreq(l.size - 1, d=l[1] - l[0])
    assert freqs[np.argmax(spec)] == pytest.approx(2 * nu, rel=1e-9)
    assert np.allclose(extract_scattered_field(ig, nu), e[:2], rtol=1e-10)


def test_small_fhat_is_conditioning_error(mgrid, rng):
    th = np.array([0, 0, 1.0])
    ig = synthesize_interferogram(random_records(mgrid, th, 10.0, rng), standard_setups()[0],
                                  mgrid.l_grid(), PULSE, mgrid)
    with pytest.raises(ConditioningError):
        extract_scattered_field(ig, 2.0)


def test_extraction_independent_of_pulse_amplitude(mgrid, rng):
    th = np.array([0.3, 0.1, np.sqrt(0.9)])
    unit = [rng.standard_normal(3) + 1j * rng.standard_normal(3) for _ in mgrid.omegas]
    out = []
    for amp in (1.0, 2.0):
        p = PulseEnvelope(0.45, 0.05, amp)
        recs = [FarFieldRecord(w, th, 10.0, u * p(w)) for w, u in zip(mgrid.omegas, unit)]
        ig = synthesize_interferogram(recs, standard_setups()[1], mgrid.l_grid(l_center_for(th, 10.0)), p, mgrid)
        out.append(extract_scattered_field(ig, 0.45) / p(0.45))
    assert np.allclose(out[0], out[1], rtol=1e-12)


# -- interferogram files -----------------------------------------------------------------------------

def test_interferogram_csv_round_trip(mgrid, rng, tmp_path):
    th = np.array([0.6, 0.0, 0.8])
    ig = synthesize_interferogram(random_records(mgrid, th, 10.0, rng), standard_setups()[0],
                                  mgrid.l_grid(l_center_for(th, 10.0)), PULSE, mgrid)
    ig.save(tmp_path / "a.csv")
    back = Interferogram.load(tmp_path / "a.csv")
    assert np.array_equal(back.intensities, ig.intensities)
    assert np.array_equal(back.l_grid, ig.l_grid)
    assert back.grid == mgrid and back.pulse == PULSE
    assert np.array_equal(back.theta, th)
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "l,I1,I2"
    (tmp_path / "b.csv").write_text("x,y,z\n1,2,3\n")
    (tmp_path / "b.json").write_text((tmp_path / "a.json").read_text())
    with pytest.raises(ValueError):
        Interferogram.load(tmp_path / "b.csv")


def test_add_noise_level(mgrid, rng):
    th = np.array([0, 0, 1.0])
    ig = synthesize_interferogram(random_records(mgrid, th, 10.0, rng), standard_setups()[0],
                                  mgrid.l_grid(), PULSE, mgrid)
    noisy = add_noise(ig, 0.1, np.random.default_rng(0))
    d = noisy.intensities - ig.intensities
    assert np.std(d) == pytest.approx(0.1 * np.sqrt(np.mean(ig.intensities**2)), rel=0.1)
    assert add_noise(ig, 0.0, rng) is ig
    with pytest.raises(ValueError):
        add_noise(ig, -1.0, rng)


# -- k-space data ----------------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_case(mgrid):
    spec = gaussian_phantom(n=8, sigma=1.0, chi0=0.05)
    th = fibonacci_cap(6, 0.3)
    return spec, th


def simulate(spec, th, mgrid, rho=10.0, scale=1.0):
    sus = rasterize(spec)
    sus = type(sus)(sus.grid, sus.chi0, sus.eps, scale * sus.psi)
    igs, igs0 = simulate_measurements(sus, standard_setups(), mgrid, PULSE, th, rho)
    return extract_kspace(igs, igs0, spec.eps, W)


def test_psi_zero_gives_zero_m(mgrid, small_case):
    spec, th = small_case
    assert np.max(np.abs(simulate(spec, th, mgrid, scale=0.0).m)) == 0


def test_m_tilde_matches_linearized_forward(mgrid, small_case):
    spec, th = small_case
    ks = simulate(spec, th, mgrid)
    sus = rasterize(spec)
    s1, s2 = standard_setups()
    for w in W:
        idx = ks.omegas == w
        f = [linearized_far_fields(sus, s.p, w, th, 10.0) for s in (s1, s2)]
        pred = m_tilde_from_fields(f, [s1.eta, s2.eta], w, 10.0)
        assert rel(ks.m[idx], pred) <= 1e-3


def test_m_tilde_rho_invariance(mgrid, small_case):
    spec, th = small_case
    a, b = simulate(spec, th, mgrid, 10.0), simulate(spec, th, mgrid, 23.0)
    assert rel(b.m, a.m) <= 1e-3


def test_m_tilde_linear_in_amplitude(mgrid, small_case):
    spec, th = small_case
    s = np.array([0.5, 1.0, 2.0, 4.0])
    norms = [np.linalg.norm(simulate(spec, th, mgrid, scale=x).m) for x in s]
    slope = np.polyfit(np.log(s), np.log(norms), 1)[0]
    assert abs(slope - 1) <= 0.02


def test_compute_m_tilde_single_point(mgrid, small_case):
    spec, th = small_case
    sus = rasterize(spec)
    igs, igs0 = simulate_measurements(sus, standard_setups(), mgrid, PULSE, th[:1], 10.0)
    one = compute_m_tilde([igs[0][0], igs[1][0]], [igs0[0][0], igs0[1][0]], spec.eps, 0.45)
    ks = extract_kspace(igs, igs0, spec.eps, [0.45])
    assert np.allclose(one.m, ks.m[0])
    assert np.allclose(one.v, [0.45 * th[0, 0], 0.45 * th[0, 1], 0.45 * (1 + th[0, 2])])
    with pytest.raises(ValueError):
        compute_m_tilde([igs[0][0], igs[1][0]], [igs0[0][0], igs0[1][0]], 0.0, 0.45)
