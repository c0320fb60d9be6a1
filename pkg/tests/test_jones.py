import numpy as np
import pytest

from psoct.jones import (PolarizationSetup, qwp_matrix, reference_arm, rotation, sample_arm,
                         standard_setups, time_domain_incident)

E1, E2 = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
H = np.sqrt(2) / 2


def test_qwp_at_zero():
    assert np.allclose(qwp_matrix(0.0), np.diag([1, -1j, 1]), atol=0)


def test_basis_vectors_exact():
    assert np.max(np.abs(qwp_matrix(np.pi / 4) @ E1 - [(1 - 1j) / 2, (1 + 1j) / 2, 0])) <= 1e-14
    assert np.max(np.abs(qwp_matrix(np.pi / 4) @ E2 - [(1 + 1j) / 2, (1 - 1j) / 2, 0])) <= 1e-14
    j8 = qwp_matrix(np.pi / 8)
    assert np.max(np.abs(j8 @ j8 @ E1 - [H, H, 0])) <= 1e-14
    assert np.max(np.abs(j8 @ j8 @ E2 - [H, -H, 0])) <= 1e-14


@pytest.mark.parametrize("phi", np.linspace(-3, 3, 13))
def test_unitary_block_and_half_wave(phi):
    j = qwp_matrix(phi)
    assert np.allclose(j @ j.conj().T, np.eye(3), atol=1e-12)
    assert np.allclose(j[2], [0, 0, 1]) and np.allclose(j[:, 2], [0, 0, 1])
    hw = rotation(phi) @ np.diag([1, -1, 1]) @ rotation(-phi)
    assert np.allclose(j @ j, hw, atol=1e-14)


def test_setup_vectors_and_span():
    s1, s2 = standard_setups()
    assert np.allclose(s1.p, [(1 - 1j) / 2, (1 + 1j) / 2, 0])
    assert np.allclose(s2.eta, [H, -H, 0])
    assert abs(np.linalg.det(np.stack([s1.p[:2], s2.p[:2]]))) > 0.5
    assert abs(np.linalg.det(np.stack([s1.eta[:2].real, s2.eta[:2].real]))) > 0.5
    for s in (s1, s2):
        assert np.linalg.norm(s.p) == pytest.approx(1.0)
        assert s.p[2] == 0 and s.eta[2] == 0
    with pytest.raises(ValueError):
        PolarizationSetup(np.array([0, 0, 1.0]))
    assert PolarizationSetup.from_dict(s1.to_dict()).uses_default_plates
    assert not PolarizationSetup(E1, phi1=0.1).uses_default_plates


def test_reference_arm():
    v = np.array([0.3 + 0.1j, -0.2, 0])
    assert np.allclose(reference_arm(v, 2.0, 1.3, 1.3), qwp_matrix(np.pi / 8) @ qwp_matrix(np.pi / 8) @ v)
    out = reference_arm(E1, 1.0, 0.0, -0.5)
    assert np.allclose(out / out[0], [1, 1, 0])          # linear at pi/4
    a = np.angle(reference_arm(E1, 1.0, 0.2, 0.0)[0] / (H + 0j))
    b = np.angle(reference_arm(E1, 1.0, 0.4, 0.0)[0] / (H + 0j))
    assert b == pytest.approx(2 * a)
    with pytest.raises(ValueError):
        reference_arm(E1, 0.0, 0, 0)


def test_sample_arm():
    assert np.allclose(sample_arm(E1, 1.0), [(1 - 1j) / 2, (1 + 1j) / 2, 0])
    assert np.allclose(sample_arm(E2, 1.0), [(1 + 1j) / 2, (1 - 1j) / 2, 0])
    with pytest.raises(ValueError):
        sample_arm(E1, -1.0)


def test_time_domain_incident_circular():
    p1 = standard_setups()[0].p
    nu = 1.3
    t = np.linspace(0, 10, 50)
    e = time_domain_incident(p1, nu, t, 0.0)
    assert np.allclose(e[:, 0] ** 2 + e[:, 1] ** 2, 1 / (2 * np.pi**2))
    s = nu * t
    ref = np.stack([np.cos(np.pi / 4 + s), np.sin(np.pi / 4 + s)], -1) / (np.sqrt(2) * np.pi)
    assert np.allclose(e[:, :2], ref)
    assert np.allclose(time_domain_incident(p1, nu, 0.0, 0.0)[:2], [1 / (2 * np.pi)] * 2)
    lin = time_domain_incident(E1, nu, t, 0.5)
    assert np.allclose(lin[:, 1:], 0)
