"""End-to-end drivers: phantom -> interferograms -> k-space data -> psi~."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import PulseEnvelope
from .forward import DEFAULT_SELF_CELL, OrthotropicSusceptibility, born_far_fields
from .jones import PolarizationSetup
from .measurement import (Interferogram, MeasurementGrid, add_noise, l_center_for,
                          m_tilde_from_values, synthesize_intensities)

log = logging.getLogger(__name__)


def far_field_table(sus: OrthotropicSusceptibility, setups, omegas, thetas, rho: float,
                    order: int = 2, c: float = 1.0, self_rule=DEFAULT_SELF_CELL) -> np.ndarray:
    """Born far fields per unit pulse, shape ``(n_setup, n_omega, n_dir, 3)``."""
    thetas = np.atleast_2d(thetas)
    out = np.empty((len(setups), len(omegas), thetas.shape[0], 3), dtype=complex)
    for k, s in enumerate(setups):
        for n, w in enumerate(omegas):
            out[k, n] = born_far_fields(sus, s.p, w, thetas, rho, order, c, self_rule)
    return out


def synthesize_all(fields, setups, mgrid: MeasurementGrid, pulse: PulseEnvelope, thetas,
                   rho: float, c: float = 1.0):
    """Interferograms ``[setup][direction]`` from a far-field table on ``mgrid``."""
    omegas = np.array([pulse.center_nu]) if pulse.is_delta else mgrid.omegas
    gain = np.ones(1) if pulse.is_delta else pulse(omegas)
    out = []
    for k, s in enumerate(setups):
        row = []
        for d, th in enumerate(np.atleast_2d(thetas)):
            l_grid = mgrid.l_grid(l_center_for(th, rho))
            spectra = fields[k, :, d, :] * gain[:, None]
            inten = synthesize_intensities(spectra, omegas, mgrid.d_omega, s.eta, rho * th[2],
                                           l_grid, pulse, c)
            row.append(Interferogram(l_grid, inten, th.copy(), rho, s, pulse, mgrid))
        out.append(row)
    return out


@dataclass
class KSpaceData:
    """``m~`` on a tensor sweep: ``m[i, k, j]`` at ``(omegas[i], thetas[i])``."""

    omegas: np.ndarray
    thetas: np.ndarray
    m: np.ndarray
    rho: float
    c: float = 1.0


def extract_kspace(igs, igs0, eps: float, omegas, c: float = 1.0) -> KSpaceData:
    """``m~`` at each of ``omegas`` for every direction (``igs[setup][direction]``)."""
    if eps == 0:
        raise ValueError("eps must be nonzero to form M = (I - I0)/eps")
    n_dir = len(igs[0])
    om = np.repeat(np.asarray(omegas, float), n_dir)
    th = np.tile(np.array([ig.theta for ig in igs[0]]), (len(omegas), 1))
    m = np.empty((len(om), 2, 2), dtype=complex)
    for d in range(n_dir):
        for k in range(2):
            ig, ig0 = igs[k][d], igs0[k][d]
            mvals = (ig.intensities - ig0.intensities) / eps
            for n, w in enumerate(omegas):
                m[n * n_dir + d, k] = m_tilde_from_values(mvals, ig.l_grid, w, ig.theta, ig.rho,
                                                          ig.pulse, c)
    return KSpaceData(om, th, m, igs[0][0].rho, c)


def simulate_measurements(sus: OrthotropicSusceptibility, setups, mgrid: MeasurementGrid,
                          pulse: PulseEnvelope, thetas, rho: float, order: int = 2,
                          noise: float = 0.0, rng: Optional[np.random.Generator] = None,
                          c: float = 1.0, self_rule=DEFAULT_SELF_CELL):
    """Measured and background (``eps = 0``) interferograms for every setup and direction.

    Noise, if any, is added to the measured data with std ``noise`` times the
    rms of the scattering part ``I - I0`` (the background is taken as known).
    """
    mgrid.validate()
    omegas = np.array([pulse.center_nu]) if pulse.is_delta else mgrid.omegas
    fields = far_field_table(sus, setups, omegas, thetas, rho, order, c, self_rule)
    fields0 = far_field_table(sus.with_eps(0.0), setups, omegas, thetas, rho, order, c, self_rule)
    igs = synthesize_all(fields, setups, mgrid, pulse, thetas, rho, c)
    igs0 = synthesize_all(fields0, setups, mgrid, pulse, thetas, rho, c)
    if noise > 0:
        rng = rng or np.random.default_rng(0)
        igs = [[add_noise(a, noise, rng, reference=a.intensities - b.intensities)
                for a, b in zip(ra, rb)] for ra, rb in zip(igs, igs0)]
    return igs, igs0
