"""Jones calculus for the quarter-wave plates of the two interferometer arms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_PHI1 = np.pi / 8   # reference-arm plate
DEFAULT_PHI2 = np.pi / 4   # sample-arm plate


def rotation(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def qwp_matrix(phi: float) -> np.ndarray:
    """Quarter-wave plate with fast axis at angle ``phi``, embedded in 3x3.

    ``R(phi) diag(1, -i, 1) R(-phi)``; frequency independent.
    """
    return rotation(phi) @ np.diag([1.0, -1j, 1.0]) @ rotation(-phi)


def reference_arm(v, omega: float, x3, l, phi1: float = DEFAULT_PHI1, c: float = 1.0):
    """Double pass through the reference plate plus the mirror round trip.

    Returns ``J(phi1)^2 v exp(i (omega/c) 2 (x3 - l))``.
    """
    if omega <= 0:
        raise ValueError("Jones operators are defined for omega > 0")
    j2 = qwp_matrix(phi1) @ qwp_matrix(phi1)
    phase = np.exp(1j * (omega / c) * 2.0 * (np.asarray(x3) - np.asarray(l)))
    return (np.asarray(v) @ j2.T) * np.asarray(phase)[..., None]


def sample_arm(v, omega: float, phi2: float = DEFAULT_PHI2):
    """Single pass through the sample-arm plate: ``J(phi2) v``."""
    if omega <= 0:
        raise ValueError("Jones operators are defined for omega > 0")
    return np.asarray(v) @ qwp_matrix(phi2).T


@dataclass(frozen=True)
class PolarizationSetup:
    """Incident linear polarization ``q`` and the vectors it induces.

    ``eta = J(phi1)^2 q`` multiplies the reference field and ``p = J(phi2) q``
    is the polarization of the field hitting the sample.
    """

    q: np.ndarray
    phi1: float = DEFAULT_PHI1
    phi2: float = DEFAULT_PHI2

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(3)
        if q[2] != 0.0:
            raise ValueError("incident polarization must have q_3 = 0")
        object.__setattr__(self, "q", q)

    @property
    def eta(self) -> np.ndarray:
        j = qwp_matrix(self.phi1)
        return j @ (j @ self.q)

    @property
    def p(self) -> np.ndarray:
        return qwp_matrix(self.phi2) @ self.q

    @property
    def uses_default_plates(self) -> bool:
        return (np.isclose(self.phi1, DEFAULT_PHI1, atol=1e-15)
                and np.isclose(self.phi2, DEFAULT_PHI2, atol=1e-15))

    def to_dict(self):
        return {"q": self.q.tolist(), "phi1": self.phi1, "phi2": self.phi2}

    @classmethod
    def from_dict(cls, d):
        return cls(q=np.asarray(d["q"], dtype=float), phi1=float(d.get("phi1", DEFAULT_PHI1)),
                   phi2=float(d.get("phi2", DEFAULT_PHI2)))


def standard_setups(phi1: float = DEFAULT_PHI1, phi2: float = DEFAULT_PHI2):
    """The two measurements ``q = e_1`` and ``q = e_2``."""
    return (PolarizationSetup(np.array([1.0, 0.0, 0.0]), phi1, phi2),
            PolarizationSetup(np.array([0.0, 1.0, 0.0]), phi1, phi2))


def time_domain_incident(p, nu: float, t, x3, c: float = 1.0):
    """Real incident field for the narrowband limit ``f_hat = delta(w - nu)``.

    ``(1/pi) Re{ p exp(-i nu (x3/c + t)) }``.
    """
    s = nu * (np.asarray(x3) / c + np.asarray(t))
    return np.real(np.asarray(p)[None, :] * np.exp(-1j * np.atleast_1d(s))[:, None]
                   ).reshape(np.shape(s) + (3,)) / np.pi
