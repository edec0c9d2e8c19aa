"""
Cutoffs module with the two radial weight families used by the virial monitors.

Each class returns the radial derivatives phi_R, phi_R', ..., phi_R''''
evaluated on an array of radii. The quadratic-core weight is C^3 and the
mass-localizing one C^4; the second virial identity only needs
(Delta phi_R)', which is continuous for both.

QuadraticCore:  phi(s) = s^2 on s <= 1, constant 19/5 on s >= 3, phi'' <= 2,
                phi_R(r) = R^2 phi(r / R). On [1, 3], with t = s - 1,
                phi'(t) = 2 + 2t - 11/2 t^3 + 31/8 t^4 - 3/4 t^5.
MassLocalizing: psi(s) = 1 on s <= 1, 0 on s >= 2, 0 <= psi <= 1,
                phi_R(r) = R^2 psi(r^2 / R^2). On [1, 2], with t = s - 1,
                psi(t) = 1 - (126 t^5 - 420 t^6 + 540 t^7 - 315 t^8 + 70 t^9).
"""

from abc import ABC, abstractmethod
from enum import Enum
from typing import Tuple

import numpy as np
from numpy.polynomial import Polynomial

Derivatives = Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]


class CutoffKind(Enum):
    """Which virial weight a monitor uses."""
    QUADRATIC_CORE = "quadratic_core"
    MASS_LOCALIZING = "mass_localizing"


class Cutoff(ABC):
    """
    Abstract base class for a radial virial weight phi_R.
    """

    # Outer edge of the transition, in units of R.
    support: float = 1.0

    @abstractmethod
    def derivatives(self, r: np.ndarray, radius: float) -> Derivatives:
        """
        Evaluate phi_R and its first four radial derivatives.

        Args:
            r: Radii (r >= 0)
            radius: The scale R

        Returns:
            (phi, phi', phi'', phi''', phi'''') at each radius
        """

    def laplacians(self, r: np.ndarray, radius: float, dim: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Delta phi_R and Delta^2 phi_R for a radial weight in R^dim.

        Where phi_R is constant or exactly quadratic near the origin the
        closed values are used, which avoids dividing by r = 0.
        """
        phi, d1, d2, d3, d4 = self.derivatives(r, radius)
        lap = np.empty_like(r)
        bilap = np.empty_like(r)
        core = r < radius * self.core_edge
        k = dim - 1
        rr = r[~core]
        lap[~core] = d2[~core] + k * d1[~core] / rr
        bilap[~core] = (
            d4[~core]
            + k * (d3[~core] / rr - 2.0 * d2[~core] / rr**2 + 2.0 * d1[~core] / rr**3)
            + k * (d3[~core] + k * (d2[~core] / rr - d1[~core] / rr**2)) / rr
        )
        lap[core] = self.core_laplacian(dim)
        bilap[core] = 0.0
        return lap, bilap

    def laplacian_slope(self, r: np.ndarray, radius: float, dim: int) -> np.ndarray:
        """
        (Delta phi_R)' = phi''' + (d-1) (phi'' / r - phi' / r^2).

        It vanishes on the core and past the support, so -int Delta^2 phi_R |u|^2
        can be taken as int (Delta phi_R)' (|u|^2)' with no boundary terms.
        """
        r = np.asarray(r, dtype=float)
        _, d1, d2, d3, _ = self.derivatives(r, radius)
        slope = np.zeros_like(r)
        outside = r >= radius * self.core_edge
        rr = r[outside]
        slope[outside] = d3[outside] + (dim - 1) * (d2[outside] / rr - d1[outside] / rr**2)
        return slope

    def gradient_sup(self) -> float:
        """sup_r |phi_R'(r)| / R, sampled finely on [0, support R]."""
        r = np.linspace(0.0, self.support, 40001)
        return float(np.max(np.abs(self.derivatives(r, 1.0)[1])))

    @property
    @abstractmethod
    def core_edge(self) -> float:
        """Radius (in units of R) inside which phi_R has its closed core form."""

    @abstractmethod
    def core_laplacian(self, dim: int) -> float:
        """Delta phi_R on the core."""


class QuadraticCoreCutoff(Cutoff):
    """
    phi_R = R^2 phi(|x|/R) with phi = |x|^2 near the origin, flat past 3R.
    """

    support = 3.0
    _bridge_prime = Polynomial([2.0, 2.0, 0.0, -5.5, 3.875, -0.75])
    _bridge = _bridge_prime.integ(k=1.0)
    plateau = float(_bridge(2.0))

    @property
    def core_edge(self) -> float:
        return 1.0

    def core_laplacian(self, dim: int) -> float:
        return 2.0 * dim

    def derivatives(self, r: np.ndarray, radius: float) -> Derivatives:
        s = np.asarray(r, dtype=float) / radius
        inner = s <= 1.0
        bridge = (s > 1.0) & (s < 3.0)
        t = s[bridge] - 1.0

        vals = [np.zeros_like(s) for _ in range(5)]
        vals[0][inner] = s[inner] ** 2
        vals[1][inner] = 2.0 * s[inner]
        vals[2][inner] = 2.0
        poly = self._bridge
        for order in range(5):
            vals[order][bridge] = poly(t)
            poly = poly.deriv()
        vals[0][s >= 3.0] = self.plateau

        # chain rule for R^2 phi(r / R)
        scale = [radius**2, radius, 1.0, 1.0 / radius, 1.0 / radius**2]
        return tuple(v * c for v, c in zip(vals, scale))


class MassLocalizingCutoff(Cutoff):
    """
    phi_R = R^2 psi(|x|^2 / R^2) with psi = 1 on the unit ball, 0 past 2.
    """

    support = float(np.sqrt(2.0))
    _drop = Polynomial([0.0, 0.0, 0.0, 0.0, 0.0, 126.0, -420.0, 540.0, -315.0, 70.0])

    @property
    def core_edge(self) -> float:
        return 1.0

    def core_laplacian(self, dim: int) -> float:
        return 0.0

    def _psi(self, s: np.ndarray):
        out = [np.zeros_like(s) for _ in range(5)]
        out[0][s <= 1.0] = 1.0
        bridge = (s > 1.0) & (s < 2.0)
        t = s[bridge] - 1.0
        poly = self._drop
        for order in range(5):
            out[order][bridge] = (1.0 if order == 0 else 0.0) - poly(t)
            poly = poly.deriv()
        return out

    def derivatives(self, r: np.ndarray, radius: float) -> Derivatives:
        r = np.asarray(r, dtype=float)
        s = r**2 / radius**2
        p0, p1, p2, p3, p4 = self._psi(s)
        R2 = radius**2
        phi = R2 * p0
        d1 = 2.0 * r * p1
        d2 = 4.0 * r**2 * p2 / R2 + 2.0 * p1
        d3 = 8.0 * r**3 * p3 / R2**2 + 12.0 * r * p2 / R2
        d4 = 16.0 * r**4 * p4 / R2**3 + 48.0 * r**2 * p3 / R2**2 + 12.0 * p2 / R2
        return phi, d1, d2, d3, d4


class CutoffFactory:
    """
    Factory class for the virial weight families.
    """

    @staticmethod
    def create(kind: CutoffKind) -> Cutoff:
        """Create the cutoff for `kind`."""
        if kind is CutoffKind.QUADRATIC_CORE:
            return QuadraticCoreCutoff()
        return MassLocalizingCutoff()
