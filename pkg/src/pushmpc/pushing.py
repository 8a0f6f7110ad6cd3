"""Quasistatic model of a square object pushed through a flat line contact.

Contact forces are split along the friction-cone edges at the two extreme
points of the line contact, mapped to a wrench by the grasp matrix and to an
object twist by an ellipsoidal limit surface.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate


@dataclass(frozen=True)
class FrictionParams:
    mu_contact: float = 0.6
    mu_support: float = 0.3
    object_mass: float = 1.0
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("mu_contact", "mu_support", "object_mass", "gravity"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class ObjectGeometry:
    """Square object of side ``2 * half_side`` at world pose ``pose``."""

    half_side: float = 0.1
    pose: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not np.isfinite(self.half_side) or self.half_side <= 0:
            raise ValueError(f"half_side must be positive, got {self.half_side}")

    @property
    def circumradius(self) -> float:
        return float(np.sqrt(2.0) * self.half_side)


@dataclass(frozen=True)
class ContactForces:
    """Cone-edge force components, ordered ``[f1R, f1L, f2R, f2L]``."""

    f1R: float = 0.0
    f1L: float = 0.0
    f2R: float = 0.0
    f2L: float = 0.0

    @classmethod
    def from_array(cls, f) -> "ContactForces":
        f = np.asarray(f, dtype=float).reshape(4)
        return cls(*(float(x) for x in f))

    def as_array(self) -> np.ndarray:
        return np.array([self.f1R, self.f1L, self.f2R, self.f2L])

    def in_cone(self, tol: float = 0.0) -> bool:
        return bool(np.all(self.as_array() >= -tol))


@dataclass(frozen=True)
class GraspMatrix:
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        if np.shape(self.entries) != (3, 4):
            raise ValueError("grasp matrix must be 3x4")

    def wrench(self, fc) -> np.ndarray:
        return self.entries @ _force_array(fc)


@dataclass(frozen=True)
class LimitSurface:
    h_matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        h = np.asarray(self.h_matrix, dtype=float)
        if h.shape != (3, 3):
            raise ValueError("limit surface matrix must be 3x3")
        if not np.allclose(h, h.T):
            raise ValueError("limit surface matrix must be symmetric")
        if np.min(np.linalg.eigvalsh(h)) <= 0:
            raise ValueError("limit surface matrix must be positive definite")

    @property
    def max_force(self) -> float:
        return float(1.0 / np.sqrt(self.h_matrix[0, 0]))

    @property
    def max_torque(self) -> float:
        return float(1.0 / np.sqrt(self.h_matrix[2, 2]))


def _force_array(fc) -> np.ndarray:
    if isinstance(fc, ContactForces):
        return fc.as_array()
    return np.asarray(fc, dtype=float).reshape(4)


def friction_half_angle(mu: float) -> float:
    """Half-angle of the Coulomb friction cone, ``arctan(mu)``."""
    if not np.isfinite(mu) or mu <= 0:
        raise ValueError(f"friction coefficient must be positive, got {mu}")
    return float(np.arctan(mu))


def grasp_matrix(theta_r: float, theta_mu: float, half_side: float) -> GraspMatrix:
    """Map ``[f1R, f1L, f2R, f2L]`` to the world wrench about the object COM.

    ``theta_r`` is the pushing direction (robot heading). Column ``i`` holds
    the world-frame direction of component ``i`` and its torque arm; the
    torque rows assume the pushed face is flush with the bumper.
    """
    if half_side <= 0:
        raise ValueError("half_side must be positive")
    if not 0.0 <= theta_mu < np.pi / 2:
        raise ValueError("theta_mu must lie in [0, pi/2)")
    s = half_side
    cm, sm = np.cos(theta_mu), np.sin(theta_mu)
    right, left = theta_r - theta_mu, theta_r + theta_mu
    g = np.array(
        [
            [np.cos(right), np.cos(left), np.cos(right), np.cos(left)],
            [np.sin(right), np.sin(left), np.sin(right), np.sin(left)],
            [s * (cm + sm), s * (cm - sm), s * (sm - cm), -s * (cm + sm)],
        ]
    )
    return GraspMatrix(g)


@lru_cache(maxsize=64)
def mean_support_radius(half_side: float) -> float:
    """Mean distance from the centre over a uniformly pressed square footprint."""
    if half_side <= 0:
        raise ValueError("half_side must be positive")
    # one eighth of the square, 0 <= y <= x <= a
    val, _ = integrate.dblquad(
        lambda y, x: np.hypot(x, y), 0.0, half_side, 0.0, lambda x: x,
        epsabs=1e-13, epsrel=1e-11,
    )
    return 8.0 * val / (2.0 * half_side) ** 2


def limit_surface_matrix(params: FrictionParams, geom: ObjectGeometry) -> LimitSurface:
    """Ellipsoidal limit surface ``diag(1/F^2, 1/F^2, 1/T^2)``.

    ``F = mu_support * m * g`` is the largest friction force the support can
    exert and ``T = F * c`` the largest friction torque, ``c`` being the mean
    radius of the uniform pressure patch.
    """
    f_max = params.mu_support * params.object_mass * params.gravity
    t_max = f_max * mean_support_radius(float(geom.half_side))
    return LimitSurface(np.diag([1.0 / f_max**2, 1.0 / f_max**2, 1.0 / t_max**2]))


def object_twist(ls: LimitSurface, g: GraspMatrix, fc) -> np.ndarray:
    """Object twist ``(xdot, ydot, thetadot)`` produced by the contact forces."""
    return ls.h_matrix @ (g.entries @ _force_array(fc))


def point_forces(g: GraspMatrix, fc) -> tuple[np.ndarray, np.ndarray]:
    """Net planar force at each of the two contact points."""
    f = _force_array(fc)
    d = g.entries[:2]
    return d[:, :2] @ f[:2], d[:, 2:] @ f[2:]
