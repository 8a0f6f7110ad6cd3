"""Second-order unicycle model and its tracking-error dynamics.

States are ``[x, y, theta, v, omega]``; inputs are the linear and angular
accelerations. The error is expressed in the frame of the reference pose.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def rot2d(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


class _Vector:
    """Mixin giving flat dataclasses an array view."""

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)

    def __array__(self, dtype=None, copy=None):
        return self.as_array() if dtype is None else self.as_array().astype(dtype)

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float).ravel()
        return cls(*(float(x) for x in a))


@dataclass(frozen=True)
class RobotState(_Vector):
    x_r: float = 0.0
    y_r: float = 0.0
    theta_r: float = 0.0
    v_r: float = 0.0
    omega_r: float = 0.0

    def __post_init__(self):
        vals = (self.x_r, self.y_r, self.theta_r, self.v_r, self.omega_r)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("robot state must be finite")
        th = self.theta_r
        if not -np.pi < th <= np.pi:
            th = wrap_angle(th)
        object.__setattr__(self, "theta_r", float(th))


@dataclass(frozen=True)
class ReferenceSample(_Vector):
    x_rd: float = 0.0
    y_rd: float = 0.0
    theta_rd: float = 0.0
    v_rd: float = 0.0
    omega_rd: float = 0.0
    a_rd: float = 0.0
    eps_rd: float = 0.0

    @property
    def state(self) -> np.ndarray:
        """Desired robot state ``xi_d``."""
        return np.array([self.x_rd, self.y_rd, self.theta_rd, self.v_rd, self.omega_rd])

    @property
    def disturbance(self) -> np.ndarray:
        """Measured disturbance ``[v_rd, omega_rd, vdot_rd, omegadot_rd]``."""
        return np.array([self.v_rd, self.omega_rd, self.a_rd, self.eps_rd])

    @property
    def feedforward(self) -> np.ndarray:
        return np.array([self.a_rd, self.eps_rd])


@dataclass(frozen=True)
class ErrorState(_Vector):
    e_xr: float = 0.0
    e_yr: float = 0.0
    e_thr: float = 0.0
    e_vr: float = 0.0
    e_wr: float = 0.0


@dataclass(frozen=True)
class ControlInput(_Vector):
    a_r: float = 0.0
    eps_r: float = 0.0


def _disturbance(ref) -> np.ndarray:
    if isinstance(ref, ReferenceSample):
        return ref.disturbance
    return np.asarray(ref, dtype=float).reshape(4)


def error_from_state(xi, ref: ReferenceSample) -> ErrorState:
    """Tracking error of ``xi`` expressed in the reference frame."""
    d = np.asarray(xi, dtype=float) - ref.state
    c, s = np.cos(ref.theta_rd), np.sin(ref.theta_rd)
    return ErrorState(
        c * d[0] + s * d[1],
        -s * d[0] + c * d[1],
        wrap_angle(d[2]),
        d[3],
        d[4],
    )


def state_from_error(e, ref: ReferenceSample) -> RobotState:
    """Inverse of :func:`error_from_state`."""
    e = np.asarray(e, dtype=float)
    c, s = np.cos(ref.theta_rd), np.sin(ref.theta_rd)
    return RobotState(
        ref.x_rd + c * e[0] - s * e[1],
        ref.y_rd + s * e[0] + c * e[1],
        ref.theta_rd + e[2],
        ref.v_rd + e[3],
        ref.omega_rd + e[4],
    )


def error_dynamics_rhs(e, ref, u) -> np.ndarray:
    """Time derivative of the tracking error.

    ``ref`` is a :class:`ReferenceSample` or the disturbance vector
    ``[v_rd, omega_rd, vdot_rd, omegadot_rd]``.
    """
    ex, ey, eth, ev, ew = np.asarray(e, dtype=float)
    v_rd, w_rd, a_rd, eps_rd = _disturbance(ref)
    a_r, eps_r = np.asarray(u, dtype=float)
    v = ev + v_rd
    return np.array(
        [
            np.cos(eth) * v - v_rd + ey * w_rd,
            np.sin(eth) * v - ex * w_rd,
            ew,
            a_r - a_rd,
            eps_r - eps_rd,
        ]
    )


def rk4_step(e, dist, u, ts: float) -> np.ndarray:
    """One RK4 step with the input held and the reference velocities ramping
    at their sampled accelerations."""
    e = np.asarray(e, dtype=float)
    v0 = _disturbance(dist)
    ramp = np.array([v0[2], v0[3], 0.0, 0.0])

    def f(t, x):
        return error_dynamics_rhs(x, v0 + t * ramp, u)

    h = ts
    k1 = f(0.0, e)
    k2 = f(h / 2, e + h / 2 * k1)
    k3 = f(h / 2, e + h / 2 * k2)
    k4 = f(h, e + h * k3)
    return e + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def predict_nominal(
    e0,
    refs: Sequence,
    inputs: Sequence,
    ts: float,
    p: int,
) -> np.ndarray:
    """Integrate the nonlinear error dynamics over ``p`` steps.

    Returns a ``(p + 1, 5)`` array whose first row is ``e0``.
    """
    if ts <= 0:
        raise ValueError("sampling time must be positive")
    if len(refs) < p or len(inputs) < p:
        raise ValueError(f"need at least {p} references and inputs, got {len(refs)} and {len(inputs)}")
    out = np.empty((p + 1, 5))
    out[0] = np.asarray(e0, dtype=float)
    for i in range(p):
        out[i + 1] = rk4_step(out[i], refs[i], inputs[i], ts)
    return out


def unicycle_arc(pose, v: float, omega: float, dt: float) -> np.ndarray:
    """Exact unicycle pose after ``dt`` at constant ``(v, omega)``."""
    x, y, th = pose
    dth = omega * dt
    if abs(dth) < 1e-9:
        # second-order series avoids the 0/0 in the arc formula
        mid = th + dth / 2
        return np.array([x + v * dt * np.cos(mid), y + v * dt * np.sin(mid), th + dth])
    r = v / omega
    return np.array(
        [
            x + r * (np.sin(th + dth) - np.sin(th)),
            y - r * (np.cos(th + dth) - np.cos(th)),
            th + dth,
        ]
    )
