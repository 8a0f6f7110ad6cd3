"""Linear time-varying approximation of the error dynamics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .robot import _disturbance

B_U = np.array(
    [
        [0.0, 0.0],
        [0.0, 0.0],
        [0.0, 0.0],
        [1.0, 0.0],
        [0.0, 1.0],
    ]
)


@dataclass(frozen=True)
class LtvStepModel:
    """``e[k+1] = a_d e[k] + b_u u[k] + b_v v[k] + offset``.

    ``offset`` is zero for a plain discretization and otherwise holds what
    makes the model exact along the nominal trajectory it was built on.
    """

    a_d: np.ndarray = field(repr=False)
    b_u: np.ndarray = field(repr=False)
    b_v: np.ndarray = field(repr=False)
    valid_at: int = 0
    offset: np.ndarray = field(default_factory=lambda: np.zeros(5), repr=False)

    def step(self, e, u, v) -> np.ndarray:
        return self.a_d @ np.asarray(e) + self.b_u @ np.asarray(u) + self.b_v @ _disturbance(v) + self.offset


def jacobian_A(e_tilde, ref) -> np.ndarray:
    """Partial derivatives of the error field with respect to the error."""
    ex, ey, eth, ev, _ = np.asarray(e_tilde, dtype=float)
    v_rd, w_rd, _, _ = _disturbance(ref)
    v = ev + v_rd
    c, s = np.cos(eth), np.sin(eth)
    a = np.zeros((5, 5))
    a[0, 1] = w_rd
    a[0, 2] = -s * v
    a[0, 3] = c
    a[1, 0] = -w_rd
    a[1, 2] = c * v
    a[1, 3] = s
    a[2, 4] = 1.0
    return a


def jacobian_Bv(e_tilde) -> np.ndarray:
    """Partial derivatives of the error field with respect to the disturbance."""
    ex, ey, eth, _, _ = np.asarray(e_tilde, dtype=float)
    b = np.zeros((5, 4))
    b[0, 0] = np.cos(eth) - 1.0
    b[0, 1] = ey
    b[1, 0] = np.sin(eth)
    b[1, 1] = -ex
    b[3, 2] = -1.0
    b[4, 3] = -1.0
    return b


def discretize(a, b_u, b_v, ts: float, valid_at: int = 0) -> LtvStepModel:
    """Zero-order-hold discretization through one augmented matrix exponential."""
    if ts <= 0:
        raise ValueError("sampling time must be positive")
    a = np.asarray(a, dtype=float)
    b_u = np.asarray(b_u, dtype=float)
    b_v = np.asarray(b_v, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b_u)) and np.all(np.isfinite(b_v))):
        raise ValueError("non-finite entries in continuous-time model")
    n, nu, nv = a.shape[0], b_u.shape[1], b_v.shape[1]
    aug = np.zeros((n + nu + nv, n + nu + nv))
    aug[:n, :n] = a
    aug[:n, n : n + nu] = b_u
    aug[:n, n + nu :] = b_v
    phi = expm(aug * ts)
    return LtvStepModel(phi[:n, :n], phi[:n, n : n + nu], phi[:n, n + nu :], valid_at)


def linearize_along(
    nominal: np.ndarray,
    refs: Sequence,
    inputs: Sequence,
    ts: float,
    start: int = 0,
) -> list[LtvStepModel]:
    """One model per step of a nominal trajectory (``len(nominal) - 1`` steps).

    Each model carries the offset that reproduces ``nominal[i + 1]`` exactly
    from ``nominal[i]`` and ``inputs[i]``.
    """
    models = []
    for i in range(len(nominal) - 1):
        v = _disturbance(refs[i])
        m = discretize(jacobian_A(nominal[i], v), B_U, jacobian_Bv(nominal[i]), ts, start + i)
        u = np.asarray(inputs[i], dtype=float)
        offset = nominal[i + 1] - m.a_d @ nominal[i] - m.b_u @ u - m.b_v @ v
        models.append(LtvStepModel(m.a_d, m.b_u, m.b_v, start + i, offset))
    return models
