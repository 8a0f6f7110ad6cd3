"""Dense convex QP solver.

Solves ``min 1/2 z'Pz + q'z  s.t.  Gz <= h,  lower <= z <= upper`` with a
Mehrotra predictor-corrector interior-point method. The interior-point
solution is then polished by solving the equality-constrained KKT system of
the identified active set, which recovers the exact optimum whenever the
active set is identified correctly. A warm start is used only to guess that
active set before any interior-point iteration runs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

OPTIMAL = "optimal"
MAX_ITERS = "max_iters"
INFEASIBLE = "infeasible"

_IPM_ITER_CAP = 200


@dataclass
class QpProblem:
    p_matrix: np.ndarray
    q_vec: np.ndarray
    g_matrix: Optional[np.ndarray] = None
    h_vec: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.array(self.p_matrix, dtype=float, ndmin=2)
        n = p.shape[0]
        if p.shape != (n, n):
            raise ValueError("P must be square")
        p = 0.5 * (p + p.T)
        if n and np.min(np.linalg.eigvalsh(p)) < -1e-10 * max(1.0, np.abs(p).max()):
            raise ValueError("P must be positive semidefinite")
        self.p_matrix = p
        self.q_vec = np.asarray(self.q_vec, dtype=float).reshape(n)
        if self.g_matrix is None:
            self.g_matrix = np.zeros((0, n))
            self.h_vec = np.zeros(0)
        self.g_matrix = np.asarray(self.g_matrix, dtype=float).reshape(-1, n)
        self.h_vec = np.asarray(self.h_vec, dtype=float).reshape(self.g_matrix.shape[0])
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float).reshape(n)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).reshape(n)
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(np.isnan(self.h_vec)) or not np.all(np.isfinite(self.g_matrix)):
            raise ValueError("non-finite constraint data")

    @property
    def n(self) -> int:
        return self.q_vec.shape[0]

    @property
    def m(self) -> int:
        return self.h_vec.shape[0]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.p_matrix @ z + self.q_vec @ z)


@dataclass
class QpSolution:
    z_star: np.ndarray
    objective: float
    status: str
    kkt_residuals: tuple[float, float, float]
    duals: np.ndarray = field(repr=False)
    iterations: int = 0
    polished: bool = False


def kkt_residuals(prob: QpProblem, z, duals) -> tuple[float, float, float]:
    """Infinity-norm KKT residuals ``(stationarity, primal, complementarity)``.

    ``duals`` stacks the multipliers of ``Gz <= h``, of ``z >= lower`` and of
    ``z <= upper``. Negative multipliers count as complementarity violation.
    """
    n, m = prob.n, prob.m
    z = np.asarray(z, dtype=float)
    duals = np.asarray(duals, dtype=float)
    if duals.shape != (m + 2 * n,):
        raise ValueError(f"expected {m + 2 * n} multipliers, got {duals.shape}")
    lam, lam_lo, lam_up = duals[:m], duals[m : m + n], duals[m + n :]
    grad = prob.p_matrix @ z + prob.q_vec + prob.g_matrix.T @ lam - lam_lo + lam_up
    stationarity = float(np.max(np.abs(grad), initial=0.0))

    slack_g = prob.h_vec - prob.g_matrix @ z
    with np.errstate(invalid="ignore"):
        slack_lo = z - prob.lower
        slack_up = prob.upper - z
    primal = float(max(
        np.max(-slack_g, initial=0.0),
        np.max(-slack_lo, initial=0.0),
        np.max(-slack_up, initial=0.0),
    ))

    def comp(lmb, slack):
        finite = np.isfinite(slack)
        c = np.abs(lmb[finite] * slack[finite])
        # a multiplier on an infinite bound must vanish
        return max(np.max(c, initial=0.0), np.max(np.abs(lmb[~finite]), initial=0.0))

    complementarity = max(
        comp(lam, slack_g),
        comp(lam_lo, slack_lo),
        comp(lam_up, slack_up),
        float(np.max(-duals, initial=0.0)),
    )
    return stationarity, primal, float(complementarity)


class _Stacked:
    """All inequalities as ``A z <= b`` with finite bounds turned into rows."""

    def __init__(self, prob: QpProblem):
        n, m = prob.n, prob.m
        lo_idx = np.flatnonzero(np.isfinite(prob.lower))
        up_idx = np.flatnonzero(np.isfinite(prob.upper))
        eye = np.eye(n)
        self.a = np.vstack([prob.g_matrix, -eye[lo_idx], eye[up_idx]])
        self.b = np.concatenate([prob.h_vec, -prob.lower[lo_idx], prob.upper[up_idx]])
        # position of each stacked row inside the (m + 2n) dual vector
        self.slot = np.concatenate([np.arange(m), m + lo_idx, m + n + up_idx]).astype(int)
        self.n, self.m_full = n, m + 2 * n

    def full_duals(self, lam: np.ndarray) -> np.ndarray:
        out = np.zeros(self.m_full)
        out[self.slot] = lam
        return out


def _solve_kkt_newton(k: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        c = linalg.cho_factor(k, check_finite=False)
        return linalg.cho_solve(c, rhs, check_finite=False)
    except linalg.LinAlgError:
        reg = 1e-10 * max(1.0, np.abs(np.diag(k)).max())
        return np.linalg.lstsq(k + reg * np.eye(k.shape[0]), rhs, rcond=None)[0]


def _max_step(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-x[neg] / dx[neg])))


def _ipm(p, q, a, b, eps: float, max_iters: int):
    """Primal-dual interior point on ``min 1/2 x'Px + q'x, Ax <= b``.

    Returns ``(x, s, lam, iterations, converged)``.
    """
    n, m = q.shape[0], b.shape[0]
    if m == 0:
        x = -_solve_kkt_newton(p, q)
        return x, np.zeros(0), np.zeros(0), 1, True

    norms = np.linalg.norm(a, axis=1)
    norms[norms == 0] = 1.0
    a = a / norms[:, None]
    b = b / norms

    # starting point: regularized least squares, then shift into the interior
    x = _solve_kkt_newton(p + a.T @ a + 1e-8 * np.eye(n), -q + a.T @ b)
    s = b - a @ x
    s = np.maximum(s, 1.0)
    lam = np.ones(m)

    scale_p = 1.0 + np.max(np.abs(b[np.isfinite(b)]), initial=0.0)
    converged = False
    best = None
    stall = 0
    it = 0
    for it in range(max_iters + 1):
        px, alam = p @ x, a.T @ lam
        r_d = px + q + alam
        r_p = a @ x + s - b
        mu = float(s @ lam) / m
        scale_d = 1.0 + max(np.max(np.abs(q)), np.max(np.abs(px)), np.max(np.abs(alam)))
        merit = max(np.max(np.abs(r_d)) / scale_d, np.max(np.abs(r_p)) / scale_p, mu)
        if best is None or merit < best[0]:
            best = (merit, x, s, lam, it)
            stall = 0
        elif mu < 1e-3 * eps:
            stall += 1
        if merit <= eps:
            converged = True
            break
        # rounding floor reached: further steps only lose accuracy
        if stall >= 5 or it == max_iters:
            break
        w = lam / s
        k = p + (a.T * w) @ a
        k[np.diag_indices_from(k)] += 1e-14 * max(1.0, np.abs(np.diag(k)).max())
        try:
            chol = linalg.cho_factor(k, check_finite=False)

            def solve(rhs):
                return linalg.cho_solve(chol, rhs, check_finite=False)

        except linalg.LinAlgError:
            kinv = np.linalg.pinv(k)

            def solve(rhs):
                return kinv @ rhs

        def newton(e1, e2, e3):
            # P dx + A'dl = e1,  A dx + ds = e2,  lam*ds + s*dl = e3
            dx = solve(e1 - a.T @ ((e3 - lam * e2) / s))
            ds = e2 - a @ dx
            return dx, ds, (e3 - lam * ds) / s

        def direction(r_c):
            rhs = (-r_d, -r_p, -r_c)
            d = newton(*rhs)
            # the reduced matrix gets ill-conditioned as mu -> 0; refine
            # against the full system
            for _ in range(2):
                fix = newton(
                    rhs[0] - (p @ d[0] + a.T @ d[2]),
                    rhs[1] - (a @ d[0] + d[1]),
                    rhs[2] - (lam * d[1] + s * d[2]),
                )
                d = tuple(u + v for u, v in zip(d, fix))
            return d

        r_c = s * lam
        dx, ds, dl = direction(r_c)
        alpha = min(_max_step(s, ds), _max_step(lam, dl))
        mu_aff = float((s + alpha * ds) @ (lam + alpha * dl)) / m
        sigma = min(1.0, (mu_aff / mu) ** 3)
        r_c = s * lam + ds * dl - sigma * mu
        dx, ds, dl = direction(r_c)
        alpha = min(1.0, 0.99 * min(_max_step(s, ds), _max_step(lam, dl)))
        x = x + alpha * dx
        s = s + alpha * ds
        lam = lam + alpha * dl
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(lam))) or np.max(lam) > 1e14:
            break
    _, x, s, lam, it_best = best
    return x, s * norms, lam / norms, max(it, it_best), converged


def _polish(prob: QpProblem, st: _Stacked, active: np.ndarray):
    """Solve the KKT system with ``active`` rows as equalities."""
    n = prob.n
    a_act = st.a[active]
    k = a_act.shape[0]
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = prob.p_matrix
    kkt[:n, n:] = a_act.T
    kkt[n:, :n] = a_act
    rhs = np.concatenate([-prob.q_vec, st.b[active]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    if not np.all(np.isfinite(sol)):
        return None
    lam = np.zeros(st.a.shape[0])
    lam[active] = sol[n:]
    return sol[:n], lam


def _residual_norm(r) -> float:
    return max(r)


def _phase_one(prob: QpProblem, st: _Stacked, tol: float):
    """Least-violation point: minimize the sum of general-constraint
    violations while honouring the bounds."""
    n, m = prob.n, prob.m
    if m == 0:
        return np.clip(np.zeros(n), prob.lower, prob.upper), 0.0
    nv = n + m
    p = np.zeros((nv, nv))
    p[:n, :n] = 1e-10 * np.eye(n)
    q = np.concatenate([np.zeros(n), np.ones(m)])
    rows = [np.hstack([prob.g_matrix, -np.eye(m)]), np.hstack([np.zeros((m, n)), -np.eye(m)])]
    rhs = [prob.h_vec, np.zeros(m)]
    nb = st.a.shape[0] - m
    if nb:
        rows.append(np.hstack([st.a[m:], np.zeros((nb, m))]))
        rhs.append(st.b[m:])
    x, *_ = _ipm(p, q, np.vstack(rows), np.concatenate(rhs), 1e-12, _IPM_ITER_CAP)
    z = np.clip(x[:n], prob.lower, prob.upper)
    viol = float(np.max(prob.g_matrix @ z - prob.h_vec, initial=0.0))
    return z, viol


def solve_qp(
    prob: QpProblem,
    warm_start=None,
    tol: float = 1e-6,
    max_iters: int = 4000,
) -> QpSolution:
    """Solve a convex QP; never raises on infeasibility (see ``status``)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    st = _Stacked(prob)
    n = prob.n

    def finish(z, lam_stacked, status, iters, polished):
        duals = st.full_duals(lam_stacked)
        res = kkt_residuals(prob, z, duals)
        return QpSolution(z, prob.objective(z), status, res, duals, iters, polished)

    def try_polish(active):
        out = _polish(prob, st, active)
        if out is None:
            return None
        z, lam = out
        res = kkt_residuals(prob, z, st.full_duals(lam))
        return z, lam, res

    if warm_start is not None and st.a.shape[0]:
        zw = np.asarray(warm_start, dtype=float).reshape(n)
        gap = st.a @ zw - st.b
        active = gap >= -1e-9 * (1.0 + np.abs(st.b))
        cand = try_polish(active)
        if cand is not None and _residual_norm(cand[2]) <= tol:
            return finish(cand[0], cand[1], OPTIMAL, 0, True)

    x, s, lam, iters, converged = _ipm(
        prob.p_matrix, prob.q_vec, st.a, st.b, min(1e-10, tol * 1e-3), min(max_iters, _IPM_ITER_CAP)
    )
    best_z, best_lam = x, np.maximum(lam, 0.0)
    best_res = kkt_residuals(prob, best_z, st.full_duals(best_lam))
    polished = False
    if st.a.shape[0] and np.all(np.isfinite(x)):
        cand = try_polish(lam > s)
        if cand is not None and _residual_norm(cand[2]) < _residual_norm(best_res):
            best_z, best_lam, best_res = cand
            polished = True
    if _residual_norm(best_res) <= tol:
        return finish(best_z, best_lam, OPTIMAL, iters, polished)

    # not solved to tolerance: fall back to the least-violation point if the
    # interior-point iterate is not itself feasible
    if not np.all(np.isfinite(best_z)) or best_res[1] > tol:
        z1, viol = _phase_one(prob, st, tol)
        status = INFEASIBLE if viol > tol else MAX_ITERS
        return finish(z1, np.zeros(st.a.shape[0]), status, iters, False)
    return finish(best_z, best_lam, MAX_ITERS, iters, polished)
